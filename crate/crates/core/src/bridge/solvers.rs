//! Direct solvers for the profiled (penalized least-squares) problems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::objective::{check_data, group_block};
use super::{PenaltyKind, PenaltySpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when the largest coordinate change in a sweep is at most this.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 200_000,
            tol: 1e-10,
        }
    }
}

/// Minimizer of `½αt² − γt + C|t|^q` over t, for α > 0, C ≥ 0, 0 < q < 2.
///
/// For q < 1 the function is nonconvex; the global minimizer is either 0 or
/// the stationary point beyond the inflection at
/// `t_m = (Cq(1−q)/α)^{1/(2−q)}`, and both are compared.
pub fn lq_scalar_min(alpha: f64, gamma: f64, c: f64, q: f64) -> f64 {
    if c == 0.0 || gamma == 0.0 {
        return gamma / alpha;
    }
    let sign = gamma.signum();
    let g = gamma.abs();
    if (q - 1.0).abs() < 1e-15 {
        return sign * (g - c).max(0.0) / alpha;
    }
    // h(u) = αu − g + Cq u^{q−1}, the derivative on u > 0.
    let h = |u: f64| alpha * u - g + c * q * u.powf(q - 1.0);
    let hi = g / alpha;
    let lo = if q > 1.0 {
        0.0
    } else {
        let tm = (c * q * (1.0 - q) / alpha).powf(1.0 / (2.0 - q));
        if tm >= hi || h(tm) >= 0.0 {
            return 0.0;
        }
        tm
    };
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if h(m) > 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    let u = 0.5 * (a + b);
    if q < 1.0 {
        let phi = 0.5 * alpha * u * u - g * u + c * u.powf(q);
        if phi >= 0.0 {
            return 0.0;
        }
    }
    sign * u
}

/// Eigen-decomposed group metric for the Σ-norm proximal map.
pub(super) struct MetricEigen {
    q: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl MetricEigen {
    pub(super) fn new(m: &DMatrix<f64>) -> Self {
        let e = SymmetricEigen::new(m.clone());
        Self {
            q: e.eigenvectors,
            lambda: e.eigenvalues,
        }
    }
}

/// `argmin_v ½‖v − z‖² + t·√(v'Σv)`.
///
/// The result is exactly zero when `z'Σ⁻¹z ≤ t²`. Otherwise
/// `v = (I + μΣ)⁻¹z` where μ > 0 solves `Σ_k λ_k c_k² μ² / (1 + μλ_k)² = t²`
/// with `c = Q'z`, found by bisection.
pub fn sigma_norm_prox(z: &DVector<f64>, metric: &DMatrix<f64>, t: f64) -> DVector<f64> {
    sigma_prox_eigen(z, &MetricEigen::new(metric), t)
}

pub(super) fn sigma_prox_eigen(z: &DVector<f64>, me: &MetricEigen, t: f64) -> DVector<f64> {
    let c = me.q.tr_mul(z);
    let dual: f64 = c.iter().zip(me.lambda.iter()).map(|(ck, lk)| ck * ck / lk).sum();
    if dual <= t * t {
        return DVector::zeros(z.len());
    }
    let f = |mu: f64| -> f64 {
        c.iter()
            .zip(me.lambda.iter())
            .map(|(ck, lk)| {
                let v = lk * mu / (1.0 + mu * lk);
                ck * ck * v * v / lk
            })
            .sum::<f64>()
            - t * t
    };
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi || hi - lo <= 1e-12 * hi {
            break;
        }
        if f(m) > 0.0 {
            hi = m;
        } else {
            lo = m;
        }
    }
    let mu = 0.5 * (lo + hi);
    let shrunk = DVector::from_iterator(
        c.len(),
        c.iter()
            .zip(me.lambda.iter())
            .map(|(ck, lk)| ck / (1.0 + mu * lk)),
    );
    &me.q * shrunk
}

/// Minimize the profiled objective of `spec` directly.
///
/// Ridge is solved in closed form, lasso, elastic net and L_q by cyclic
/// coordinate descent with exact one-dimensional updates, and the group
/// problem by accelerated proximal gradient with the Σ-norm proximal map.
/// For L_q with q < 1 the result is a coordinatewise minimum only.
pub fn solve_penalized(data: &Dataset, spec: &PenaltySpec, opts: &SolverOptions) -> Result<DVector<f64>> {
    check_data(data, spec)?;
    let x = data.covariates();
    let y = data.response();
    let s2 = spec.sigma * spec.sigma;
    match &spec.kind {
        PenaltyKind::Ridge { delta } => {
            let a = x.tr_mul(x) + delta;
            let b = x.tr_mul(y) + delta * &spec.center;
            linalg::spd_solve(&linalg::symmetrize(&a), &b)
        }
        PenaltyKind::Lasso { lambda } => {
            let kappa = (2.0 * lambda * s2).sqrt();
            let zero = DVector::zeros(spec.p());
            coordinate_descent(x, y, &spec.center, &zero, 0.0, kappa, 1.0, opts)
        }
        PenaltyKind::ElasticNet {
            lambda,
            ridge_center,
        } => {
            let kappa = (lambda * s2).sqrt();
            coordinate_descent(x, y, &spec.center, ridge_center, spec.tau / 2.0, kappa, 1.0, opts)
        }
        PenaltyKind::Lq { lambda, r } => {
            let q = 2.0 * r / (r + 1.0);
            let c = (spec.tau.powf(r - 1.0) * 2.0 * lambda * s2 / r.powf(*r)).powf(1.0 / (r + 1.0));
            // Dividing the criterion by 2/(r+1) turns the data term into ½‖·‖².
            let c_half = c * (r + 1.0) / 2.0;
            let zero = DVector::zeros(spec.p());
            coordinate_descent(x, y, &spec.center, &zero, 0.0, c_half, q, opts)
        }
        PenaltyKind::GroupLasso {
            lambda,
            groups,
            metrics,
        } => {
            let kappa = (2.0 * lambda * s2).sqrt();
            group_prox_gradient(x, y, &spec.center, groups, metrics, kappa, opts)
        }
    }
}

/// Cyclic coordinate descent on
/// `½‖y − Xβ‖² + (ρ/2)‖β − β̄‖² + C Σ|β_j − β̃_j|^q`.
#[allow(clippy::too_many_arguments)]
fn coordinate_descent(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    center: &DVector<f64>,
    ridge_center: &DVector<f64>,
    rho: f64,
    c: f64,
    q: f64,
    opts: &SolverOptions,
) -> Result<DVector<f64>> {
    let p = x.ncols();
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    if let Some(j) = (0..p).find(|&j| col_sq[j] + rho <= 0.0) {
        return Err(Error::Invalid(format!("column {j} is identically zero")));
    }
    let mut beta = center.clone();
    let mut resid = y - x * &beta;
    for sweep in 0..opts.max_iter {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            let xj = x.column(j);
            let a = col_sq[j] + rho;
            let g = xj.dot(&resid) + col_sq[j] * beta[j] + rho * ridge_center[j];
            let t = lq_scalar_min(a, g - a * center[j], c, q);
            let new = center[j] + t;
            let delta = new - beta[j];
            if delta != 0.0 {
                resid.axpy(-delta, &xj, 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change <= opts.tol {
            log::debug!("coordinate descent converged after {} sweeps", sweep + 1);
            return Ok(beta);
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last: beta.iter().cloned().collect(),
    })
}

fn group_prox_gradient(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    center: &DVector<f64>,
    groups: &[Vec<usize>],
    metrics: &[DMatrix<f64>],
    kappa: f64,
    opts: &SolverOptions,
) -> Result<DVector<f64>> {
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(y);
    let lmax = SymmetricEigen::new(xtx.clone()).eigenvalues.max();
    if !(lmax > 0.0) {
        return Err(Error::Invalid("design has no variation".into()));
    }
    let step = 1.0 / lmax;
    let eig: Vec<MetricEigen> = metrics.iter().map(MetricEigen::new).collect();
    let prox = |v: &DVector<f64>| -> DVector<f64> {
        let mut out = v.clone();
        for (g, me) in groups.iter().zip(&eig) {
            let z = group_block(v, g) - group_block(center, g);
            let w = sigma_prox_eigen(&z, me, step * kappa);
            for (k, &j) in g.iter().enumerate() {
                out[j] = center[j] + w[k];
            }
        }
        out
    };
    let grad = |b: &DVector<f64>| -> DVector<f64> { &xtx * b - &xty };

    let mut beta = center.clone();
    let mut z = beta.clone();
    let mut t = 1.0_f64;
    // The proximal step length understates the distance to the solution,
    // so it is held to a tighter threshold than a coordinate sweep.
    let tol = opts.tol * 1e-2;
    for it in 0..opts.max_iter {
        let next = prox(&(&z - grad(&z) * step));
        let change = (&next - &beta).amax();
        // Adaptive restart when momentum points uphill.
        let uphill = (&z - &next).dot(&(&next - &beta)) > 0.0;
        let t_next = if uphill {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        z = if uphill {
            next.clone()
        } else {
            &next + (&next - &beta) * ((t - 1.0) / t_next)
        };
        t = t_next;
        beta = next;
        if change <= tol {
            log::debug!("proximal gradient converged after {} iterations", it + 1);
            return Ok(beta);
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last: beta.iter().cloned().collect(),
    })
}
