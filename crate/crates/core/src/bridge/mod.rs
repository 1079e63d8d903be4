//! Hyperpriors on the scale of synthetic covariates and the penalized
//! least-squares problems they induce.
//!
//! Everything here works with the population form of the prior, where the
//! second moment of the synthetic covariates is given analytically, and on
//! centered data without an intercept. A [`PenaltySpec`] describes one such
//! prior; [`joint_objective`] evaluates the negative log joint posterior in
//! `(β, s)`, [`profile_scales`] minimizes it over `s` in closed form, and
//! [`profiled_objective`] is the resulting penalized least-squares criterion.

mod certify;
mod objective;
mod solvers;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use certify::{certify_equivalence, CertificationReport, CertifyOptions};
pub use objective::{
    joint_objective, profile_scales, profiled_objective, profiled_penalty, profiled_scale,
    scale_coefficients,
};
pub use solvers::{lq_scalar_min, sigma_norm_prox, solve_penalized, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyKind {
    /// `Δ = τ E[X*X*']`.
    Ridge { delta: DMatrix<f64> },
    Lasso { lambda: f64 },
    /// Mixture of a fixed-scale source centred at `ridge_center` (β̄₀) and a
    /// scaled source centred at the spec's `center` (β̃₀).
    ElasticNet { lambda: f64, ridge_center: DVector<f64> },
    /// Hyperprior density ∝ exp(−(λ/τ)s^r); profiled exponent q = 2r/(r+1).
    Lq { lambda: f64, r: f64 },
    /// One scale per group; each group carries its own SPD metric.
    GroupLasso {
        lambda: f64,
        groups: Vec<Vec<usize>>,
        metrics: Vec<DMatrix<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    /// β̃₀, the centre the scaled synthetic source shrinks toward.
    pub center: DVector<f64>,
    pub sigma: f64,
    pub tau: f64,
}

impl PenaltySpec {
    pub fn ridge(delta: DMatrix<f64>, center: DVector<f64>, sigma: f64, tau: f64) -> Self {
        Self {
            kind: PenaltyKind::Ridge { delta },
            center,
            sigma,
            tau,
        }
    }

    pub fn lasso(lambda: f64, center: DVector<f64>, sigma: f64, tau: f64) -> Self {
        Self {
            kind: PenaltyKind::Lasso { lambda },
            center,
            sigma,
            tau,
        }
    }

    pub fn elastic_net(
        lambda: f64,
        ridge_center: DVector<f64>,
        center: DVector<f64>,
        sigma: f64,
        tau: f64,
    ) -> Self {
        Self {
            kind: PenaltyKind::ElasticNet {
                lambda,
                ridge_center,
            },
            center,
            sigma,
            tau,
        }
    }

    pub fn lq(lambda: f64, r: f64, center: DVector<f64>, sigma: f64, tau: f64) -> Self {
        Self {
            kind: PenaltyKind::Lq { lambda, r },
            center,
            sigma,
            tau,
        }
    }

    pub fn group_lasso(
        lambda: f64,
        groups: Vec<Vec<usize>>,
        metrics: Vec<DMatrix<f64>>,
        center: DVector<f64>,
        sigma: f64,
        tau: f64,
    ) -> Self {
        Self {
            kind: PenaltyKind::GroupLasso {
                lambda,
                groups,
                metrics,
            },
            center,
            sigma,
            tau,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PenaltyKind::Ridge { .. } => "ridge",
            PenaltyKind::Lasso { .. } => "lasso",
            PenaltyKind::ElasticNet { .. } => "elastic_net",
            PenaltyKind::Lq { .. } => "lq",
            PenaltyKind::GroupLasso { .. } => "group_lasso",
        }
    }

    pub fn p(&self) -> usize {
        self.center.len()
    }

    /// λ, or `None` for ridge.
    pub fn lambda(&self) -> Option<f64> {
        match &self.kind {
            PenaltyKind::Ridge { .. } => None,
            PenaltyKind::Lasso { lambda }
            | PenaltyKind::ElasticNet { lambda, .. }
            | PenaltyKind::Lq { lambda, .. }
            | PenaltyKind::GroupLasso { lambda, .. } => Some(*lambda),
        }
    }

    /// Hyperprior exponent r (1 except for L_q).
    pub fn r(&self) -> f64 {
        match self.kind {
            PenaltyKind::Lq { r, .. } => r,
            _ => 1.0,
        }
    }

    /// Number of scale parameters: p, the number of groups, or 0 for ridge.
    pub fn n_scales(&self) -> usize {
        match &self.kind {
            PenaltyKind::Ridge { .. } => 0,
            PenaltyKind::GroupLasso { groups, .. } => groups.len(),
            _ => self.p(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if let Some(l) = self.lambda() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Invalid(format!("lambda must be positive, got {l}")));
            }
        }
        match &self.kind {
            PenaltyKind::Ridge { delta } => {
                if delta.nrows() != p || delta.ncols() != p {
                    return Err(Error::Dimension("Δ must be p×p".into()));
                }
                check_spd(delta, "Δ")?;
            }
            PenaltyKind::ElasticNet { ridge_center, .. } => {
                if ridge_center.len() != p {
                    return Err(Error::Dimension("ridge centre must have length p".into()));
                }
            }
            PenaltyKind::Lq { r, .. } => {
                if !(*r > 0.0 && r.is_finite()) {
                    return Err(Error::Invalid(format!("r must be positive, got {r}")));
                }
            }
            PenaltyKind::GroupLasso {
                groups, metrics, ..
            } => {
                if groups.len() != metrics.len() {
                    return Err(Error::Dimension("one metric per group is required".into()));
                }
                let mut seen = vec![false; p];
                for (g, m) in groups.iter().zip(metrics) {
                    if g.is_empty() {
                        return Err(Error::Invalid("empty group".into()));
                    }
                    if m.nrows() != g.len() || m.ncols() != g.len() {
                        return Err(Error::Dimension("group metric size mismatch".into()));
                    }
                    check_spd(m, "group metric")?;
                    for &j in g {
                        if j >= p || seen[j] {
                            return Err(Error::Invalid("groups must partition 0..p".into()));
                        }
                        seen[j] = true;
                    }
                }
                if seen.iter().any(|s| !s) {
                    return Err(Error::Invalid("groups must cover every coefficient".into()));
                }
            }
            PenaltyKind::Lasso { .. } => {}
        }
        Ok(())
    }
}

fn check_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let sym = (m - m.transpose()).amax() <= 1e-12 * (1.0 + m.amax());
    if !sym || m.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(what.into()));
    }
    Ok(())
}

/// A point `(β, s)` of the joint problem.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub beta: DVector<f64>,
    pub scales: DVector<f64>,
}

impl JointState {
    pub fn new(beta: DVector<f64>, scales: DVector<f64>) -> Result<Self> {
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Invalid(format!("scales must be positive, got {s}")));
        }
        Ok(Self { beta, scales })
    }
}
