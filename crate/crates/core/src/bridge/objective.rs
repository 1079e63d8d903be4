use nalgebra::{DMatrix, DVector};

use super::{JointState, PenaltyKind, PenaltySpec};
use crate::data::Dataset;
use crate::error::{Error, Result};

pub(super) fn check_data(data: &Dataset, spec: &PenaltySpec) -> Result<()> {
    spec.validate()?;
    if data.p() != spec.p() {
        return Err(Error::Dimension(format!(
            "data has {} columns, penalty has {} coefficients",
            data.p(),
            spec.p()
        )));
    }
    Ok(())
}

pub(super) fn rss(data: &Dataset, beta: &DVector<f64>) -> f64 {
    (data.response() - data.covariates() * beta).norm_squared()
}

pub(super) fn group_block(v: &DVector<f64>, group: &[usize]) -> DVector<f64> {
    DVector::from_iterator(group.len(), group.iter().map(|&j| v[j]))
}

pub(super) fn metric_norm_sq(v: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    v.dot(&(m * v))
}

/// The coefficient `a` in each scale's term `a/s + (λ/τ)s^r`.
pub fn scale_coefficients(beta: &DVector<f64>, spec: &PenaltySpec) -> Result<DVector<f64>> {
    spec.validate()?;
    if beta.len() != spec.p() {
        return Err(Error::Dimension("β does not match the penalty".into()));
    }
    let d = beta - &spec.center;
    let s2 = spec.sigma * spec.sigma;
    let t = spec.tau;
    Ok(match &spec.kind {
        PenaltyKind::Ridge { .. } => DVector::zeros(0),
        PenaltyKind::Lasso { .. } | PenaltyKind::Lq { .. } => d.map(|x| t * x * x / (2.0 * s2)),
        PenaltyKind::ElasticNet { .. } => d.map(|x| t * x * x / (4.0 * s2)),
        PenaltyKind::GroupLasso {
            groups, metrics, ..
        } => DVector::from_iterator(
            groups.len(),
            groups
                .iter()
                .zip(metrics)
                .map(|(g, m)| t * metric_norm_sq(&group_block(&d, g), m) / (2.0 * s2)),
        ),
    })
}

/// Negative log joint posterior in `(β, s)`, up to an additive constant.
pub fn joint_objective(state: &JointState, data: &Dataset, spec: &PenaltySpec) -> Result<f64> {
    check_data(data, spec)?;
    if state.scales.len() != spec.n_scales() {
        return Err(Error::Dimension(format!(
            "expected {} scales, got {}",
            spec.n_scales(),
            state.scales.len()
        )));
    }
    if let Some(s) = state.scales.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Invalid(format!("scales must be positive, got {s}")));
    }
    let s2 = spec.sigma * spec.sigma;
    let mut f = rss(data, &state.beta) / (2.0 * s2);
    match &spec.kind {
        PenaltyKind::Ridge { delta } => {
            let d = &state.beta - &spec.center;
            f += metric_norm_sq(&d, delta) / (2.0 * s2);
        }
        PenaltyKind::ElasticNet { ridge_center, .. } => {
            f += spec.tau / (4.0 * s2) * (&state.beta - ridge_center).norm_squared();
        }
        _ => {}
    }
    if let Some(lambda) = spec.lambda() {
        let a = scale_coefficients(&state.beta, spec)?;
        let b = lambda / spec.tau;
        let r = spec.r();
        for (aj, sj) in a.iter().zip(state.scales.iter()) {
            f += aj / sj + b * sj.powf(r);
        }
    }
    Ok(f)
}

/// Closed-form minimizer of each `a/s + b·s^r`: `s* = (a/(r b))^{1/(r+1)}`,
/// which is 0 when `a = 0`. Empty for ridge.
pub fn profile_scales(beta: &DVector<f64>, spec: &PenaltySpec) -> Result<DVector<f64>> {
    let a = scale_coefficients(beta, spec)?;
    let Some(lambda) = spec.lambda() else {
        return Ok(a);
    };
    let rb = spec.r() * lambda / spec.tau;
    let e = 1.0 / (spec.r() + 1.0);
    Ok(a.map(|aj| (aj / rb).powf(e)))
}

/// `min_s Σ (a/s + b s^r)`, evaluated in closed form; zero-`a` terms add 0.
pub fn profiled_penalty(beta: &DVector<f64>, spec: &PenaltySpec) -> Result<f64> {
    let a = scale_coefficients(beta, spec)?;
    let Some(lambda) = spec.lambda() else {
        return Ok(0.0);
    };
    let r = spec.r();
    let rb = r * lambda / spec.tau;
    Ok(a.iter()
        .map(|&aj| (r + 1.0) / r * aj.powf(r / (r + 1.0)) * rb.powf(1.0 / (r + 1.0)))
        .sum())
}

/// The factor `K` with `profiled_objective = K · min_s joint_objective`.
pub fn profiled_scale(spec: &PenaltySpec) -> f64 {
    let s2 = spec.sigma * spec.sigma;
    match spec.kind {
        PenaltyKind::Lq { r, .. } => 2.0 * s2 / (r + 1.0),
        _ => s2,
    }
}

/// Penalized least-squares criterion obtained by profiling out the scales,
/// written in its conventional form:
///
/// * ridge: `½‖Y−Xβ‖² + ½(β−β̃₀)'Δ(β−β̃₀)`
/// * lasso: `½‖Y−Xβ‖² + √(2λσ²) Σ|β_j−β̃₀ⱼ|`
/// * elastic net: `½‖Y−Xβ‖² + (τ/4)‖β−β̄₀‖² + √(λσ²) Σ|β_j−β̃₀ⱼ|`
/// * L_q: `(1/(r+1))‖Y−Xβ‖² + (τ^{r−1}2λσ²/r^r)^{1/(r+1)} Σ|β_j−β̃₀ⱼ|^{2r/(r+1)}`
/// * group: `½‖Y−Xβ‖² + √(2λσ²) Σ‖β_G−β̃₀,G‖_{Σ_G}`
pub fn profiled_objective(beta: &DVector<f64>, data: &Dataset, spec: &PenaltySpec) -> Result<f64> {
    check_data(data, spec)?;
    if beta.len() != spec.p() {
        return Err(Error::Dimension("β does not match the penalty".into()));
    }
    let s2 = spec.sigma * spec.sigma;
    let res = rss(data, beta);
    let d = beta - &spec.center;
    Ok(match &spec.kind {
        PenaltyKind::Ridge { delta } => 0.5 * res + 0.5 * metric_norm_sq(&d, delta),
        PenaltyKind::Lasso { lambda } => 0.5 * res + (2.0 * lambda * s2).sqrt() * d.lp_norm(1),
        PenaltyKind::ElasticNet {
            lambda,
            ridge_center,
        } => {
            0.5 * res
                + spec.tau / 4.0 * (beta - ridge_center).norm_squared()
                + (lambda * s2).sqrt() * d.lp_norm(1)
        }
        PenaltyKind::Lq { lambda, r } => {
            let q = 2.0 * r / (r + 1.0);
            let c = (spec.tau.powf(r - 1.0) * 2.0 * lambda * s2 / r.powf(*r)).powf(1.0 / (r + 1.0));
            res / (r + 1.0) + c * d.iter().map(|x| x.abs().powf(q)).sum::<f64>()
        }
        PenaltyKind::GroupLasso {
            lambda,
            groups,
            metrics,
        } => {
            let pen: f64 = groups
                .iter()
                .zip(metrics)
                .map(|(g, m)| metric_norm_sq(&group_block(&d, g), m).sqrt())
                .sum();
            0.5 * res + (2.0 * lambda * s2).sqrt() * pen
        }
    })
}
