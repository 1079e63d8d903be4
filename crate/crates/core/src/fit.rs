//! Posterior computation on the combined weighted data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{LogDensity, ModelFamily, WeightedLikelihood};
use crate::newton::{self, NewtonOptions};
use crate::synth::CatalyticPrior;

/// Exact normal posterior of a gaussian-linear target under a catalytic prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPosterior {
    #[serde(with = "crate::linalg::serde_vec")]
    pub mean: DVector<f64>,
    #[serde(with = "crate::linalg::serde_rows")]
    pub covariance: DMatrix<f64>,
}

/// Posterior mean `(X'WX)⁻¹X'Wy` and covariance `σ²(X'WX)⁻¹` of the
/// combined dataset (observed rows weight 1, synthetic rows weight `τ/M`).
pub fn fit_linear_posterior(
    observed: &Dataset,
    prior: &CatalyticPrior,
    sigma: f64,
) -> Result<LinearPosterior> {
    ModelFamily::Gaussian { sigma }.validate()?;
    let combined = prior.combine(observed)?;
    weighted_least_squares(&combined, sigma)
}

/// Flat-prior counterpart of [`fit_linear_posterior`]: weighted least squares
/// on the observed rows alone.
pub fn fit_linear_flat(observed: &Dataset, sigma: f64) -> Result<LinearPosterior> {
    ModelFamily::Gaussian { sigma }.validate()?;
    weighted_least_squares(observed, sigma)
}

pub(crate) fn weighted_least_squares(data: &Dataset, sigma: f64) -> Result<LinearPosterior> {
    let x = data.covariates();
    let gram = linalg::weighted_gram(x, data.weights());
    let rhs = linalg::weighted_cross(x, data.weights(), data.response());
    let chol = linalg::spd_factor(&gram)?;
    let mean = chol.solve(&rhs);
    let covariance = linalg::spd_inverse_from(&chol) * (sigma * sigma);
    Ok(LinearPosterior { mean, covariance })
}

#[derive(Debug, Clone, Copy)]
pub enum Prior<'a> {
    Flat,
    Catalytic(&'a CatalyticPrior),
}

/// Posterior mode and the curvature there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    #[serde(with = "crate::linalg::serde_vec")]
    pub beta_hat: DVector<f64>,
    #[serde(with = "crate::linalg::serde_rows")]
    pub neg_hessian_at_mode: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub log_posterior: f64,
    /// Log posterior after each accepted Newton step.
    #[serde(default, skip_serializing)]
    pub trace: Vec<f64>,
}

impl MapResult {
    fn from_outcome(out: newton::NewtonOutcome) -> Self {
        Self {
            beta_hat: out.beta,
            neg_hessian_at_mode: out.neg_hessian,
            converged: out.converged,
            iterations: out.iterations,
            final_grad_norm: out.grad_norm,
            log_posterior: out.objective,
            trace: out.trace,
        }
    }

    /// Divergence as the experiment harness counts it: Newton did not
    /// converge, or the mode is implausibly far out.
    pub fn diverged(&self) -> bool {
        !self.converged || self.beta_hat.norm() > 1e3
    }
}

/// Weighted log posterior on observed + synthetic rows.
pub fn log_posterior_data(observed: &Dataset, prior: Prior<'_>) -> Result<Dataset> {
    match prior {
        Prior::Flat => Ok(observed.clone()),
        Prior::Catalytic(cp) => cp.combine(observed),
    }
}

/// Newton MAP of the weighted log posterior, starting from zero.
pub fn fit_map(
    observed: &Dataset,
    family: ModelFamily,
    prior: Prior<'_>,
    opts: &NewtonOptions,
) -> Result<MapResult> {
    let data = log_posterior_data(observed, prior)?;
    if let Prior::Catalytic(_) = prior {
        let rank = linalg::numerical_rank(data.covariates());
        if rank < data.p() {
            return Err(Error::RankDeficient {
                rank,
                cols: data.p(),
            });
        }
    }
    let lik = WeightedLikelihood::new(&data, family)?;
    let out = newton::maximize(&lik, DVector::zeros(data.p()), opts)?;
    Ok(MapResult::from_outcome(out))
}

/// How a covariate column is rescaled by [`standardize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Intercept,
    Binary,
    Numeric,
}

/// Per-column `x ↦ (x − center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub kinds: Vec<ColumnKind>,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        self.check(data)?;
        let x = DMatrix::from_fn(data.n(), data.p(), |i, j| {
            (data.covariates()[(i, j)] - self.centers[j]) / self.scales[j]
        });
        data.replace_covariates(x)
    }

    pub fn invert(&self, data: &Dataset) -> Result<Dataset> {
        self.check(data)?;
        let x = DMatrix::from_fn(data.n(), data.p(), |i, j| {
            data.covariates()[(i, j)] * self.scales[j] + self.centers[j]
        });
        data.replace_covariates(x)
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        if data.p() != self.centers.len() {
            return Err(Error::Dimension(format!(
                "transform has {} columns, data has {}",
                self.centers.len(),
                data.p()
            )));
        }
        Ok(())
    }

    /// Map coefficients on the standardized scale back to the original
    /// covariates. Requires an intercept column whenever some center is nonzero.
    pub fn coefficients_to_original(&self, beta_std: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.to_original_matrix()? * beta_std)
    }

    /// Matrix `L` with `β_original = L β_standardized`.
    pub fn to_original_matrix(&self) -> Result<DMatrix<f64>> {
        let p = self.centers.len();
        let mut l = DMatrix::zeros(p, p);
        let intercept = self.kinds.iter().position(|k| *k == ColumnKind::Intercept);
        for j in 0..p {
            l[(j, j)] = 1.0 / self.scales[j];
            if self.centers[j] != 0.0 {
                let ic = intercept.ok_or_else(|| {
                    Error::Invalid("centering requires an intercept column".into())
                })?;
                l[(ic, j)] = -self.centers[j] / self.scales[j];
            }
        }
        Ok(l)
    }
}

/// Center every non-intercept column; additionally scale numeric columns to
/// standard deviation 0.5. Binary (0/1) columns are only centered. Uses the
/// population (divide-by-n) standard deviation.
pub fn standardize(data: &Dataset) -> Result<(Dataset, Standardization)> {
    let n = data.n();
    if n == 0 {
        return Err(Error::Invalid("cannot standardize an empty dataset".into()));
    }
    let intercept = data.intercept_index();
    let mut kinds = Vec::with_capacity(data.p());
    let mut centers = Vec::with_capacity(data.p());
    let mut scales = Vec::with_capacity(data.p());
    for j in 0..data.p() {
        let col = data.covariates().column(j);
        if Some(j) == intercept {
            kinds.push(ColumnKind::Intercept);
            centers.push(0.0);
            scales.push(1.0);
            continue;
        }
        let mean = col.sum() / n as f64;
        if col.iter().all(|&v| v == 0.0 || v == 1.0) {
            kinds.push(ColumnKind::Binary);
            centers.push(mean);
            scales.push(1.0);
        } else {
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            if !(var > 0.0) {
                return Err(Error::Invalid(format!(
                    "column '{}' has zero variance",
                    data.column_names()[j]
                )));
            }
            kinds.push(ColumnKind::Numeric);
            centers.push(mean);
            scales.push(2.0 * var.sqrt());
        }
    }
    let t = Standardization {
        kinds,
        centers,
        scales,
    };
    Ok((t.apply(data)?, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyOptions {
    pub coef_scale: f64,
    pub intercept_scale: f64,
    pub newton: NewtonOptions,
}

impl Default for CauchyOptions {
    fn default() -> Self {
        Self {
            coef_scale: 2.5,
            intercept_scale: 10.0,
            newton: NewtonOptions::default(),
        }
    }
}

/// Logistic log-likelihood plus independent Cauchy(0, sⱼ) log densities.
struct CauchyPenalized<'a> {
    lik: WeightedLikelihood<'a>,
    scales: Vec<f64>,
}

impl LogDensity for CauchyPenalized<'_> {
    fn dim(&self) -> usize {
        self.lik.dim()
    }

    fn log_density(&self, beta: &DVector<f64>) -> f64 {
        let prior: f64 = beta
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| -(b / s).powi(2).ln_1p())
            .sum();
        self.lik.log_density(beta) + prior
    }

    fn gradient_neg_hessian(&self, beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (mut g, mut h) = self.lik.gradient_neg_hessian(beta);
        for (j, s) in self.scales.iter().enumerate() {
            let (b, s2) = (beta[j], s * s);
            let den = s2 + b * b;
            g[j] -= 2.0 * b / den;
            h[(j, j)] += 2.0 * (s2 - b * b) / (den * den);
        }
        (g, h)
    }

    fn fallback_curvature(&self, beta: &DVector<f64>) -> Option<DMatrix<f64>> {
        // Quadratic majorizer of log(1 + (b/s)²) at the current point.
        let (_, mut h) = self.lik.gradient_neg_hessian(beta);
        for (j, s) in self.scales.iter().enumerate() {
            h[(j, j)] += 2.0 / (s * s + beta[j] * beta[j]);
        }
        Some(h)
    }
}

/// Logistic MAP under independent Cauchy priors on the rescaled covariates.
/// The returned mode and curvature are on the original covariate scale.
pub fn fit_cauchy_map(observed: &Dataset, opts: &CauchyOptions) -> Result<MapResult> {
    if observed.intercept_index().is_none() {
        return Err(Error::Invalid(
            "the Cauchy baseline requires an intercept column".into(),
        ));
    }
    let (std_data, t) = standardize(observed)?;
    let scales = t
        .kinds
        .iter()
        .map(|k| match k {
            ColumnKind::Intercept => opts.intercept_scale,
            _ => opts.coef_scale,
        })
        .collect();
    let dens = CauchyPenalized {
        lik: WeightedLikelihood::new(&std_data, ModelFamily::Bernoulli)?,
        scales,
    };
    let out = newton::maximize(&dens, DVector::zeros(observed.p()), &opts.newton)?;
    let l = t.to_original_matrix()?;
    // β_std = L⁻¹ β, so the curvature in original coordinates is L⁻ᵀ H L⁻¹.
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Invalid("standardization is not invertible".into()))?;
    let h = linalg::symmetrize(&(l_inv.transpose() * &out.neg_hessian * &l_inv));
    let mut res = MapResult::from_outcome(out);
    res.beta_hat = &l * &res.beta_hat;
    res.neg_hessian_at_mode = h;
    Ok(res)
}

/// Value of the Cauchy-penalized objective on the standardized scale at
/// original-scale coefficients `beta`; exposed for optimality probes.
pub fn cauchy_objective(observed: &Dataset, beta: &DVector<f64>, opts: &CauchyOptions) -> Result<f64> {
    let (std_data, t) = standardize(observed)?;
    let l = t.to_original_matrix()?;
    let beta_std = l
        .lu()
        .solve(beta)
        .ok_or_else(|| Error::Invalid("standardization is not invertible".into()))?;
    let scales = t
        .kinds
        .iter()
        .map(|k| match k {
            ColumnKind::Intercept => opts.intercept_scale,
            _ => opts.coef_scale,
        })
        .collect();
    let dens = CauchyPenalized {
        lik: WeightedLikelihood::new(&std_data, ModelFamily::Bernoulli)?,
        scales,
    };
    Ok(dens.log_density(&beta_std))
}
