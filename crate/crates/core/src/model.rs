//! Target-model families and their weighted log-likelihoods.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::newton::{self, NewtonOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelFamily {
    /// Linear model with known residual standard deviation.
    Gaussian { sigma: f64 },
    /// Logistic regression; responses in `[0, 1]`.
    Bernoulli,
}

impl ModelFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelFamily::Gaussian { sigma } if !(sigma.is_finite() && *sigma > 0.0) => Err(
                Error::Invalid(format!("gaussian sigma must be finite and > 0, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    /// Mean response at linear predictor `eta`.
    pub fn mean(&self, eta: f64) -> f64 {
        match self {
            ModelFamily::Gaussian { .. } => eta,
            ModelFamily::Bernoulli => sigmoid(eta),
        }
    }

    /// Per-row log density `log f(y | eta)`.
    pub fn log_density(&self, y: f64, eta: f64) -> f64 {
        match self {
            ModelFamily::Gaussian { sigma } => {
                let r = (y - eta) / sigma;
                -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * r * r
            }
            ModelFamily::Bernoulli => y * eta - log1p_exp(eta),
        }
    }

    /// `(d/dη log f, -d²/dη² log f)` for one row.
    fn score_info(&self, y: f64, eta: f64) -> (f64, f64) {
        match self {
            ModelFamily::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                ((y - eta) / s2, 1.0 / s2)
            }
            ModelFamily::Bernoulli => {
                let mu = sigmoid(eta);
                (y - mu, mu * (1.0 - mu))
            }
        }
    }
}

/// `log(1 + e^x)` without overflow.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)`, stable for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    -log1p_exp(-x)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// A log density over a parameter vector, with analytic derivatives.
///
/// Implementations return the gradient together with the *negative* Hessian,
/// which is positive semi-definite for the concave objectives used here.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, theta: &DVector<f64>) -> f64;

    fn gradient_neg_hessian(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);

    /// Positive-definite curvature used by Newton when the negative Hessian
    /// is indefinite (non-concave penalties).
    fn fallback_curvature(&self, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// The weighted log-likelihood `Σ wᵢ log f(yᵢ | xᵢ'β)` of a dataset.
#[derive(Debug, Clone, Copy)]
pub struct WeightedLikelihood<'a> {
    pub data: &'a Dataset,
    pub family: ModelFamily,
}

impl<'a> WeightedLikelihood<'a> {
    pub fn new(data: &'a Dataset, family: ModelFamily) -> Result<Self> {
        family.validate()?;
        if family == ModelFamily::Bernoulli {
            data.check_bernoulli()?;
        }
        Ok(Self { data, family })
    }
}

impl LogDensity for WeightedLikelihood<'_> {
    fn dim(&self) -> usize {
        self.data.p()
    }

    fn log_density(&self, beta: &DVector<f64>) -> f64 {
        let eta = self.data.covariates() * beta;
        let (y, w) = (self.data.response(), self.data.weights());
        let mut s = 0.0;
        for i in 0..eta.len() {
            s += w[i] * self.family.log_density(y[i], eta[i]);
        }
        s
    }

    fn gradient_neg_hessian(&self, beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let x = self.data.covariates();
        let eta = x * beta;
        let (y, w) = (self.data.response(), self.data.weights());
        let n = eta.len();
        let mut r = DVector::zeros(n);
        let mut d = DVector::zeros(n);
        for i in 0..n {
            let (s, v) = self.family.score_info(y[i], eta[i]);
            r[i] = w[i] * s;
            d[i] = w[i] * v;
        }
        (x.tr_mul(&r), linalg::weighted_gram(x, &d))
    }
}

fn check_beta(beta: &DVector<f64>, data: &Dataset) -> Result<()> {
    if beta.len() != data.p() {
        return Err(Error::Dimension(format!(
            "beta has length {} but data has {} covariates",
            beta.len(),
            data.p()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("beta".into()));
    }
    Ok(())
}

/// `Σᵢ wᵢ log f(Yᵢ | Xᵢ, β)`.
pub fn log_likelihood(family: ModelFamily, beta: &DVector<f64>, data: &Dataset) -> Result<f64> {
    check_beta(beta, data)?;
    let ll = WeightedLikelihood::new(data, family)?.log_density(beta);
    if !ll.is_finite() {
        return Err(Error::NonFinite("log-likelihood".into()));
    }
    Ok(ll)
}

/// Analytic gradient and Hessian (not negated) of the weighted log-likelihood.
pub fn log_likelihood_grad_hess(
    family: ModelFamily,
    beta: &DVector<f64>,
    data: &Dataset,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_beta(beta, data)?;
    let (g, nh) = WeightedLikelihood::new(data, family)?.gradient_neg_hessian(beta);
    if g.iter().chain(nh.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient or hessian".into()));
    }
    Ok((g, -nh))
}

/// A fitted simple model `g`: a family, the covariate subset it uses, and
/// coefficients that are exactly zero outside that subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleModelSpec {
    pub family: ModelFamily,
    pub subset: Vec<usize>,
    pub coefficients: Vec<f64>,
}

impl SimpleModelSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        self.family.validate()?;
        if self.coefficients.len() != p {
            return Err(Error::Dimension(format!(
                "simple model has {} coefficients, expected {p}",
                self.coefficients.len()
            )));
        }
        for (j, c) in self.coefficients.iter().enumerate() {
            if !self.subset.contains(&j) && *c != 0.0 {
                return Err(Error::Invalid(format!(
                    "coefficient {j} is outside the subset but nonzero"
                )));
            }
        }
        Ok(())
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.subset.iter().map(|&j| x[j] * self.coefficients[j]).sum()
    }
}

/// Weighted MLE of `family` using only the columns in `subset`. The
/// intercept column, when present, is always included.
pub fn fit_simple_model(
    data: &Dataset,
    subset: &[usize],
    family: ModelFamily,
) -> Result<SimpleModelSpec> {
    family.validate()?;
    if subset.is_empty() {
        return Err(Error::Invalid("simple-model subset is empty".into()));
    }
    if let Some(&j) = subset.iter().find(|&&j| j >= data.p()) {
        return Err(Error::Dimension(format!(
            "subset index {j} out of range for {} covariates",
            data.p()
        )));
    }
    let mut cols: Vec<usize> = subset.to_vec();
    if let Some(ic) = data.intercept_index() {
        cols.push(ic);
    }
    cols.sort_unstable();
    cols.dedup();

    let names: Vec<String> = cols.iter().map(|&j| data.column_names()[j].clone()).collect();
    let sub = Dataset::from_parts(
        data.covariates().select_columns(&cols),
        data.response().clone(),
        None,
        data.weights().clone(),
        names,
    )?;
    let rank = linalg::numerical_rank(sub.covariates());
    if rank < cols.len() {
        return Err(Error::RankDeficient {
            rank,
            cols: cols.len(),
        });
    }

    let psi = match family {
        ModelFamily::Gaussian { .. } => {
            let x = sub.covariates();
            let gram = linalg::weighted_gram(x, sub.weights());
            let rhs = linalg::weighted_cross(x, sub.weights(), sub.response());
            linalg::spd_solve(&gram, &rhs)?
        }
        ModelFamily::Bernoulli => {
            sub.check_bernoulli()?;
            let y = sub.response();
            if y.iter().all(|&v| v <= 0.0) || y.iter().all(|&v| v >= 1.0) {
                return Err(Error::DegenerateResponse(
                    "all responses equal; generate expected-value synthetic responses \
                     directly from the observed proportion instead"
                        .into(),
                ));
            }
            let lik = WeightedLikelihood::new(&sub, family)?;
            let opts = NewtonOptions {
                grad_tol: 1e-10,
                ..NewtonOptions::default()
            };
            let out = newton::maximize(&lik, DVector::zeros(cols.len()), &opts)?;
            if !out.converged {
                log::warn!(
                    "simple model did not converge (gradient norm {:.3e}); using last iterate",
                    out.grad_norm
                );
            }
            out.beta
        }
    };

    let mut coefficients = vec![0.0; data.p()];
    for (k, &j) in cols.iter().enumerate() {
        coefficients[j] = psi[k];
    }
    Ok(SimpleModelSpec {
        family,
        subset: cols,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::INTERCEPT;

    fn ds(x: &[f64], p: usize, y: &[f64], w: &[f64]) -> Dataset {
        let n = y.len();
        let names = (0..p)
            .map(|j| if j == 0 { INTERCEPT.to_owned() } else { format!("x{j}") })
            .collect();
        Dataset::new(
            DMatrix::from_row_slice(n, p, x),
            DVector::from_row_slice(y),
            names,
        )
        .unwrap()
        .with_weights(DVector::from_row_slice(w))
        .unwrap()
    }

    #[test]
    fn bernoulli_at_zero_is_log_half() {
        let d = ds(&[1.0], 1, &[1.0], &[1.0]);
        let ll = log_likelihood(ModelFamily::Bernoulli, &DVector::from_vec(vec![0.0]), &d).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_standard_normal_at_zero() {
        let d = ds(&[1.0], 1, &[0.0], &[2.0]);
        let ll = log_likelihood(
            ModelFamily::Gaussian { sigma: 1.0 },
            &DVector::from_vec(vec![0.0]),
            &d,
        )
        .unwrap();
        assert!((ll - (-1.8378770664093453)).abs() < 1e-12);
    }

    #[test]
    fn fractional_bernoulli_scalar_evaluation() {
        // 0.5·(0.25·(−1) − log(1+e^{−1})), evaluated independently.
        let d = ds(&[1.0, 2.0], 2, &[0.25], &[0.5]);
        let ll = log_likelihood(
            ModelFamily::Bernoulli,
            &DVector::from_vec(vec![1.0, -1.0]),
            &d,
        )
        .unwrap();
        assert!((ll - (-0.2816308437591114)).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_grad_hess_at_zero() {
        let d = ds(&[1.0], 1, &[1.0], &[1.0]);
        let (g, h) =
            log_likelihood_grad_hess(ModelFamily::Bernoulli, &DVector::from_vec(vec![0.0]), &d)
                .unwrap();
        assert_eq!(g[0], 0.5);
        assert_eq!(h[(0, 0)], -0.25);
    }

    #[test]
    fn log1p_exp_is_stable() {
        assert_eq!(log1p_exp(800.0), 800.0);
        assert!(log1p_exp(-800.0) >= 0.0);
        assert!((log1p_exp(0.0) - 2f64.ln()).abs() < 1e-16);
        assert!(log_sigmoid(-700.0).is_finite());
    }

    #[test]
    fn rejects_out_of_range_bernoulli_and_bad_sigma() {
        let d = ds(&[1.0], 1, &[1.5], &[1.0]);
        assert!(log_likelihood(ModelFamily::Bernoulli, &DVector::zeros(1), &d).is_err());
        let d = ds(&[1.0], 1, &[0.5], &[1.0]);
        assert!(log_likelihood(ModelFamily::Gaussian { sigma: 0.0 }, &DVector::zeros(1), &d).is_err());
        assert!(matches!(
            log_likelihood(ModelFamily::Bernoulli, &DVector::zeros(2), &d),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn simple_model_examples() {
        let d = ds(&[1.0, 1.0, 1.0], 1, &[1.0, 2.0, 3.0], &[1.0; 3]);
        let s = fit_simple_model(&d, &[0], ModelFamily::Gaussian { sigma: 1.0 }).unwrap();
        assert!((s.coefficients[0] - 2.0).abs() < 1e-12);

        let d = ds(&[1.0; 4], 1, &[1.0, 1.0, 0.0, 0.0], &[1.0; 4]);
        let s = fit_simple_model(&d, &[0], ModelFamily::Bernoulli).unwrap();
        assert!(s.coefficients[0].abs() < 1e-10);

        let d = ds(&[1.0; 4], 1, &[1.0, 1.0, 1.0, 0.0], &[1.0; 4]);
        let s = fit_simple_model(&d, &[0], ModelFamily::Bernoulli).unwrap();
        // Scalar Newton on the score 3 − 4σ(b) converges to 1.0986122886681098.
        assert!((s.coefficients[0] - 1.0986122886681098).abs() < 1e-9);
    }

    #[test]
    fn simple_model_zeroes_outside_subset_and_adds_intercept() {
        let d = ds(
            &[1.0, 0.0, 2.0, 1.0, 1.0, -1.0, 1.0, 2.0, 0.5, 1.0, 3.0, 1.5],
            3,
            &[0.0, 1.0, 1.0, 0.0],
            &[1.0; 4],
        );
        let s = fit_simple_model(&d, &[1], ModelFamily::Bernoulli).unwrap();
        assert_eq!(s.subset, vec![0, 1]);
        assert_eq!(s.coefficients[2], 0.0);
        s.validate(3).unwrap();
    }

    #[test]
    fn simple_model_errors() {
        let d = ds(&[1.0; 3], 1, &[1.0, 1.0, 1.0], &[1.0; 3]);
        assert!(matches!(
            fit_simple_model(&d, &[0], ModelFamily::Bernoulli),
            Err(Error::DegenerateResponse(_))
        ));
        let d = ds(&[1.0, 2.0, 1.0, 2.0], 2, &[1.0, 0.0], &[1.0; 2]);
        assert!(matches!(
            fit_simple_model(&d, &[1], ModelFamily::Bernoulli),
            Err(Error::RankDeficient { .. })
        ));
        assert!(fit_simple_model(&d, &[], ModelFamily::Bernoulli).is_err());
    }
}
