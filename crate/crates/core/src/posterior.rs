//! Posterior uncertainty beyond the mode: Laplace approximation,
//! random-walk Metropolis, and credible-interval summaries.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::MapResult;
use crate::linalg;
use crate::model::LogDensity;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianApprox {
    #[serde(with = "crate::linalg::serde_vec")]
    pub mean: DVector<f64>,
    #[serde(with = "crate::linalg::serde_rows")]
    pub covariance: DMatrix<f64>,
}

impl GaussianApprox {
    /// `count` independent draws as rows of a matrix.
    pub fn sample(&self, count: usize, stream: RngStream) -> Result<DMatrix<f64>> {
        let chol = linalg::spd_factor(&self.covariance)?;
        let l = chol.l();
        let p = self.mean.len();
        let mut rng = stream.rng();
        let mut out = DMatrix::zeros(count, p);
        let mut z = DVector::zeros(p);
        for i in 0..count {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let x = &self.mean + &l * &z;
            out.row_mut(i).copy_from(&x.transpose());
        }
        Ok(out)
    }
}

/// Gaussian centred at the mode with covariance `(−H)⁻¹`.
pub fn laplace_approx<D: LogDensity + ?Sized>(
    density: &D,
    map: &MapResult,
) -> Result<GaussianApprox> {
    if !map.converged {
        return Err(Error::Invalid(
            "Laplace approximation needs a converged mode".into(),
        ));
    }
    let (_, neg_h) = density.gradient_neg_hessian(&map.beta_hat);
    let chol = neg_h.clone().cholesky().ok_or_else(|| {
        Error::NotPositiveDefinite("negative Hessian at the mode is indefinite".into())
    })?;
    Ok(GaussianApprox {
        mean: map.beta_hat.clone(),
        covariance: linalg::spd_inverse_from(&chol),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetropolisConfig {
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for MetropolisConfig {
    fn default() -> Self {
        Self::with_steps(50_000)
    }
}

impl MetropolisConfig {
    /// 20% burn-in, thinning 5.
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            burn_in: steps / 5,
            thin: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    #[serde(with = "crate::linalg::serde_rows")]
    pub draws: DMatrix<f64>,
    pub acceptance_rate: f64,
    pub accepted: usize,
    pub steps: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub thin: usize,
}

impl SampleMatrix {
    /// Wrap externally produced draws (e.g. read from CSV).
    pub fn from_draws(draws: DMatrix<f64>) -> Self {
        let t = draws.nrows();
        Self {
            draws,
            acceptance_rate: 1.0,
            accepted: t,
            steps: t,
            seed: 0,
            burn_in: 0,
            thin: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }

    pub fn mean(&self) -> DVector<f64> {
        let t = self.draws.nrows() as f64;
        self.draws.row_sum().transpose() / t
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.column(j).iter().cloned().collect()
    }

    /// One draw per row; `names` becomes the header when given.
    pub fn write_csv<W: Write>(&self, writer: W, names: Option<&[String]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let p = self.draws.ncols();
        let header: Vec<String> = match names {
            Some(n) if n.len() == p => n.to_vec(),
            Some(_) => return Err(Error::Dimension("header length mismatch".into())),
            None => (0..p).map(|j| format!("beta{j}")).collect(),
        };
        w.write_record(&header)?;
        for i in 0..self.draws.nrows() {
            w.write_record(self.draws.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<(Self, Vec<String>)> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut vals = Vec::new();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Dimension("ragged sample file".into()));
            }
            for v in rec.iter() {
                vals.push(
                    v.parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("cannot parse draw '{v}'")))?,
                );
            }
            rows += 1;
        }
        let m = DMatrix::from_row_slice(rows, header.len(), &vals);
        Ok((Self::from_draws(m), header))
    }
}

/// `(2.38²/p)·Σ`, the usual random-walk scaling of a posterior covariance.
pub fn default_proposal(approx: &GaussianApprox) -> DMatrix<f64> {
    let p = approx.mean.len() as f64;
    &approx.covariance * (2.38 * 2.38 / p)
}

/// Gaussian random-walk Metropolis.
pub fn rw_metropolis<D: LogDensity + ?Sized>(
    density: &D,
    init: &DVector<f64>,
    proposal_cov: &DMatrix<f64>,
    config: &MetropolisConfig,
    stream: RngStream,
) -> Result<SampleMatrix> {
    let p = density.dim();
    if init.len() != p || proposal_cov.nrows() != p || proposal_cov.ncols() != p {
        return Err(Error::Dimension(format!(
            "init/proposal do not match dimension {p}"
        )));
    }
    if config.steps == 0 || config.thin == 0 {
        return Err(Error::Invalid("steps and thin must be >= 1".into()));
    }
    if config.burn_in >= config.steps {
        return Err(Error::Invalid("burn-in must be shorter than the chain".into()));
    }
    let chol = proposal_cov.clone().cholesky().ok_or_else(|| {
        Error::NotPositiveDefinite("proposal covariance".into())
    })?;
    let l = chol.l();

    let mut x = init.clone();
    let mut lp = density.log_density(&x);
    if !lp.is_finite() {
        return Err(Error::NonFinite("log posterior at the initial value".into()));
    }
    let mut rng = stream.rng();
    let kept = (config.steps - config.burn_in).div_ceil(config.thin);
    let mut draws = DMatrix::zeros(kept, p);
    let mut z = DVector::zeros(p);
    let mut accepted = 0usize;
    let mut row = 0usize;
    for step in 0..config.steps {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let cand = &x + &l * &z;
        let lc = density.log_density(&cand);
        let u: f64 = rng.random();
        if lc.is_finite() && u.ln() < lc - lp {
            x = cand;
            lp = lc;
            accepted += 1;
        }
        if step >= config.burn_in && (step - config.burn_in) % config.thin == 0 {
            draws.row_mut(row).copy_from(&x.transpose());
            row += 1;
        }
    }
    debug_assert_eq!(row, kept);
    Ok(SampleMatrix {
        draws,
        acceptance_rate: accepted as f64 / config.steps as f64,
        accepted,
        steps: config.steps,
        seed: stream.key(),
        burn_in: config.burn_in,
        thin: config.thin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// Linear interpolation between order statistics at `h = (n − 1)·q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and equal-tailed credible interval of scalar draws.
pub fn posterior_summary(draws: &[f64], level: f64) -> Result<PosteriorSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Invalid(format!("level must be in (0, 1), got {level}")));
    }
    if draws.len() < 2 {
        return Err(Error::Invalid("need at least two draws".into()));
    }
    if draws.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("posterior draws".into()));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let alpha = 1.0 - level;
    Ok(PosteriorSummary {
        mean: draws.iter().sum::<f64>() / draws.len() as f64,
        lower: quantile_sorted(&sorted, alpha / 2.0),
        upper: quantile_sorted(&sorted, 1.0 - alpha / 2.0),
        level,
    })
}

/// Monte-Carlo standard error of the mean of a correlated sequence by
/// non-overlapping batch means.
pub fn batch_means_se(draws: &[f64], batches: usize) -> f64 {
    let b = batches.max(2);
    let size = draws.len() / b;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..b)
        .map(|k| draws[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_interpolates_order_statistics() {
        let s = posterior_summary(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.6).unwrap();
        assert_eq!(s.mean, 3.0);
        assert!((s.lower - 1.8).abs() < 1e-12);
        assert!((s.upper - 4.2).abs() < 1e-12);
    }

    #[test]
    fn summary_of_constant_draws() {
        let s = posterior_summary(&[0.7; 10], 0.99).unwrap();
        assert_eq!((s.lower, s.upper), (0.7, 0.7));
        assert!((s.mean - 0.7).abs() < 1e-15);
    }

    #[test]
    fn summary_is_symmetric_for_symmetric_draws() {
        let d: Vec<f64> = (-50..=50).map(|i| i as f64 * 0.1).collect();
        let s = posterior_summary(&d, 0.9).unwrap();
        assert!((s.lower + s.upper).abs() < 1e-12);
    }

    #[test]
    fn summary_rejects_bad_level() {
        assert!(posterior_summary(&[1.0, 2.0], 1.0).is_err());
        assert!(posterior_summary(&[1.0, 2.0], 0.0).is_err());
        assert!(posterior_summary(&[1.0], 0.5).is_err());
    }
}
