//! Synthetic covariates and responses, and the weighted catalytic prior.
//!
//! The prior is a synthetic dataset of `M` rows, each carrying weight `τ/M`,
//! so posterior computation is ordinary weighted-likelihood fitting on the
//! concatenation of observed and synthetic rows.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, INTERCEPT};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ModelFamily, SimpleModelSpec};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateScheme {
    /// Each column resampled independently from its observed values.
    MarginalResample,
    /// Whole observed rows resampled.
    JointResample,
    /// A user-supplied `M × p` design, used verbatim.
    FixedMatrix {
        #[serde(with = "crate::linalg::serde_rows")]
        matrix: DMatrix<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    /// The fitted mean of the source model.
    ExpectedValue,
    /// A draw from the fitted predictive distribution.
    Stochastic,
}

impl ResponseMode {
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Bernoulli => ResponseMode::ExpectedValue,
            ModelFamily::Gaussian { .. } => ResponseMode::Stochastic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSource {
    pub model: SimpleModelSpec,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub m: usize,
    pub tau: f64,
    pub scheme: CovariateScheme,
    pub mode: ResponseMode,
    pub sources: Vec<SynthSource>,
    pub seed: u64,
}

/// Synthetic sample size default: `max(400, 4p)`.
pub fn default_m(p: usize) -> usize {
    400.max(4 * p)
}

impl SynthConfig {
    /// Defaults: `τ = p`, `M = max(400, 4p)`, marginal resampling, and the
    /// family's default response mode.
    pub fn with_defaults(p: usize, model: SimpleModelSpec, seed: u64) -> Self {
        let mode = ResponseMode::default_for(model.family);
        Self {
            m: default_m(p),
            tau: p as f64,
            scheme: CovariateScheme::MarginalResample,
            mode,
            sources: vec![SynthSource { model, weight: 1.0 }],
            seed,
        }
    }

    /// Equal-weight mixture over the given source models.
    pub fn mixture(models: Vec<SimpleModelSpec>, m: usize, tau: f64, seed: u64) -> Self {
        let w = 1.0 / models.len() as f64;
        let mode = models
            .first()
            .map_or(ResponseMode::ExpectedValue, |s| ResponseMode::default_for(s.family));
        Self {
            m,
            tau,
            scheme: CovariateScheme::MarginalResample,
            mode,
            sources: models
                .into_iter()
                .map(|model| SynthSource { model, weight: w })
                .collect(),
            seed,
        }
    }

    pub fn weight_per_row(&self) -> f64 {
        self.tau / self.m as f64
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Invalid("synthetic sample size M must be >= 1".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Invalid(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.sources.is_empty() {
            return Err(Error::Invalid("at least one synthetic source is required".into()));
        }
        let mut total = 0.0;
        for s in &self.sources {
            if !(s.weight.is_finite() && s.weight >= 0.0) {
                return Err(Error::Invalid(format!("mixture weight {} < 0", s.weight)));
            }
            total += s.weight;
            s.model.validate(p)?;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        if let CovariateScheme::FixedMatrix { matrix } = &self.scheme {
            if matrix.ncols() != p || matrix.nrows() != self.m {
                return Err(Error::Dimension(format!(
                    "fixed synthetic design is {}x{}, expected {}x{p}",
                    matrix.nrows(),
                    matrix.ncols(),
                    self.m
                )));
            }
        }
        Ok(())
    }
}

/// Draw an `M × p` synthetic design.
pub fn gen_covariates(
    observed: &Dataset,
    scheme: &CovariateScheme,
    m: usize,
    stream: RngStream,
) -> Result<DMatrix<f64>> {
    let p = observed.p();
    if m < p {
        log::warn!("M = {m} < p = {p}: the catalytic prior may be improper");
    }
    match scheme {
        CovariateScheme::FixedMatrix { matrix } => {
            if matrix.ncols() != p {
                return Err(Error::Dimension(format!(
                    "fixed synthetic design has {} columns, expected {p}",
                    matrix.ncols()
                )));
            }
            if linalg::numerical_rank(matrix) < p {
                log::warn!("fixed synthetic design has rank < {p}; the MAP may not be unique");
            }
            Ok(matrix.clone())
        }
        CovariateScheme::MarginalResample | CovariateScheme::JointResample => {
            let n = observed.n();
            if n == 0 {
                return Err(Error::Invalid(
                    "cannot resample covariates from an empty dataset".into(),
                ));
            }
            let x = observed.covariates();
            let mut rng = stream.rng();
            let mut out = DMatrix::zeros(m, p);
            if matches!(scheme, CovariateScheme::JointResample) {
                for i in 0..m {
                    let r = rng.random_range(0..n);
                    out.row_mut(i).copy_from(&x.row(r));
                }
            } else {
                let intercept = observed.intercept_index();
                for j in 0..p {
                    if Some(j) == intercept {
                        out.column_mut(j).fill(1.0);
                        continue;
                    }
                    for i in 0..m {
                        out[(i, j)] = x[(rng.random_range(0..n), j)];
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Synthetic responses for each row of `x_star`.
///
/// With several sources, each row picks one source by mixture weight. Source
/// choice and response noise use separate child streams, so a mixture whose
/// weight is concentrated on the first source reproduces that source exactly.
pub fn gen_responses(
    x_star: &DMatrix<f64>,
    config: &SynthConfig,
    stream: RngStream,
) -> Result<DVector<f64>> {
    let p = x_star.ncols();
    for s in &config.sources {
        if s.model.coefficients.len() != p {
            return Err(Error::Dimension(format!(
                "source model has {} coefficients, design has {p} columns",
                s.model.coefficients.len()
            )));
        }
    }
    if config.sources.is_empty() {
        return Err(Error::Invalid("no synthetic sources".into()));
    }
    let mut pick_rng = stream.split("source", 0).rng();
    let mut noise_rng = stream.split("noise", 0).rng();
    let cumulative: Vec<f64> = config
        .sources
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.weight;
            Some(*acc)
        })
        .collect();

    let mut row = vec![0.0; p];
    let mut y = DVector::zeros(x_star.nrows());
    for i in 0..x_star.nrows() {
        let source = if config.sources.len() == 1 {
            &config.sources[0]
        } else {
            let u: f64 = pick_rng.random::<f64>() * cumulative[cumulative.len() - 1];
            let k = cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(cumulative.len() - 1);
            &config.sources[k]
        };
        for (j, v) in row.iter_mut().enumerate() {
            *v = x_star[(i, j)];
        }
        let family = source.model.family;
        let mean = family.mean(source.model.linear_predictor(&row));
        y[i] = match config.mode {
            ResponseMode::ExpectedValue => mean,
            ResponseMode::Stochastic => match family {
                ModelFamily::Bernoulli => {
                    if noise_rng.random::<f64>() < mean {
                        1.0
                    } else {
                        0.0
                    }
                }
                ModelFamily::Gaussian { sigma } => {
                    let z: f64 = noise_rng.sample(StandardNormal);
                    mean + sigma * z
                }
            },
        };
    }
    Ok(y)
}

/// The synthetic dataset of a catalytic prior, every row weighted `τ/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalyticPrior {
    synthetic: Dataset,
    tau: f64,
    provenance: SynthConfig,
}

impl CatalyticPrior {
    /// Package an already generated synthetic design and responses.
    pub fn assemble(
        x_star: DMatrix<f64>,
        y_star: DVector<f64>,
        column_names: Vec<String>,
        config: SynthConfig,
    ) -> Result<Self> {
        let m = x_star.nrows();
        if m != config.m {
            return Err(Error::Dimension(format!(
                "synthetic design has {m} rows but config says M = {}",
                config.m
            )));
        }
        let w = DVector::from_element(m, config.weight_per_row());
        let synthetic = Dataset::new(x_star, y_star, column_names)?.with_weights(w)?;
        Ok(Self {
            synthetic,
            tau: config.tau,
            provenance: config,
        })
    }

    pub fn synthetic(&self) -> &Dataset {
        &self.synthetic
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn m(&self) -> usize {
        self.synthetic.n()
    }

    pub fn weight_per_row(&self) -> f64 {
        self.provenance.weight_per_row()
    }

    pub fn provenance(&self) -> &SynthConfig {
        &self.provenance
    }

    /// Observed rows (with their own weights) followed by the synthetic rows.
    pub fn combine(&self, observed: &Dataset) -> Result<Dataset> {
        let synth = Dataset::from_parts(
            self.synthetic.covariates().clone(),
            self.synthetic.response().clone(),
            None,
            self.synthetic.weights().clone(),
            observed.column_names().to_vec(),
        )?;
        let obs = Dataset::from_parts(
            observed.covariates().clone(),
            observed.response().clone(),
            None,
            observed.weights().clone(),
            observed.column_names().to_vec(),
        )?;
        obs.concat(&synth)
    }

    /// The same prior with synthetic covariates mapped through `X* ↦ X*·A`
    /// and responses unchanged.
    pub fn transform_covariates(&self, a: &DMatrix<f64>) -> Result<Self> {
        let synthetic = self.synthetic.transform_covariates(a)?;
        let mut provenance = self.provenance.clone();
        if let CovariateScheme::FixedMatrix { matrix } = &mut provenance.scheme {
            *matrix = synthetic.covariates().clone();
        }
        Ok(Self {
            synthetic,
            tau: self.tau,
            provenance,
        })
    }
}

/// Covariates from `config.scheme`, then responses from the configured
/// source(s), packaged with weight `τ/M` per row.
pub fn build_catalytic_prior(observed: &Dataset, config: &SynthConfig) -> Result<CatalyticPrior> {
    config.validate(observed.p())?;
    let master = RngStream::new(config.seed);
    let x_star = gen_covariates(
        observed,
        &config.scheme,
        config.m,
        master.split("covariates", 0),
    )?;
    let y_star = gen_responses(&x_star, config, master.split("responses", 0))?;
    let names = if observed.p() > 0 {
        observed.column_names().to_vec()
    } else {
        vec![INTERCEPT.to_owned()]
    };
    CatalyticPrior::assemble(x_star, y_star, names, config.clone())
}
