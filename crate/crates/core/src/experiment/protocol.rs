//! One subsampling replication: balanced train/test draws, per-method arm
//! fits, and effect estimates compared with the full-data benchmark.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::causal::{log_prob_ratio, ArmFits, ArmPosterior, Subgroup};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::{fit_cauchy_map, fit_map, CauchyOptions, MapResult, Prior};
use crate::linalg;
use crate::model::{fit_simple_model, logit, ModelFamily, SimpleModelSpec};
use crate::newton::NewtonOptions;
use crate::rng::RngStream;
use crate::synth::{
    build_catalytic_prior, gen_covariates, CovariateScheme, ResponseMode, SynthConfig,
};

/// Simple model generating the catalytic prior's synthetic responses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceModel {
    Intercept,
    /// Logistic model on the intercept plus one named covariate.
    Covariate(String),
    /// Equal-weight mixture of the intercept-only model and each
    /// configured single-covariate model.
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Flat,
    Cauchy,
    Catalytic(SourceModel),
}

impl Method {
    pub fn catalytic() -> Self {
        Method::Catalytic(SourceModel::Intercept)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Flat => write!(f, "flat"),
            Method::Cauchy => write!(f, "cauchy"),
            Method::Catalytic(SourceModel::Intercept) => write!(f, "catalytic"),
            Method::Catalytic(SourceModel::Covariate(c)) => write!(f, "catalytic:{c}"),
            Method::Catalytic(SourceModel::Mixture) => write!(f, "catalytic:mixture"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `flat`, `cauchy`, `catalytic`, `catalytic:<column>` or `catalytic:mixture`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "flat" => return Ok(Method::Flat),
            "cauchy" => return Ok(Method::Cauchy),
            "catalytic" | "catalytic:intercept" => return Ok(Method::catalytic()),
            "catalytic:mixture" => return Ok(Method::Catalytic(SourceModel::Mixture)),
            _ => {}
        }
        match s.strip_prefix("catalytic:") {
            Some(col) if !col.is_empty() => Ok(Method::Catalytic(SourceModel::Covariate(col.to_owned()))),
            _ => Err(Error::Invalid(format!("unknown method '{s}'"))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Catalytic prior settings used inside replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalyticSettings {
    pub tau: f64,
    pub m: usize,
    /// Single-covariate sources that join the intercept-only model in the mixture.
    pub mixture_covariates: Vec<String>,
}

impl Default for CatalyticSettings {
    fn default() -> Self {
        Self {
            tau: 24.0,
            m: 400,
            mixture_covariates: ["hsdip", "divwid", "earnpre1y", "emppre1y"]
                .iter()
                .map(|s| (*s).to_owned())
                .collect(),
        }
    }
}

/// How a fitted arm is turned into unit-level effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointEstimate {
    /// Effects evaluated at the posterior modes.
    Map,
    /// Effects averaged over draws from each arm's Laplace approximation.
    LaplaceMean { draws: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub n: usize,
    pub replication: usize,
    pub method: Method,
    pub gamma_avg_by_group: BTreeMap<String, f64>,
    /// Benchmark effect averaged over the same training units.
    pub benchmark_by_group: BTreeMap<String, f64>,
    pub msdpte: f64,
    pub diverged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReplicationResult {
    pub fn squared_deviation(&self, group: &str) -> Option<f64> {
        let g = self.gamma_avg_by_group.get(group)?;
        let b = self.benchmark_by_group.get(group)?;
        Some((g - b).powi(2))
    }
}

/// The default Table A.1 subgroups plus `All`.
pub fn default_groups() -> Vec<Subgroup> {
    use crate::causal::CmpOp::Eq;
    vec![
        Subgroup::all(),
        Subgroup::new("hsdip+", "hsdip", Eq, 1.0),
        Subgroup::new("hsdip-", "hsdip", Eq, 0.0),
        Subgroup::new("age>35", "age35", Eq, 1.0),
        Subgroup::new("age<=35", "age35", Eq, 0.0),
        Subgroup::new("nevmar+", "nevmar", Eq, 1.0),
        Subgroup::new("nevmar-", "nevmar", Eq, 0.0),
        Subgroup::new("divwid+", "divwid", Eq, 1.0),
        Subgroup::new("divwid-", "divwid", Eq, 0.0),
    ]
}

/// Flat-prior MAP of each arm on the full data. A diverged fit is an error.
pub fn benchmark_fit(full: &Dataset) -> Result<ArmFits> {
    let opts = NewtonOptions::default();
    let mut fits = Vec::with_capacity(2);
    for treated in [true, false] {
        let arm = full.arm(treated)?;
        let fit = fit_map(&arm, ModelFamily::Bernoulli, Prior::Flat, &opts)?;
        if fit.diverged() {
            return Err(Error::Invalid(format!(
                "benchmark fit of the {} arm diverged",
                if treated { "treatment" } else { "control" }
            )));
        }
        fits.push(ArmPosterior::Map(fit));
    }
    let control = fits.pop().expect("two arms");
    let treatment = fits.pop().expect("two arms");
    ArmFits::new(treatment, control, full.column_names().to_vec())
}

/// Balanced, disjoint train and test subsamples: `n/2` and `n′/2` units per
/// arm. Both sizes must be even.
pub fn draw_train_test(
    full: &Dataset,
    n: usize,
    n_prime: usize,
    stream: RngStream,
) -> Result<(Dataset, Dataset)> {
    if n % 2 != 0 || n_prime % 2 != 0 || n == 0 {
        return Err(Error::Invalid(format!(
            "train size {n} and test size {n_prime} must be even and positive"
        )));
    }
    let z = full
        .treatment()
        .ok_or_else(|| Error::Invalid("population has no treatment column".into()))?;
    let mut train = Vec::with_capacity(n);
    let mut test = Vec::with_capacity(n_prime);
    for (k, treated) in [true, false].into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..full.n()).filter(|&i| z[i] == treated).collect();
        if n / 2 + n_prime / 2 > idx.len() {
            return Err(Error::Invalid(format!(
                "arm has {} units, cannot draw {} + {}",
                idx.len(),
                n / 2,
                n_prime / 2
            )));
        }
        idx.shuffle(&mut stream.split("arm", k as u64).rng());
        train.extend_from_slice(&idx[..n / 2]);
        test.extend_from_slice(&idx[n / 2..n / 2 + n_prime / 2]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((full.select_rows(&train)?, full.select_rows(&test)?))
}

/// Per-arm coefficients to evaluate effects at.
enum ArmEstimate {
    Point(DVector<f64>),
    Draws(DMatrix<f64>),
}

struct ArmOutcome {
    estimate: ArmEstimate,
    diverged: bool,
    error: Option<String>,
}

fn unit_effects(x: &DMatrix<f64>, t: &ArmEstimate, c: &ArmEstimate) -> Result<Vec<f64>> {
    let point = |a: &ArmEstimate| match a {
        ArmEstimate::Point(b) => vec![b.clone()],
        ArmEstimate::Draws(d) => (0..d.nrows()).map(|k| d.row(k).transpose()).collect(),
    };
    let (bt, bc) = (point(t), point(c));
    let k = bt.len().max(bc.len());
    let mut out = vec![0.0; x.nrows()];
    for (i, o) in out.iter_mut().enumerate() {
        let xi = x.row(i).transpose();
        let mut s = 0.0;
        for d in 0..k {
            s += log_prob_ratio(xi.as_view(), &bt[d % bt.len()], &bc[d % bc.len()])?;
        }
        *o = s / k as f64;
    }
    Ok(out)
}

fn from_map(fit: MapResult, point: PointEstimate, stream: RngStream) -> ArmOutcome {
    let diverged = fit.diverged();
    let estimate = match point {
        PointEstimate::Map => ArmEstimate::Point(fit.beta_hat.clone()),
        PointEstimate::LaplaceMean { draws } => {
            let approx = linalg::spd_factor(&fit.neg_hessian_at_mode).map(|chol| {
                crate::posterior::GaussianApprox {
                    mean: fit.beta_hat.clone(),
                    covariance: linalg::spd_inverse_from(&chol),
                }
            });
            match approx.and_then(|a| a.sample(draws.max(1), stream)) {
                Ok(d) => ArmEstimate::Draws(d),
                Err(_) => ArmEstimate::Point(fit.beta_hat.clone()),
            }
        }
    };
    ArmOutcome {
        estimate,
        diverged,
        error: None,
    }
}

fn failed(p: usize, e: Error) -> ArmOutcome {
    match e {
        // Flat fits on separated data: keep the last iterate, as the paper's
        // runaway estimates do.
        Error::SingularNewton { beta, .. } => ArmOutcome {
            estimate: ArmEstimate::Point(DVector::from_vec(beta)),
            diverged: true,
            error: Some("singular Newton system".into()),
        },
        e => ArmOutcome {
            estimate: ArmEstimate::Point(DVector::from_element(p, f64::NAN)),
            diverged: true,
            error: Some(e.to_string()),
        },
    }
}

/// Intercept-only logistic MLE, computed directly; a degenerate arm is
/// pulled in by half an observation.
fn intercept_model(arm: &Dataset) -> Result<SimpleModelSpec> {
    let ic = arm
        .intercept_index()
        .ok_or_else(|| Error::Invalid("catalytic source needs an intercept column".into()))?;
    let n = arm.total_weight();
    let half = 0.5 / n.max(1.0);
    let rate = arm.weighted_response_mean().clamp(half, 1.0 - half);
    let mut coefficients = vec![0.0; arm.p()];
    coefficients[ic] = logit(rate);
    Ok(SimpleModelSpec {
        family: ModelFamily::Bernoulli,
        subset: vec![ic],
        coefficients,
    })
}

fn covariate_model(arm: &Dataset, column: &str) -> Result<SimpleModelSpec> {
    let j = arm
        .column_index(column)
        .ok_or_else(|| Error::Invalid(format!("unknown source covariate '{column}'")))?;
    match fit_simple_model(arm, &[j], ModelFamily::Bernoulli) {
        Ok(m) if m.coefficients.iter().all(|c| c.abs() < 1e3) => Ok(m),
        Ok(_) | Err(_) => {
            log::debug!("single-covariate source on '{column}' unavailable; using intercept only");
            intercept_model(arm)
        }
    }
}

fn source_models(
    arm: &Dataset,
    source: &SourceModel,
    settings: &CatalyticSettings,
) -> Result<Vec<SimpleModelSpec>> {
    Ok(match source {
        SourceModel::Intercept => vec![intercept_model(arm)?],
        SourceModel::Covariate(c) => vec![covariate_model(arm, c)?],
        SourceModel::Mixture => {
            let mut v = vec![intercept_model(arm)?];
            for c in &settings.mixture_covariates {
                v.push(covariate_model(arm, c)?);
            }
            v
        }
    })
}

/// Everything a replication needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSettings {
    pub methods: Vec<Method>,
    pub catalytic: CatalyticSettings,
    pub groups: Vec<Subgroup>,
    pub point: PointEstimate,
    pub newton: NewtonOptions,
    pub cauchy: CauchyOptions,
}

impl Default for ReplicationSettings {
    fn default() -> Self {
        Self {
            methods: vec![Method::Flat, Method::Cauchy, Method::catalytic()],
            catalytic: CatalyticSettings::default(),
            groups: default_groups(),
            point: PointEstimate::Map,
            newton: NewtonOptions::default(),
            cauchy: CauchyOptions::default(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_arm(
    method: &Method,
    arm: &Dataset,
    x_star: &DMatrix<f64>,
    settings: &ReplicationSettings,
    stream: RngStream,
) -> ArmOutcome {
    let p = arm.p();
    let res = match method {
        Method::Flat => fit_map(arm, ModelFamily::Bernoulli, Prior::Flat, &settings.newton),
        Method::Cauchy => fit_cauchy_map(arm, &settings.cauchy),
        Method::Catalytic(source) => source_models(arm, source, &settings.catalytic).and_then(|models| {
            let mut cfg = SynthConfig::mixture(
                models,
                settings.catalytic.m,
                settings.catalytic.tau,
                stream.split("synthetic-responses", 0).key(),
            );
            cfg.scheme = CovariateScheme::FixedMatrix {
                matrix: x_star.clone(),
            };
            cfg.mode = ResponseMode::ExpectedValue;
            let prior = build_catalytic_prior(arm, &cfg)?;
            fit_map(arm, ModelFamily::Bernoulli, Prior::Catalytic(&prior), &settings.newton)
        }),
    };
    match res {
        Ok(fit) => from_map(fit, settings.point, stream.split("laplace", 0)),
        Err(e) => failed(p, e),
    }
}

fn group_means(values: &[f64], masks: &[(String, Vec<bool>)]) -> BTreeMap<String, f64> {
    masks
        .iter()
        .map(|(label, mask)| {
            let (s, k) = values
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .fold((0.0, 0usize), |(s, k), (v, _)| (s + v, k + 1));
            (label.clone(), if k == 0 { f64::NAN } else { s / k as f64 })
        })
        .collect()
}

/// Fit every method on `train` and compare with the benchmark: average
/// effects over the training units (overall and per subgroup) and the mean
/// squared difference of unit effects on `test`. Method failures are
/// recorded in the results, never returned as errors.
pub fn run_replication(
    train: &Dataset,
    test: &Dataset,
    benchmark: &ArmFits,
    settings: &ReplicationSettings,
    n: usize,
    replication: usize,
    stream: RngStream,
) -> Result<Vec<ReplicationResult>> {
    let bt = ArmEstimate::Point(benchmark.treatment.point());
    let bc = ArmEstimate::Point(benchmark.control.point());
    let bm_train = unit_effects(train.covariates(), &bt, &bc)?;
    let bm_test = unit_effects(test.covariates(), &bt, &bc)?;
    let masks = settings
        .groups
        .iter()
        .map(|g| Ok((g.label.clone(), g.mask(train)?)))
        .collect::<Result<Vec<_>>>()?;
    let benchmark_by_group = group_means(&bm_train, &masks);

    let arm_t = train.arm(true)?;
    let arm_c = train.arm(false)?;
    let needs_synthetic = settings
        .methods
        .iter()
        .any(|m| matches!(m, Method::Catalytic(_)));
    let x_star = if needs_synthetic {
        gen_covariates(
            train,
            &CovariateScheme::MarginalResample,
            settings.catalytic.m,
            stream.split("synthetic-covariates", 0),
        )?
    } else {
        DMatrix::zeros(0, train.p())
    };

    let mut out = Vec::with_capacity(settings.methods.len());
    for (k, method) in settings.methods.iter().enumerate() {
        let ms = stream.split("method", k as u64);
        let ft = fit_arm(method, &arm_t, &x_star, settings, ms.split("arm", 1));
        let fc = fit_arm(method, &arm_c, &x_star, settings, ms.split("arm", 0));
        let error = ft.error.clone().or_else(|| fc.error.clone());
        let gamma_train = unit_effects(train.covariates(), &ft.estimate, &fc.estimate)?;
        let gamma_test = unit_effects(test.covariates(), &ft.estimate, &fc.estimate)?;
        let msdpte = gamma_test
            .iter()
            .zip(&bm_test)
            .map(|(g, b)| (g - b).powi(2))
            .sum::<f64>()
            / gamma_test.len().max(1) as f64;
        out.push(ReplicationResult {
            n,
            replication,
            method: method.clone(),
            gamma_avg_by_group: group_means(&gamma_train, &masks),
            benchmark_by_group: benchmark_by_group.clone(),
            msdpte,
            diverged: ft.diverged || fc.diverged,
            error,
        });
    }
    Ok(out)
}
