//! Command implementations behind the `catalytic` binary.
//!
//! Every command is a thin wrapper over library calls: it reads its inputs,
//! calls the library with the given seed, and writes the result. Errors map
//! onto a small set of exit codes (see [`CommandError`]).

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::{certify_equivalence, CertificationReport, CertifyOptions, PenaltySpec};
use crate::causal::{posterior_effect_distribution, EffectResult, Subgroup};
use crate::data::Dataset;
use crate::error::Error;
use crate::experiment::{
    run_experiment, write_msdpte_csv, write_replications_csv, write_table_csv, ExperimentConfig,
    ExperimentOutcome, Method, SwimSimSpec,
};
use crate::fit::{fit_linear_flat, fit_linear_posterior, fit_map, log_posterior_data, Prior};
use crate::model::{fit_simple_model, ModelFamily, WeightedLikelihood};
use crate::newton::NewtonOptions;
use crate::posterior::{default_proposal, laplace_approx, rw_metropolis, MetropolisConfig, SampleMatrix};
use crate::rng::RngStream;
use crate::synth::{build_catalytic_prior, SynthConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;

/// A failed command: exit code 1 for bad input, 2 for numerical failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandError {
    pub code: u8,
    pub message: String,
}

impl CommandError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Dimension(_) | Error::Invalid(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => {
                Self::usage(message)
            }
            Error::RankDeficient { .. }
            | Error::NotPositiveDefinite(_)
            | Error::SingularNewton { .. }
            | Error::DegenerateResponse(_)
            | Error::NonFinite(_)
            | Error::NoConvergence { .. } => Self::numerical(message),
        }
    }
}

pub type CmdResult<T> = std::result::Result<T, CommandError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = CommandError;
    fn from_str(s: &str) -> CmdResult<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(CommandError::usage(format!("unknown format '{s}' (json or csv)"))),
        }
    }
}

fn create(path: &Path) -> CmdResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| {
            CommandError::usage(format!("cannot create directory {}: {e}", dir.display()))
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CommandError::usage(format!("cannot write {}: {e}", path.display())))
}

fn require_file(path: &Path, what: &str) -> CmdResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CommandError::usage(format!("{what} file {} does not exist", path.display())))
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> CmdResult<T> {
    require_file(path, what)?;
    let text = fs::read_to_string(path)
        .map_err(|e| CommandError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CommandError::usage(format!("invalid {what} in {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    w.write_all(b"\n").map_err(Error::from)?;
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn load_dataset(path: &Path) -> CmdResult<Dataset> {
    require_file(path, "data")?;
    Ok(Dataset::load_csv(path)?)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    /// Population spec JSON; the bundled default when absent.
    pub spec: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub out: PathBuf,
}

/// Written next to the population CSV so the file can be regenerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMetadata {
    pub spec: SwimSimSpec,
    pub rows: usize,
    pub treated: usize,
    pub columns: Vec<String>,
    pub data_file: String,
}

/// `pop.csv` → `pop.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}

pub fn cmd_simulate(opts: &SimulateOptions) -> CmdResult<SimulationMetadata> {
    let mut spec = match &opts.spec {
        Some(p) => read_json::<SwimSimSpec>(p, "population spec")?,
        None => SwimSimSpec::default_v1(),
    };
    if let Some(seed) = opts.seed {
        spec.seed = seed;
    }
    if let Some(n) = opts.n {
        spec.n = n;
    }
    let pop = crate::experiment::simulate_population(&spec)?;
    let mut w = create(&opts.out)?;
    pop.data.write_csv(&mut w)?;
    w.flush().map_err(Error::from)?;

    let meta = SimulationMetadata {
        rows: pop.data.n(),
        treated: pop.data.treatment().map_or(0, |z| z.iter().filter(|&&t| t).count()),
        columns: pop.data.column_names().to_vec(),
        data_file: opts
            .out
            .file_name()
            .map_or_else(String::new, |f| f.to_string_lossy().into_owned()),
        spec,
    };
    write_json(&sidecar_path(&opts.out), &meta)?;
    Ok(meta)
}

// --------------------------------------------------------------------- fit

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitModel {
    Linear { sigma: f64 },
    Logistic,
}

impl FitModel {
    fn family(self) -> ModelFamily {
        match self {
            FitModel::Linear { sigma } => ModelFamily::Gaussian { sigma },
            FitModel::Logistic => ModelFamily::Bernoulli,
        }
    }

    fn label(self) -> &'static str {
        match self {
            FitModel::Linear { .. } => "linear",
            FitModel::Logistic => "logistic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitPrior {
    Flat,
    Catalytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Map,
    Mcmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArmSelect {
    #[default]
    All,
    Treated,
    Control,
}

impl FromStr for ArmSelect {
    type Err = CommandError;
    fn from_str(s: &str) -> CmdResult<Self> {
        match s {
            "all" => Ok(Self::All),
            "treated" | "treatment" => Ok(Self::Treated),
            "control" => Ok(Self::Control),
            _ => Err(CommandError::usage(format!("unknown arm '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub data: PathBuf,
    pub model: FitModel,
    pub prior: FitPrior,
    pub method: FitMethod,
    pub arm: ArmSelect,
    /// Defaults to p.
    pub tau: Option<f64>,
    /// Defaults to max(400, 4p).
    pub m: Option<usize>,
    /// Covariates of the simple model besides the intercept.
    pub simple_covariates: Vec<String>,
    pub seed: u64,
    pub mcmc_steps: usize,
    pub draws: Option<PathBuf>,
    pub out: PathBuf,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorInfo {
    pub tau: f64,
    pub m: usize,
    pub weight_per_row: f64,
    pub simple_covariates: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcInfo {
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub draws: usize,
    pub acceptance_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws_file: Option<String>,
}

/// What `fit` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    pub model: String,
    pub prior: String,
    /// "closed_form", "map" or "mcmc".
    pub method: String,
    pub n: usize,
    pub columns: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catalytic: Option<PriorInfo>,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub diverged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcInfo>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn sample_covariance(draws: &DMatrix<f64>) -> DMatrix<f64> {
    let t = draws.nrows();
    let mean = draws.row_sum() / t as f64;
    let mut centered = draws.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    centered.transpose() * centered / (t.max(2) - 1) as f64
}

pub fn cmd_fit(opts: &FitOptions) -> CmdResult<PosteriorResult> {
    let full = load_dataset(&opts.data)?;
    let data = match opts.arm {
        ArmSelect::All => full,
        ArmSelect::Treated => full.arm(true)?,
        ArmSelect::Control => full.arm(false)?,
    };
    let family = opts.model.family();
    family.validate()?;
    if opts.model == FitModel::Logistic {
        data.check_bernoulli()?;
    }
    if matches!(opts.model, FitModel::Linear { .. }) && opts.method == FitMethod::Mcmc {
        return Err(CommandError::usage(
            "the linear model has a closed-form posterior; use --method map",
        ));
    }
    let p = data.p();

    let prior = match opts.prior {
        FitPrior::Flat => None,
        FitPrior::Catalytic => {
            let mut subset = Vec::new();
            if let Some(ic) = data.intercept_index() {
                subset.push(ic);
            }
            for c in &opts.simple_covariates {
                subset.push(data.column_index(c).ok_or_else(|| {
                    CommandError::usage(format!("unknown simple-model covariate '{c}'"))
                })?);
            }
            if subset.is_empty() {
                return Err(CommandError::usage("simple model has no covariates"));
            }
            let simple = fit_simple_model(&data, &subset, family)?;
            let mut config = SynthConfig::with_defaults(p, simple, opts.seed);
            if let Some(t) = opts.tau {
                config.tau = t;
            }
            if let Some(m) = opts.m {
                config.m = m;
            }
            Some(build_catalytic_prior(&data, &config)?)
        }
    };
    let info = prior.as_ref().map(|cp| PriorInfo {
        tau: cp.tau(),
        m: cp.m(),
        weight_per_row: cp.weight_per_row(),
        simple_covariates: opts.simple_covariates.clone(),
        seed: opts.seed,
    });
    let prior_label = match opts.prior {
        FitPrior::Flat => "flat",
        FitPrior::Catalytic => "catalytic",
    };

    let result = match opts.model {
        FitModel::Linear { sigma } => {
            let post = match &prior {
                Some(cp) => fit_linear_posterior(&data, cp, sigma)?,
                None => fit_linear_flat(&data, sigma)?,
            };
            PosteriorResult {
                model: opts.model.label().into(),
                prior: prior_label.into(),
                method: "closed_form".into(),
                n: data.n(),
                columns: data.column_names().to_vec(),
                catalytic: info,
                mean: post.mean.iter().copied().collect(),
                covariance: rows_of(&post.covariance),
                converged: true,
                diverged: false,
                iterations: None,
                grad_norm: None,
                mcmc: None,
            }
        }
        FitModel::Logistic => {
            let p_arg = match &prior {
                Some(cp) => Prior::Catalytic(cp),
                None => Prior::Flat,
            };
            let map = fit_map(&data, family, p_arg, &NewtonOptions::default())?;
            let mut result = PosteriorResult {
                model: opts.model.label().into(),
                prior: prior_label.into(),
                method: "map".into(),
                n: data.n(),
                columns: data.column_names().to_vec(),
                catalytic: info,
                mean: map.beta_hat.iter().copied().collect(),
                covariance: Vec::new(),
                converged: map.converged,
                diverged: map.diverged(),
                iterations: Some(map.iterations),
                grad_norm: Some(map.final_grad_norm),
                mcmc: None,
            };
            if result.diverged {
                write_fit(opts, &result)?;
                return Err(CommandError::numerical(format!(
                    "{prior_label}-prior fit diverged: converged={}, |beta|={:.3e}, gradient norm {:.3e}",
                    map.converged,
                    map.beta_hat.norm(),
                    map.final_grad_norm
                )));
            }
            let combined = log_posterior_data(&data, p_arg)?;
            let lik = WeightedLikelihood::new(&combined, family)?;
            let approx = laplace_approx(&lik, &map)?;
            result.covariance = rows_of(&approx.covariance);
            if opts.method == FitMethod::Mcmc {
                let cfg = MetropolisConfig::with_steps(opts.mcmc_steps);
                let stream = RngStream::new(opts.seed).split("mcmc", 0);
                let samples = rw_metropolis(&lik, &map.beta_hat, &default_proposal(&approx), &cfg, stream)?;
                result.method = "mcmc".into();
                result.mean = samples.mean().iter().copied().collect();
                result.covariance = rows_of(&sample_covariance(&samples.draws));
                if let Some(path) = &opts.draws {
                    let mut w = create(path)?;
                    samples.write_csv(&mut w, Some(data.column_names()))?;
                    w.flush().map_err(Error::from)?;
                }
                result.mcmc = Some(McmcInfo {
                    steps: cfg.steps,
                    burn_in: cfg.burn_in,
                    thin: cfg.thin,
                    draws: samples.len(),
                    acceptance_rate: samples.acceptance_rate,
                    draws_file: opts.draws.as_ref().map(|p| p.display().to_string()),
                });
            }
            result
        }
    };
    write_fit(opts, &result)?;
    Ok(result)
}

fn write_fit(opts: &FitOptions, result: &PosteriorResult) -> CmdResult<()> {
    match opts.format {
        OutputFormat::Json => write_json(&opts.out, result),
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(create(&opts.out)?);
            w.write_record(["name", "estimate", "sd"]).map_err(Error::from)?;
            for (j, name) in result.columns.iter().enumerate() {
                let sd = result
                    .covariance
                    .get(j)
                    .map_or(f64::NAN, |row| row[j].sqrt());
                w.write_record([name.clone(), result.mean[j].to_string(), sd.to_string()])
                    .map_err(Error::from)?;
            }
            w.flush().map_err(Error::from)?;
            Ok(())
        }
    }
}

// ------------------------------------------------------------------ effect

#[derive(Debug, Clone, PartialEq)]
pub struct EffectOptions {
    pub treatment_draws: PathBuf,
    pub control_draws: PathBuf,
    /// Units over which effects are averaged (a dataset CSV).
    pub covariates: PathBuf,
    /// Subgroup expressions such as `hsdip == 1`; empty means `all`.
    pub groups: Vec<String>,
    pub level: f64,
    pub draws_out: Option<PathBuf>,
    pub out: PathBuf,
    pub format: OutputFormat,
}

fn load_samples(path: &Path) -> CmdResult<(SampleMatrix, Vec<String>)> {
    require_file(path, "sample")?;
    Ok(SampleMatrix::read_csv(File::open(path).map_err(Error::from)?)?)
}

pub fn cmd_effect(opts: &EffectOptions) -> CmdResult<Vec<EffectResult>> {
    let units = load_dataset(&opts.covariates)?;
    let (st, names_t) = load_samples(&opts.treatment_draws)?;
    let (sc, names_c) = load_samples(&opts.control_draws)?;
    for (names, arm) in [(&names_t, "treatment"), (&names_c, "control")] {
        if names.as_slice() != units.column_names() {
            return Err(CommandError::usage(format!(
                "{arm} sample columns {names:?} do not match covariates {:?}",
                units.column_names()
            )));
        }
    }
    let exprs: Vec<String> = if opts.groups.is_empty() {
        vec!["all".into()]
    } else {
        opts.groups.clone()
    };
    let mut results = Vec::with_capacity(exprs.len());
    for e in &exprs {
        let g = Subgroup::parse(e)?;
        let mask = g.mask(&units)?;
        let r = posterior_effect_distribution(units.covariates(), &mask, &st, &sc, &g.label)?
            .summarize(opts.level)?;
        results.push(r);
    }

    if let Some(path) = &opts.draws_out {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(results.iter().map(|r| r.group_label.as_str()))
            .map_err(Error::from)?;
        for k in 0..st.len() {
            w.write_record(
                results
                    .iter()
                    .map(|r| r.draws.as_ref().map_or(f64::NAN, |d| d[k]).to_string()),
            )
            .map_err(Error::from)?;
        }
        w.flush().map_err(Error::from)?;
    }
    for r in &mut results {
        r.draws = None;
    }
    match opts.format {
        OutputFormat::Json => write_json(&opts.out, &results)?,
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(create(&opts.out)?);
            w.write_record(["group", "gamma_avg", "lower", "upper", "level"])
                .map_err(Error::from)?;
            for r in &results {
                let s = r.summary.expect("summarized above");
                w.write_record([
                    r.group_label.clone(),
                    r.gamma_avg.to_string(),
                    s.lower.to_string(),
                    s.upper.to_string(),
                    s.level.to_string(),
                ])
                .map_err(Error::from)?;
            }
            w.flush().map_err(Error::from)?;
        }
    }
    Ok(results)
}

// -------------------------------------------------------------- experiment

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub n_grid: Option<Vec<usize>>,
    pub methods: Option<Vec<Method>>,
    pub workers: Option<usize>,
    /// Output directory.
    pub out: PathBuf,
}

/// File names written by [`cmd_experiment`] inside the output directory.
pub const REPORT_JSON: &str = "report.json";
pub const TABLE_CSV: &str = "table.csv";
pub const MSDPTE_CSV: &str = "msdpte.csv";
pub const REPLICATIONS_CSV: &str = "replications.csv";

pub fn experiment_config(opts: &ExperimentOptions) -> CmdResult<ExperimentConfig> {
    let mut config = match &opts.config {
        Some(p) => read_json::<ExperimentConfig>(p, "experiment config")?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = opts.seed {
        config.seed = s;
    }
    if let Some(r) = opts.replications {
        config.replications = r;
    }
    if let Some(g) = &opts.n_grid {
        config.n_grid = g.clone();
    }
    if let Some(m) = &opts.methods {
        config.methods = m.clone();
    }
    config.validate()?;
    Ok(config)
}

pub fn cmd_experiment(opts: &ExperimentOptions) -> CmdResult<ExperimentOutcome> {
    let config = experiment_config(opts)?;
    let outcome = run_experiment(&config, opts.workers)?;
    let dir = &opts.out;
    write_json(&dir.join(REPORT_JSON), &outcome.report)?;
    let mut w = create(&dir.join(TABLE_CSV))?;
    write_table_csv(&outcome.report, &mut w)?;
    let mut w = create(&dir.join(MSDPTE_CSV))?;
    write_msdpte_csv(&outcome.report, &mut w)?;
    let mut w = create(&dir.join(REPLICATIONS_CSV))?;
    write_replications_csv(&outcome.replications, &config.groups, &mut w)?;
    Ok(outcome)
}

// ------------------------------------------------------------ bridge-check

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BridgeKind {
    Ridge,
    Lasso,
    ElasticNet,
    GroupLasso,
    Lq(f64),
}

impl fmt::Display for BridgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BridgeKind::Ridge => f.write_str("ridge"),
            BridgeKind::Lasso => f.write_str("lasso"),
            BridgeKind::ElasticNet => f.write_str("elastic_net"),
            BridgeKind::GroupLasso => f.write_str("group_lasso"),
            BridgeKind::Lq(r) => write!(f, "lq:{r}"),
        }
    }
}

fn parse_ratio(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.trim().parse().ok(),
    }
}

impl FromStr for BridgeKind {
    type Err = CommandError;
    fn from_str(s: &str) -> CmdResult<Self> {
        let k = s.trim().to_ascii_lowercase().replace('-', "_");
        match k.as_str() {
            "ridge" => Ok(Self::Ridge),
            "lasso" => Ok(Self::Lasso),
            "elastic_net" | "enet" => Ok(Self::ElasticNet),
            "group_lasso" => Ok(Self::GroupLasso),
            _ => match k.strip_prefix("lq:").and_then(parse_ratio) {
                Some(r) if r > 0.0 && r.is_finite() => Ok(Self::Lq(r)),
                _ => Err(CommandError::usage(format!(
                    "unknown penalty kind '{s}' (ridge, lasso, elastic_net, group_lasso, lq:<r>)"
                ))),
            },
        }
    }
}

/// Ridge, LASSO, elastic net, group LASSO, L_q with r = 3 and r = 1/3.
pub fn default_bridge_kinds() -> Vec<BridgeKind> {
    vec![
        BridgeKind::Ridge,
        BridgeKind::Lasso,
        BridgeKind::ElasticNet,
        BridgeKind::GroupLasso,
        BridgeKind::Lq(3.0),
        BridgeKind::Lq(1.0 / 3.0),
    ]
}

fn normal_vec(rng: &mut impl Rng, len: usize, sd: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

fn random_spd(rng: &mut impl Rng, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = &a * a.transpose() / k as f64 + DMatrix::identity(k, k) * 0.5;
    (&m + m.transpose()) * 0.5
}

/// A random Gaussian regression problem with `n` rows and `p` columns and a
/// penalty of the given kind: three unit coefficients, unit noise, τ = p,
/// λ = 2 and centres drawn around zero.
pub fn bridge_instance(
    kind: BridgeKind,
    n: usize,
    p: usize,
    stream: RngStream,
) -> crate::error::Result<(Dataset, PenaltySpec)> {
    if n == 0 || p == 0 {
        return Err(Error::Invalid("bridge instances need n, p >= 1".into()));
    }
    let mut rng = stream.rng();
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let truth = DVector::from_fn(p, |j, _| if j < 3 { 1.0 } else { 0.0 });
    let y = &x * &truth + normal_vec(&mut rng, n, 1.0);
    let data = Dataset::new(x, y, (0..p).map(|j| format!("x{j}")).collect())?;
    let center = normal_vec(&mut rng, p, 0.25);
    let (sigma, tau, lambda) = (1.0, p as f64, 2.0);
    let spec = match kind {
        BridgeKind::Ridge => PenaltySpec::ridge(random_spd(&mut rng, p) * tau, center, sigma, tau),
        BridgeKind::Lasso => PenaltySpec::lasso(lambda, center, sigma, tau),
        BridgeKind::ElasticNet => {
            let ridge_center = normal_vec(&mut rng, p, 0.25);
            PenaltySpec::elastic_net(lambda, ridge_center, center, sigma, tau)
        }
        BridgeKind::GroupLasso => {
            let groups: Vec<Vec<usize>> = (0..p)
                .collect::<Vec<_>>()
                .chunks(3)
                .map(<[usize]>::to_vec)
                .collect();
            let metrics = groups.iter().map(|g| random_spd(&mut rng, g.len())).collect();
            PenaltySpec::group_lasso(lambda, groups, metrics, center, sigma, tau)
        }
        BridgeKind::Lq(r) => PenaltySpec::lq(lambda, r, center, sigma, tau),
    };
    spec.validate()?;
    Ok((data, spec))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeCheckOptions {
    pub kinds: Vec<BridgeKind>,
    pub instances: usize,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub format: OutputFormat,
}

impl Default for BridgeCheckOptions {
    fn default() -> Self {
        Self {
            kinds: default_bridge_kinds(),
            instances: 20,
            n: 30,
            p: 8,
            seed: 0,
            workers: None,
            out: PathBuf::from("bridge_check.json"),
            format: OutputFormat::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeCheckEntry {
    pub instance: usize,
    pub label: String,
    pub report: CertificationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeCheckSummary {
    pub entries: Vec<BridgeCheckEntry>,
    /// Failed checks with a global guarantee.
    pub convex_failures: usize,
    /// Failed checks of local (r < 1) problems; reported, not fatal.
    pub local_failures: usize,
}

pub fn run_bridge_check(opts: &BridgeCheckOptions) -> CmdResult<BridgeCheckSummary> {
    if opts.kinds.is_empty() || opts.instances == 0 {
        return Err(CommandError::usage("bridge-check needs at least one kind and one instance"));
    }
    let master = RngStream::new(opts.seed);
    let tasks: Vec<(usize, BridgeKind)> = (0..opts.instances)
        .flat_map(|i| opts.kinds.iter().map(move |&k| (i, k)))
        .collect();
    let run = |&(i, kind): &(usize, BridgeKind)| -> crate::error::Result<BridgeCheckEntry> {
        let label = kind.to_string();
        let (data, spec) = bridge_instance(kind, opts.n, opts.p, master.split(&label, i as u64))?;
        let copts = CertifyOptions {
            seed: master.split(&format!("{label}/starts"), i as u64).key(),
            ..CertifyOptions::default()
        };
        Ok(BridgeCheckEntry {
            instance: i,
            label,
            report: certify_equivalence(&data, &spec, &copts),
        })
    };
    let entries: crate::error::Result<Vec<BridgeCheckEntry>> = match opts.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| CommandError::usage(format!("cannot start worker pool: {e}")))?
            .install(|| tasks.par_iter().map(run).collect()),
        None => tasks.par_iter().map(run).collect(),
    };
    let entries = entries?;
    let failed = |local: bool| {
        entries
            .iter()
            .filter(|e| e.report.local_only == local && !e.report.passed)
            .count()
    };
    Ok(BridgeCheckSummary {
        convex_failures: failed(false),
        local_failures: failed(true),
        entries,
    })
}

pub fn cmd_bridge_check(opts: &BridgeCheckOptions) -> CmdResult<BridgeCheckSummary> {
    let summary = run_bridge_check(opts)?;
    match opts.format {
        OutputFormat::Json => write_json(&opts.out, &summary)?,
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(create(&opts.out)?);
            w.write_record([
                "instance",
                "kind",
                "guarantee",
                "objective_gap",
                "argmin_gap",
                "largest_agreeing",
                "passed",
            ])
            .map_err(Error::from)?;
            for e in &summary.entries {
                let r = &e.report;
                w.write_record([
                    e.instance.to_string(),
                    e.label.clone(),
                    r.guarantee.clone(),
                    r.objective_gap.to_string(),
                    r.argmin_gap.to_string(),
                    r.largest_agreeing.to_string(),
                    r.passed.to_string(),
                ])
                .map_err(Error::from)?;
            }
            w.flush().map_err(Error::from)?;
        }
    }
    if summary.convex_failures > 0 {
        return Err(CommandError::numerical(format!(
            "{} convex equivalence check(s) failed",
            summary.convex_failures
        )));
    }
    Ok(summary)
}
