//! A simulated welfare-to-work population with the covariate layout of the
//! employment study: eleven enrollee characteristics plus an intercept, a
//! completely randomized treatment, and logistic potential outcomes.
//!
//! The joint covariate distribution is an invented stand-in; nothing here
//! tries to match the real enrollees beyond the column meanings.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, INTERCEPT};
use crate::error::{Error, Result};
use crate::model::sigmoid;
use crate::rng::RngStream;

/// Column order of the simulated design.
pub const SWIM_COLUMNS: [&str; 12] = [
    INTERCEPT, "female", "age35", "hsdip", "nevmar", "divwid", "child6", "black", "hisp",
    "emppre1y", "nchild", "earnpre1y",
];

const DEFAULT_SPEC_JSON: &str = include_str!("../../data/swim_sim_default_v1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGenerator {
    pub female: f64,
    /// P(age > 35).
    pub age35: f64,
    pub hsdip: f64,
    /// Marital status is one categorical draw: never married, divorced or
    /// widowed, otherwise married.
    pub never_married: f64,
    pub divorced_widowed: f64,
    pub child6: f64,
    pub black: f64,
    pub hispanic: f64,
    /// P(positive earnings in the previous year); `emppre1y` is exactly this event.
    pub employed_prev: f64,
    /// `nchild = 1 + Poisson(extra_children_mean)`, capped at `max_children`.
    pub extra_children_mean: f64,
    pub max_children: u32,
    /// Positive earnings (in $10k) are lognormal with these parameters.
    pub log_earnings_mean: f64,
    pub log_earnings_sd: f64,
}

impl Default for CovariateGenerator {
    fn default() -> Self {
        Self {
            female: 0.6,
            age35: 0.35,
            hsdip: 0.55,
            never_married: 0.4,
            divorced_widowed: 0.3,
            child6: 0.45,
            black: 0.3,
            hispanic: 0.25,
            employed_prev: 0.45,
            extra_children_mean: 1.0,
            max_children: 8,
            log_earnings_mean: (0.6f64).ln(),
            log_earnings_sd: 0.8,
        }
    }
}

impl CovariateGenerator {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("female", self.female),
            ("age35", self.age35),
            ("hsdip", self.hsdip),
            ("never_married", self.never_married),
            ("divorced_widowed", self.divorced_widowed),
            ("child6", self.child6),
            ("black", self.black),
            ("hispanic", self.hispanic),
            ("employed_prev", self.employed_prev),
        ];
        for (name, v) in probs {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Invalid(format!("prevalence {name} = {v} not in (0, 1)")));
            }
        }
        if self.never_married + self.divorced_widowed >= 1.0 {
            return Err(Error::Invalid("marital-status probabilities exceed 1".into()));
        }
        if !(self.extra_children_mean > 0.0) || self.max_children < 1 {
            return Err(Error::Invalid("invalid child-count distribution".into()));
        }
        if !(self.log_earnings_sd > 0.0) || !self.log_earnings_mean.is_finite() {
            return Err(Error::Invalid("invalid earnings distribution".into()));
        }
        Ok(())
    }

    /// `rows × 12` design in [`SWIM_COLUMNS`] order.
    pub fn sample(&self, rows: usize, stream: RngStream) -> Result<DMatrix<f64>> {
        self.validate()?;
        let mut rng = stream.rng();
        let kids = Poisson::new(self.extra_children_mean)
            .map_err(|e| Error::Invalid(format!("child-count distribution: {e}")))?;
        let earn = Normal::new(self.log_earnings_mean, self.log_earnings_sd)
            .map_err(|e| Error::Invalid(format!("earnings distribution: {e}")))?;
        let mut x = DMatrix::zeros(rows, SWIM_COLUMNS.len());
        let bern = |rng: &mut rand_chacha::ChaCha8Rng, p: f64| f64::from(u8::from(rng.random::<f64>() < p));
        for i in 0..rows {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = bern(&mut rng, self.female);
            x[(i, 2)] = bern(&mut rng, self.age35);
            x[(i, 3)] = bern(&mut rng, self.hsdip);
            let u: f64 = rng.random();
            x[(i, 4)] = f64::from(u8::from(u < self.never_married));
            x[(i, 5)] = f64::from(u8::from(
                u >= self.never_married && u < self.never_married + self.divorced_widowed,
            ));
            x[(i, 6)] = bern(&mut rng, self.child6);
            x[(i, 7)] = bern(&mut rng, self.black);
            x[(i, 8)] = bern(&mut rng, self.hispanic);
            let employed = rng.random::<f64>() < self.employed_prev;
            x[(i, 9)] = f64::from(u8::from(employed));
            let extra: f64 = kids.sample(&mut rng);
            x[(i, 10)] = (1.0 + extra).min(f64::from(self.max_children));
            x[(i, 11)] = if employed { earn.sample(&mut rng).exp() } else { 0.0 };
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwimSimSpec {
    pub version: String,
    /// Population size N.
    pub n: usize,
    pub seed: u64,
    pub covariates: CovariateGenerator,
    pub beta_t_true: Vec<f64>,
    pub beta_c_true: Vec<f64>,
}

impl SwimSimSpec {
    /// The frozen default population shipped with the crate.
    pub fn default_v1() -> Self {
        serde_json::from_str(DEFAULT_SPEC_JSON).expect("bundled default spec parses")
    }

    pub fn column_names() -> Vec<String> {
        SWIM_COLUMNS.iter().map(|s| (*s).to_owned()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.covariates.validate()?;
        if self.n < 2 {
            return Err(Error::Invalid("population needs at least two units".into()));
        }
        for (arm, b) in [("treatment", &self.beta_t_true), ("control", &self.beta_c_true)] {
            if b.len() != SWIM_COLUMNS.len() {
                return Err(Error::Dimension(format!(
                    "{arm} coefficients have length {}, expected {}",
                    b.len(),
                    SWIM_COLUMNS.len()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{arm} coefficients")));
            }
        }
        Ok(())
    }
}

/// Settings used to draw the true coefficients of a default population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDraw {
    pub sd: f64,
    pub target_rate_t: f64,
    pub target_rate_c: f64,
    pub calibration_rows: usize,
    pub seed: u64,
}

impl Default for CoefficientDraw {
    fn default() -> Self {
        Self {
            sd: 0.5,
            target_rate_t: 0.6,
            target_rate_c: 0.55,
            calibration_rows: 20_000,
            seed: 20_180_501,
        }
    }
}

/// Average success probability over the rows of `x` when the intercept is
/// replaced by `b0`.
fn mean_rate(x: &DMatrix<f64>, slopes: &[f64], b0: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..x.nrows() {
        let mut eta = b0;
        for (j, b) in slopes.iter().enumerate() {
            eta += x[(i, j + 1)] * b;
        }
        s += sigmoid(eta);
    }
    s / x.nrows() as f64
}

fn calibrate_intercept(x: &DMatrix<f64>, slopes: &[f64], target: f64) -> f64 {
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_rate(x, slopes, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Draw slopes from N(0, sd²) for each arm and set each intercept by
/// bisection so the population-average success rate hits its target.
pub fn draw_coefficients(
    gen: &CovariateGenerator,
    draw: &CoefficientDraw,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(draw.target_rate_t > 0.0 && draw.target_rate_t < 1.0)
        || !(draw.target_rate_c > 0.0 && draw.target_rate_c < 1.0)
    {
        return Err(Error::Invalid("target rates must lie in (0, 1)".into()));
    }
    let master = RngStream::new(draw.seed);
    let x = gen.sample(draw.calibration_rows, master.split("calibration", 0))?;
    let normal = Normal::new(0.0, draw.sd)
        .map_err(|e| Error::Invalid(format!("coefficient sd: {e}")))?;
    let arm = |label: &str, target: f64| -> Vec<f64> {
        let mut rng = master.split(label, 0).rng();
        let slopes: Vec<f64> = (1..SWIM_COLUMNS.len()).map(|_| normal.sample(&mut rng)).collect();
        let b0 = calibrate_intercept(&x, &slopes, target);
        std::iter::once(b0).chain(slopes).collect()
    };
    let t = arm("treatment", draw.target_rate_t);
    let c = arm("control", draw.target_rate_c);
    Ok((t, c))
}

/// Build a population spec with freshly drawn coefficients.
pub fn generate_spec(
    version: &str,
    n: usize,
    seed: u64,
    gen: CovariateGenerator,
    draw: &CoefficientDraw,
) -> Result<SwimSimSpec> {
    let (beta_t_true, beta_c_true) = draw_coefficients(&gen, draw)?;
    let spec = SwimSimSpec {
        version: version.to_owned(),
        n,
        seed,
        covariates: gen,
        beta_t_true,
        beta_c_true,
    };
    spec.validate()?;
    Ok(spec)
}

/// A simulated population. Only `Y(Z)` is in [`Population::data`]; both
/// potential outcomes are kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub data: Dataset,
    y_treated: Vec<f64>,
    y_control: Vec<f64>,
}

impl Population {
    /// `(Y(1), Y(0))` for every unit.
    pub fn potential_outcomes(&self) -> (&[f64], &[f64]) {
        (&self.y_treated, &self.y_control)
    }
}

/// Covariates, a complete randomization with exactly ⌊N/2⌋ treated, and
/// Bernoulli outcomes from the two logistic models.
pub fn simulate_population(spec: &SwimSimSpec) -> Result<Population> {
    spec.validate()?;
    let master = RngStream::new(spec.seed);
    let x = spec.covariates.sample(spec.n, master.split("covariates", 0))?;

    let mut order: Vec<usize> = (0..spec.n).collect();
    order.shuffle(&mut master.split("assignment", 0).rng());
    let mut z = vec![false; spec.n];
    for &i in order.iter().take(spec.n / 2) {
        z[i] = true;
    }

    let bt = DVector::from_column_slice(&spec.beta_t_true);
    let bc = DVector::from_column_slice(&spec.beta_c_true);
    let eta_t = &x * &bt;
    let eta_c = &x * &bc;
    let mut rng = master.split("outcomes", 0).rng();
    let mut y1 = Vec::with_capacity(spec.n);
    let mut y0 = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let u1: f64 = rng.random();
        let u0: f64 = rng.random();
        y1.push(f64::from(u8::from(u1 < sigmoid(eta_t[i]))));
        y0.push(f64::from(u8::from(u0 < sigmoid(eta_c[i]))));
    }
    let y = DVector::from_fn(spec.n, |i, _| if z[i] { y1[i] } else { y0[i] });
    let data = Dataset::new(x, y, SwimSimSpec::column_names())?.with_treatment(z)?;
    Ok(Population {
        data,
        y_treated: y1,
        y_control: y0,
    })
}
