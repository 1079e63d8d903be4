//! Subsampling experiments on a simulated randomized study.
//!
//! A population is simulated once, a flat-prior benchmark is fit on all of
//! it, and then for each training size `n` and replication a balanced
//! subsample is drawn, every method is fit per arm, and the resulting effect
//! estimates are compared with the benchmark's.

mod protocol;
mod report;
mod sim;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{avg_effect, ArmFits, Subgroup};
use crate::error::{Error, Result};
use crate::fit::CauchyOptions;
use crate::newton::NewtonOptions;
use crate::rng::RngStream;

pub use protocol::{
    benchmark_fit, default_groups, draw_train_test, run_replication, CatalyticSettings, Method,
    PointEstimate, ReplicationResult, ReplicationSettings, SourceModel,
};
pub use report::{
    aggregate, format_cell, format_value, mean_se, write_msdpte_csv, write_replications_csv,
    write_table_csv, ExperimentReport, MsdpteCell, ReportCell,
};
pub use sim::{
    draw_coefficients, generate_spec, simulate_population, CoefficientDraw, CovariateGenerator,
    Population, SwimSimSpec, SWIM_COLUMNS,
};

fn default_n_grid() -> Vec<usize> {
    vec![100, 200, 400, 800, 1600]
}

fn default_methods() -> Vec<Method> {
    vec![Method::Flat, Method::Cauchy, Method::catalytic()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub population: SwimSimSpec,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    /// Test-set size n′.
    pub n_prime: usize,
    pub methods: Vec<Method>,
    pub catalytic: CatalyticSettings,
    pub groups: Vec<Subgroup>,
    pub point_estimate: PointEstimate,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            population: SwimSimSpec::default_v1(),
            n_grid: default_n_grid(),
            replications: 250,
            n_prime: 500,
            methods: default_methods(),
            catalytic: CatalyticSettings::default(),
            groups: default_groups(),
            point_estimate: PointEstimate::Map,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        if self.n_grid.is_empty() || self.replications == 0 || self.methods.is_empty() {
            return Err(Error::Invalid(
                "experiment needs at least one n, one replication and one method".into(),
            ));
        }
        if self.groups.is_empty() {
            return Err(Error::Invalid("experiment needs at least one group".into()));
        }
        let cols = SwimSimSpec::column_names();
        for g in &self.groups {
            if let Some((c, _, _)) = &g.condition {
                if !cols.contains(c) {
                    return Err(Error::Invalid(format!("group '{}' uses unknown column '{c}'", g.label)));
                }
            }
        }
        Ok(())
    }
}

/// Report plus the raw replication results it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub replications: Vec<ReplicationResult>,
}

/// Run the whole grid. Replications are independent tasks keyed by
/// `(n, replication)` and collected in order, so the result does not depend
/// on `workers` or scheduling.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let population = simulate_population(&config.population)?;
    let full = &population.data;
    let benchmark = benchmark_fit(full)?;
    let settings = ReplicationSettings {
        methods: config.methods.clone(),
        catalytic: config.catalytic.clone(),
        groups: config.groups.clone(),
        point: config.point_estimate,
        newton: NewtonOptions::default(),
        cauchy: CauchyOptions::default(),
    };
    let master = RngStream::new(config.seed);
    let tasks: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.replications).map(move |r| (n, r)))
        .collect();

    let run = |&(n, rep): &(usize, usize)| -> Result<Vec<ReplicationResult>> {
        let stream = master.split(&format!("n={n}"), rep as u64);
        let (train, test) = draw_train_test(full, n, config.n_prime, stream.split("split", 0))?;
        run_replication(&train, &test, &benchmark, &settings, n, rep, stream.split("fit", 0))
    };
    let nested: Vec<Result<Vec<ReplicationResult>>> = match workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?
            .install(|| tasks.par_iter().map(run).collect()),
        None => tasks.par_iter().map(run).collect(),
    };
    let mut results = Vec::with_capacity(tasks.len() * config.methods.len());
    for r in nested {
        results.extend(r?);
    }

    let mut report = aggregate(&results, &config.groups)?;
    report.point_estimate = match config.point_estimate {
        PointEstimate::Map => "map".into(),
        PointEstimate::LaplaceMean { .. } => "laplace_mean".into(),
    };
    report.population_version = config.population.version.clone();
    report.population_n = config.population.n;
    report.n_prime = config.n_prime;
    report.benchmark = population_benchmark(full, &benchmark, &config.groups)?;
    Ok(ExperimentOutcome {
        report,
        replications: results,
    })
}

fn population_benchmark(
    full: &crate::data::Dataset,
    benchmark: &ArmFits,
    groups: &[Subgroup],
) -> Result<Vec<(String, f64)>> {
    let bt = benchmark.treatment.point();
    let bc = benchmark.control.point();
    groups
        .iter()
        .map(|g| {
            let mask = g.mask(full)?;
            let e = avg_effect(full.covariates(), &mask, &bt, &bc, &g.label)?;
            Ok((g.label.clone(), e.gamma_avg))
        })
        .collect()
}
