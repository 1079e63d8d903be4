//! `catalytic` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
//! Every global flag can also be set through a `CATALYTIC_*` environment
//! variable (`CATALYTIC_SEED`, `CATALYTIC_WORKERS`, ...).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use catalytic::cli::{
    self, ArmSelect, BridgeCheckOptions, BridgeKind, CommandError, EffectOptions,
    ExperimentOptions, FitMethod, FitModel, FitOptions, FitPrior, OutputFormat, SimulateOptions,
};
use catalytic::experiment::Method;

#[derive(Parser, Debug)]
#[command(name = "catalytic", version, about = "Catalytic priors: fitting, causal effects and experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON config (population spec for `simulate`, experiment config for `experiment`).
    #[arg(long, global = true, env = "CATALYTIC_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, env = "CATALYTIC_SEED")]
    seed: Option<u64>,
    /// Output file (a directory for `experiment`).
    #[arg(long, global = true, env = "CATALYTIC_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json, env = "CATALYTIC_FORMAT")]
    format: Format,
    /// Worker threads for `experiment` and `bridge-check`.
    #[arg(long, global = true, env = "CATALYTIC_WORKERS")]
    workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Linear,
    Logistic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PriorArg {
    Flat,
    Catalytic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Map,
    Mcmc,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a population CSV (plus a `.meta.json` sidecar).
    Simulate {
        /// Override the population size.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit a linear or logistic model under a flat or catalytic prior.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelArg::Logistic)]
        model: ModelArg,
        /// Noise standard deviation of the linear model.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = PriorArg::Catalytic)]
        prior: PriorArg,
        #[arg(long, value_enum, default_value_t = MethodArg::Map)]
        method: MethodArg,
        /// all, treated or control.
        #[arg(long, default_value = "all")]
        arm: String,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        m: Option<usize>,
        /// Simple-model covariate (repeatable); intercept-only when absent.
        #[arg(long = "simple")]
        simple: Vec<String>,
        #[arg(long, default_value_t = 50_000)]
        steps: usize,
        /// Where to write MCMC draws.
        #[arg(long)]
        draws: Option<PathBuf>,
    },
    /// Posterior of the average log probability ratio from two arms' draws.
    Effect {
        #[arg(long)]
        treatment: PathBuf,
        #[arg(long)]
        control: PathBuf,
        /// Dataset CSV of the units to average over.
        #[arg(long)]
        covariates: PathBuf,
        /// Subgroup such as "hsdip == 1" (repeatable); "all" by default.
        #[arg(long = "group")]
        groups: Vec<String>,
        #[arg(long, default_value_t = 0.99)]
        level: f64,
        /// Where to write the effect draws, one column per group.
        #[arg(long)]
        draws_out: Option<PathBuf>,
    },
    /// Run the subsampling experiment and write report, table and curves.
    Experiment {
        #[arg(long)]
        replications: Option<usize>,
        /// Comma-separated training sizes.
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// Comma-separated methods (flat, cauchy, catalytic, catalytic:<col>, catalytic:mixture).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// Check the regularization equivalences on random instances.
    BridgeCheck {
        /// Penalty kind (repeatable): ridge, lasso, elastic_net, group_lasso, lq:<r>.
        #[arg(long = "kind")]
        kinds: Vec<String>,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        p: usize,
    },
}

fn out_or(global: &Global, default: &str) -> PathBuf {
    global.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: Cli) -> Result<(), CommandError> {
    let g = &cli.global;
    let format = match g.format {
        Format::Json => OutputFormat::Json,
        Format::Csv => OutputFormat::Csv,
    };
    let ext = match format {
        OutputFormat::Json => "json",
        OutputFormat::Csv => "csv",
    };
    match cli.command {
        Command::Simulate { n } => {
            let meta = cli::cmd_simulate(&SimulateOptions {
                spec: g.config.clone(),
                seed: g.seed,
                n,
                out: out_or(g, "population.csv"),
            })?;
            eprintln!("wrote {} rows ({} treated)", meta.rows, meta.treated);
        }
        Command::Fit {
            data,
            model,
            sigma,
            prior,
            method,
            arm,
            tau,
            m,
            simple,
            steps,
            draws,
        } => {
            let res = cli::cmd_fit(&FitOptions {
                data,
                model: match model {
                    ModelArg::Linear => FitModel::Linear { sigma },
                    ModelArg::Logistic => FitModel::Logistic,
                },
                prior: match prior {
                    PriorArg::Flat => FitPrior::Flat,
                    PriorArg::Catalytic => FitPrior::Catalytic,
                },
                method: match method {
                    MethodArg::Map => FitMethod::Map,
                    MethodArg::Mcmc => FitMethod::Mcmc,
                },
                arm: arm.parse::<ArmSelect>()?,
                tau,
                m,
                simple_covariates: simple,
                seed: g.seed.unwrap_or(0),
                mcmc_steps: steps,
                draws,
                out: out_or(g, &format!("posterior.{ext}")),
                format,
            })?;
            if let Some(info) = &res.catalytic {
                eprintln!("tau/M = {}", info.weight_per_row);
            }
        }
        Command::Effect {
            treatment,
            control,
            covariates,
            groups,
            level,
            draws_out,
        } => {
            let res = cli::cmd_effect(&EffectOptions {
                treatment_draws: treatment,
                control_draws: control,
                covariates,
                groups,
                level,
                draws_out,
                out: out_or(g, &format!("effect.{ext}")),
                format,
            })?;
            for r in &res {
                if let Some(s) = r.summary {
                    eprintln!("{}: {:.4} [{:.4}, {:.4}]", r.group_label, r.gamma_avg, s.lower, s.upper);
                }
            }
        }
        Command::Experiment {
            replications,
            n_grid,
            methods,
        } => {
            let methods = methods
                .map(|ms| {
                    ms.iter()
                        .map(|m| m.parse::<Method>().map_err(CommandError::from))
                        .collect::<Result<Vec<_>, _>>()
                })
                .transpose()?;
            let out = out_or(g, "experiment");
            cli::cmd_experiment(&ExperimentOptions {
                config: g.config.clone(),
                seed: g.seed,
                replications,
                n_grid,
                methods,
                workers: g.workers,
                out: out.clone(),
            })?;
            eprintln!("wrote report to {}", out.display());
        }
        Command::BridgeCheck {
            kinds,
            instances,
            n,
            p,
        } => {
            let kinds = if kinds.is_empty() {
                cli::default_bridge_kinds()
            } else {
                kinds
                    .iter()
                    .map(|k| k.parse::<BridgeKind>())
                    .collect::<Result<Vec<_>, _>>()?
            };
            let summary = cli::cmd_bridge_check(&BridgeCheckOptions {
                kinds,
                instances,
                n,
                p,
                seed: g.seed.unwrap_or(0),
                workers: g.workers,
                out: out_or(g, &format!("bridge_check.{ext}")),
                format,
            })?;
            eprintln!(
                "{} checks, {} local-only failures",
                summary.entries.len(),
                summary.local_failures
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { cli::EXIT_USAGE } else { cli::EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(cli::EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
