//! Catalytic priors for generalized linear models.
//!
//! A catalytic prior is the down-weighted likelihood of synthetic data drawn
//! from a simpler model fitted to the observed data. This crate generates
//! that synthetic data, fits posteriors under it (closed form, MAP, Laplace,
//! Metropolis), computes treatment effects from paired logistic arms, checks
//! the penalized-regression equivalences, and runs subsampling experiments.

pub mod bridge;
pub mod causal;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod linalg;
pub mod model;
pub mod newton;
pub mod posterior;
pub mod rng;
pub mod synth;

pub use data::{Dataset, INTERCEPT};
pub use error::{Error, Result};
pub use fit::{fit_cauchy_map, fit_linear_posterior, fit_map, LinearPosterior, MapResult, Prior};
pub use model::{fit_simple_model, LogDensity, ModelFamily, SimpleModelSpec, WeightedLikelihood};
pub use rng::RngStream;
pub use synth::{build_catalytic_prior, CatalyticPrior, CovariateScheme, ResponseMode, SynthConfig};
