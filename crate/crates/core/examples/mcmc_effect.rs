//! Posterior of an average treatment effect by random-walk Metropolis.
//!
//! Each arm of a simulated job-training trial gets its own catalytic prior.
//! The Laplace approximation at the mode tunes the proposal, then the chain
//! draws are paired across arms to give the effect on the log-probability
//! scale, overall and for high-school graduates.

use catalytic::causal::{posterior_effect_distribution, Subgroup};
use catalytic::experiment::{simulate_population, SwimSimSpec};
use catalytic::model::ModelFamily;
use catalytic::newton::NewtonOptions;
use catalytic::posterior::{default_proposal, laplace_approx, rw_metropolis, MetropolisConfig};
use catalytic::{build_catalytic_prior, fit_map, fit_simple_model, Prior, RngStream, SynthConfig, WeightedLikelihood};

fn main() -> catalytic::Result<()> {
    let pop = simulate_population(&SwimSimSpec { n: 600, ..SwimSimSpec::default_v1() })?;
    let units = &pop.data;
    let master = RngStream::new(3);

    let mut chains = Vec::new();
    for (k, treated) in [true, false].into_iter().enumerate() {
        let arm = units.arm(treated)?;
        let simple = fit_simple_model(&arm, &[0], ModelFamily::Bernoulli)?;
        let config = SynthConfig { tau: 24.0, m: 400, ..SynthConfig::with_defaults(arm.p(), simple, k as u64) };
        let prior = build_catalytic_prior(&arm, &config)?;
        let map = fit_map(&arm, ModelFamily::Bernoulli, Prior::Catalytic(&prior), &NewtonOptions::default())?;

        let combined = prior.combine(&arm)?;
        let lik = WeightedLikelihood::new(&combined, ModelFamily::Bernoulli)?;
        let approx = laplace_approx(&lik, &map)?;
        let chain = rw_metropolis(
            &lik,
            &map.beta_hat,
            &default_proposal(&approx),
            &MetropolisConfig::with_steps(20_000),
            master.split("chain", k as u64),
        )?;
        println!(
            "{} arm: {} rows, acceptance {:.2}, {} kept draws",
            if treated { "treated" } else { "control" },
            arm.n(),
            chain.acceptance_rate,
            chain.len()
        );
        chains.push(chain);
    }

    for group in [Subgroup::all(), Subgroup::parse("hsdip == 1")?] {
        let mask = group.mask(units)?;
        let effect = posterior_effect_distribution(units.covariates(), &mask, &chains[0], &chains[1], &group.label)?
            .summarize(0.95)?;
        let s = effect.summary.as_ref().expect("summarized");
        println!("{:<12} mean {:+.4}  95% interval [{:+.4}, {:+.4}]", effect.group_label, s.mean, s.lower, s.upper);
    }
    Ok(())
}
