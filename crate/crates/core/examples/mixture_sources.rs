//! Synthetic data from a mixture of simple models.
//!
//! Each synthetic row picks one of several single-covariate logistic fits
//! (plus the intercept-only fit) and draws its response from it. The example
//! prints where the synthetic rows came from and compares the resulting
//! posterior mode with the intercept-only prior.

use catalytic::experiment::{simulate_population, SwimSimSpec};
use catalytic::model::ModelFamily;
use catalytic::newton::NewtonOptions;
use catalytic::{build_catalytic_prior, fit_map, fit_simple_model, Prior, SynthConfig};

fn main() -> catalytic::Result<()> {
    let pop = simulate_population(&SwimSimSpec { n: 400, ..SwimSimSpec::default_v1() })?;
    let arm = pop.data.arm(true)?;
    let family = ModelFamily::Bernoulli;

    let mut sources = vec![fit_simple_model(&arm, &[0], family)?];
    for name in ["hsdip", "divwid", "earnpre1y", "emppre1y"] {
        let j = arm.column_index(name).expect("simulated column");
        sources.push(fit_simple_model(&arm, &[j], family)?);
    }
    for s in &sources {
        let terms: Vec<String> = s
            .subset
            .iter()
            .map(|&j| format!("{} {:+.3}", arm.column_names()[j], s.coefficients[j]))
            .collect();
        println!("source: {}", terms.join(", "));
    }

    let opts = NewtonOptions::default();
    let mixture = build_catalytic_prior(&arm, &SynthConfig::mixture(sources.clone(), 400, 24.0, 9))?;
    let single = build_catalytic_prior(&arm, &SynthConfig { tau: 24.0, ..SynthConfig::with_defaults(arm.p(), sources[0].clone(), 9) })?;
    println!("synthetic response mean: mixture {:.3}, intercept-only {:.3}", mixture.synthetic().response().mean(), single.synthetic().response().mean());

    let a = fit_map(&arm, family, Prior::Catalytic(&mixture), &opts)?;
    let b = fit_map(&arm, family, Prior::Catalytic(&single), &opts)?;
    println!("\n{:<12} {:>10} {:>15}", "column", "mixture", "intercept-only");
    for j in 0..arm.p() {
        println!("{:<12} {:>10.3} {:>15.3}", arm.column_names()[j], a.beta_hat[j], b.beta_hat[j]);
    }
    Ok(())
}
