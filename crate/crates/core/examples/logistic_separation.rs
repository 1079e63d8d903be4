//! Logistic regression on completely separated data.
//!
//! The flat-prior MLE does not exist here, so Newton either runs off to
//! infinity or hits a singular system. The catalytic posterior mode and the
//! Cauchy baseline both stay finite.

use catalytic::fit::CauchyOptions;
use catalytic::model::ModelFamily;
use catalytic::newton::NewtonOptions;
use catalytic::{
    build_catalytic_prior, fit_cauchy_map, fit_map, fit_simple_model, Dataset, Error, Prior, RngStream, SynthConfig,
    INTERCEPT,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn main() -> catalytic::Result<()> {
    let n = 40;
    let mut rng = RngStream::new(11).rng();
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => (0.2 + rng.random::<f64>()) * if i % 2 == 0 { 1.0 } else { -1.0 },
        _ => rng.random::<f64>() - 0.5,
    });
    // y is exactly the sign of x1
    let y = DVector::from_fn(n, |i, _| if x[(i, 1)] > 0.0 { 1.0 } else { 0.0 });
    let data = Dataset::new(x, y, vec![INTERCEPT.into(), "x1".into(), "x2".into()])?;
    let family = ModelFamily::Bernoulli;
    let opts = NewtonOptions::default();

    match fit_map(&data, family, Prior::Flat, &opts) {
        Ok(fit) => println!(
            "flat:      converged={} diverged={} |beta|={:.3e} after {} iterations",
            fit.converged,
            fit.diverged(),
            fit.beta_hat.norm(),
            fit.iterations
        ),
        Err(Error::SingularNewton { beta, .. }) => {
            let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
            println!("flat:      singular Newton system, last |beta| = {norm:.3e}")
        }
        Err(e) => return Err(e),
    }

    let simple = fit_simple_model(&data, &[0], family)?;
    let prior = build_catalytic_prior(&data, &SynthConfig::with_defaults(3, simple, 1))?;
    let cat = fit_map(&data, family, Prior::Catalytic(&prior), &opts)?;
    println!(
        "catalytic: converged={} beta=[{:.3}, {:.3}, {:.3}] in {} iterations",
        cat.converged, cat.beta_hat[0], cat.beta_hat[1], cat.beta_hat[2], cat.iterations
    );

    let cauchy = fit_cauchy_map(&data, &CauchyOptions::default())?;
    println!(
        "cauchy:    converged={} beta=[{:.3}, {:.3}, {:.3}]",
        cauchy.converged, cauchy.beta_hat[0], cauchy.beta_hat[1], cauchy.beta_hat[2]
    );
    Ok(())
}
