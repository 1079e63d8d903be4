mod common;

use catalytic::model::{LogDensity, ModelFamily};
use catalytic::newton::NewtonOptions;
use catalytic::posterior::{
    batch_means_se, default_proposal, laplace_approx, posterior_summary, rw_metropolis,
    GaussianApprox, MetropolisConfig, SampleMatrix,
};
use catalytic::{fit_map, Prior, RngStream, WeightedLikelihood};
use common::*;
use nalgebra::{DMatrix, DVector};

/// Independent gaussian target with the given means and standard deviations.
struct Normal2 {
    mean: [f64; 2],
    sd: [f64; 2],
}

impl LogDensity for Normal2 {
    fn dim(&self) -> usize {
        2
    }
    fn log_density(&self, t: &DVector<f64>) -> f64 {
        (0..2).map(|j| -0.5 * ((t[j] - self.mean[j]) / self.sd[j]).powi(2)).sum()
    }
    fn gradient_neg_hessian(&self, t: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let g = DVector::from_fn(2, |j, _| -(t[j] - self.mean[j]) / self.sd[j].powi(2));
        let h = DMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 / self.sd[i].powi(2) } else { 0.0 });
        (g, h)
    }
}

#[test]
fn metropolis_recovers_a_gaussian_target() {
    let target = Normal2 { mean: [1.0, -2.0], sd: [0.5, 2.0] };
    let approx = GaussianApprox {
        mean: DVector::from_vec(vec![0.0, 0.0]),
        covariance: DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 4.0])),
    };
    let cfg = MetropolisConfig::with_steps(200_000);
    let s = rw_metropolis(&target, &approx.mean, &default_proposal(&approx), &cfg, RngStream::new(5)).unwrap();
    assert!(s.acceptance_rate > 0.15 && s.acceptance_rate < 0.7, "acceptance {}", s.acceptance_rate);
    for j in 0..2 {
        let d = s.column(j);
        let se = batch_means_se(&d, 50);
        let m = d.iter().sum::<f64>() / d.len() as f64;
        assert!((m - target.mean[j]).abs() < 5.0 * se, "coordinate {j}: {m} vs {}", target.mean[j]);
        let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((var.sqrt() / target.sd[j] - 1.0).abs() < 0.05);
    }
}

#[test]
fn chains_are_reproducible_from_the_seed() {
    let target = Normal2 { mean: [0.0, 0.0], sd: [1.0, 1.0] };
    let prop = DMatrix::identity(2, 2);
    let cfg = MetropolisConfig::with_steps(2_000);
    let init = DVector::zeros(2);
    let a = rw_metropolis(&target, &init, &prop, &cfg, RngStream::new(9)).unwrap();
    let b = rw_metropolis(&target, &init, &prop, &cfg, RngStream::new(9)).unwrap();
    let c = rw_metropolis(&target, &init, &prop, &cfg, RngStream::new(10)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.draws, c.draws);
    assert_eq!(a.len(), (2_000 - 400) / 5);
}

#[test]
fn invalid_chain_settings_are_rejected() {
    let target = Normal2 { mean: [0.0, 0.0], sd: [1.0, 1.0] };
    let init = DVector::zeros(2);
    let prop = DMatrix::identity(2, 2);
    let bad = MetropolisConfig { steps: 10, burn_in: 10, thin: 1 };
    assert!(rw_metropolis(&target, &init, &prop, &bad, RngStream::new(0)).is_err());
    let bad = MetropolisConfig { steps: 10, burn_in: 0, thin: 0 };
    assert!(rw_metropolis(&target, &init, &prop, &bad, RngStream::new(0)).is_err());
    assert!(rw_metropolis(&target, &DVector::zeros(3), &prop, &MetropolisConfig::default(), RngStream::new(0)).is_err());
}

#[test]
fn laplace_covariance_is_the_inverse_negative_hessian() {
    let mut r = rng(3);
    let data = bernoulli_data(&mut r, 150, 3, &[0.2, 0.8, -0.5]);
    let map = fit_map(&data, ModelFamily::Bernoulli, Prior::Flat, &NewtonOptions::default()).unwrap();
    let lik = WeightedLikelihood::new(&data, ModelFamily::Bernoulli).unwrap();
    let approx = laplace_approx(&lik, &map).unwrap();
    let rows = Rows::from(&[&data]);
    let h = fd_hessian(|b| rows.logistic(b).1, map.beta_hat.as_slice(), 1e-5);
    let neg: Vec<Vec<f64>> = h.iter().map(|row| row.iter().map(|v| -v).collect()).collect();
    let inv = gauss_jordan_inverse(&neg);
    for i in 0..3 {
        for j in 0..3 {
            assert!((approx.covariance[(i, j)] - inv[i][j]).abs() < 1e-6);
        }
    }
    let draws = approx.sample(50_000, RngStream::new(1)).unwrap();
    let s = SampleMatrix::from_draws(draws);
    let m = s.mean();
    for j in 0..3 {
        assert!((m[j] - approx.mean[j]).abs() < 5.0 * (approx.covariance[(j, j)] / 50_000.0).sqrt());
    }
}

#[test]
fn summary_uses_interpolated_quantiles() {
    let draws: Vec<f64> = (0..101).map(f64::from).collect();
    let s = posterior_summary(&draws, 0.9).unwrap();
    assert_eq!(s.mean, 50.0);
    assert!((s.lower - 5.0).abs() < 1e-12 && (s.upper - 95.0).abs() < 1e-12);
    let s = posterior_summary(&[0.0, 1.0], 0.5).unwrap();
    assert!((s.lower - 0.25).abs() < 1e-15 && (s.upper - 0.75).abs() < 1e-15);
    assert!(posterior_summary(&draws, 1.0).is_err());
    assert!(posterior_summary(&[1.0], 0.9).is_err());
    assert!(posterior_summary(&[1.0, f64::NAN], 0.9).is_err());
}

#[test]
fn sample_csv_round_trips() {
    let draws = DMatrix::from_row_slice(3, 2, &[0.1, -1.0, 0.123456789012345, 2.0, 1e-300, 3.5]);
    let s = SampleMatrix::from_draws(draws);
    let names = vec!["a".to_owned(), "b".to_owned()];
    let mut buf = Vec::new();
    s.write_csv(&mut buf, Some(&names)).unwrap();
    let (back, header) = SampleMatrix::read_csv(buf.as_slice()).unwrap();
    assert_eq!(header, names);
    assert_eq!(back.draws, s.draws);
}
