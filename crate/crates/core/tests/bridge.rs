mod common;

use catalytic::bridge::{
    certify_equivalence, joint_objective, profile_scales, profiled_objective, profiled_penalty,
    profiled_scale, solve_penalized, CertifyOptions, JointState, PenaltySpec, SolverOptions,
};
use catalytic::cli::{bridge_instance, BridgeKind};
use catalytic::{Dataset, RngStream};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn spd(r: &mut rand_chacha::ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| normal(r));
    let m = &a * a.transpose() / k as f64 + DMatrix::identity(k, k) * 0.5;
    (&m + m.transpose()) * 0.5
}

fn regression(r: &mut rand_chacha::ChaCha8Rng, n: usize, p: usize) -> Dataset {
    let x = DMatrix::from_fn(n, p, |_, _| normal(r));
    let y = DVector::from_fn(n, |i, _| x[(i, 0)] - 0.5 * x[(i, 1 % p)] + normal(r));
    Dataset::new(x, y, names(p)).unwrap()
}

fn all_specs(r: &mut rand_chacha::ChaCha8Rng, p: usize) -> Vec<PenaltySpec> {
    let center = DVector::from_fn(p, |_, _| 0.3 * normal(r));
    let (sigma, tau) = (0.5 + r.random::<f64>(), 1.0 + 5.0 * r.random::<f64>());
    let lambda = 0.2 + 3.0 * r.random::<f64>();
    let groups: Vec<Vec<usize>> = (0..p).collect::<Vec<_>>().chunks(2).map(<[usize]>::to_vec).collect();
    let metrics = groups.iter().map(|g| spd(r, g.len())).collect();
    vec![
        PenaltySpec::lasso(lambda, center.clone(), sigma, tau),
        PenaltySpec::elastic_net(lambda, DVector::from_fn(p, |_, _| 0.3 * normal(r)), center.clone(), sigma, tau),
        PenaltySpec::lq(lambda, 1.0 / 3.0, center.clone(), sigma, tau),
        PenaltySpec::lq(lambda, 1.0, center.clone(), sigma, tau),
        PenaltySpec::lq(lambda, 3.0, center.clone(), sigma, tau),
        PenaltySpec::group_lasso(lambda, groups, metrics, center, sigma, tau),
    ]
}

#[test]
fn scalar_objective_by_hand() {
    let data = Dataset::new(DMatrix::zeros(0, 1), DVector::zeros(0), names(1)).unwrap();
    let spec = PenaltySpec::lasso(1.0, DVector::zeros(1), 1.0, 2.0);
    let state = JointState::new(DVector::from_element(1, 1.0), DVector::from_element(1, 2f64.sqrt())).unwrap();
    let f = joint_objective(&state, &data, &spec).unwrap();
    assert!((f - 2f64.sqrt()).abs() < 1e-15);
    let s = profile_scales(&state.beta, &spec).unwrap();
    assert!((s[0] - 2f64.sqrt()).abs() < 1e-15);
    // a = 0 gives the boundary scale and no penalty
    let at_center = DVector::zeros(1);
    assert_eq!(profile_scales(&at_center, &spec).unwrap()[0], 0.0);
    assert_eq!(profiled_penalty(&at_center, &spec).unwrap(), 0.0);
}

#[test]
fn profiled_scales_beat_random_scales() {
    let mut r = rng(21);
    for _ in 0..10 {
        let data = regression(&mut r, 20, 4);
        for spec in all_specs(&mut r, 4) {
            let beta = DVector::from_fn(4, |_, _| normal(&mut r));
            let best = JointState { beta: beta.clone(), scales: profile_scales(&beta, &spec).unwrap() };
            let f_best = joint_objective(&best, &data, &spec).unwrap();
            for _ in 0..100 {
                let scales = DVector::from_fn(spec.n_scales(), |_, _| (2.0 * normal(&mut r)).exp());
                let f = joint_objective(&JointState::new(beta.clone(), scales).unwrap(), &data, &spec).unwrap();
                assert!(f_best <= f + 1e-12 * f.abs(), "{}: {f_best} > {f}", spec.name());
            }
        }
    }
}

#[test]
fn profiling_reproduces_the_penalized_criteria() {
    let mut r = rng(22);
    for _ in 0..50 {
        let data = regression(&mut r, 15, 4);
        for spec in all_specs(&mut r, 4) {
            let beta = DVector::from_fn(4, |_, _| normal(&mut r));
            let state = JointState { beta: beta.clone(), scales: profile_scales(&beta, &spec).unwrap() };
            let joint = joint_objective(&state, &data, &spec).unwrap();
            let profiled = profiled_objective(&beta, &data, &spec).unwrap();
            let lhs = profiled_scale(&spec) * joint;
            assert!((lhs - profiled).abs() <= 1e-10 * (1.0 + profiled.abs()), "{}: {lhs} vs {profiled}", spec.name());
        }
    }
}

#[test]
fn singleton_groups_with_unit_metrics_are_the_lasso() {
    let mut r = rng(23);
    let data = regression(&mut r, 20, 3);
    let center = DVector::from_vec(vec![0.1, -0.2, 0.3]);
    let lasso = PenaltySpec::lasso(1.5, center.clone(), 0.8, 3.0);
    let group = PenaltySpec::group_lasso(
        1.5,
        vec![vec![0], vec![1], vec![2]],
        vec![DMatrix::identity(1, 1); 3],
        center,
        0.8,
        3.0,
    );
    for _ in 0..10 {
        let beta = DVector::from_fn(3, |_, _| normal(&mut r));
        let a = profiled_objective(&beta, &data, &lasso).unwrap();
        let b = profiled_objective(&beta, &data, &group).unwrap();
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn joint_objective_is_convex_in_the_scales_for_r_at_least_one() {
    let mut r = rng(24);
    let data = regression(&mut r, 10, 3);
    for rr in [1.0, 2.0, 3.0] {
        let spec = PenaltySpec::lq(1.0, rr, DVector::zeros(3), 1.0, 2.0);
        for _ in 0..200 {
            let beta = DVector::from_fn(3, |_, _| normal(&mut r));
            let s1 = DVector::from_fn(3, |_, _| (normal(&mut r)).exp());
            let s2 = DVector::from_fn(3, |_, _| (normal(&mut r)).exp());
            let mid = (&s1 + &s2) * 0.5;
            let f = |s: &DVector<f64>| joint_objective(&JointState::new(beta.clone(), s.clone()).unwrap(), &data, &spec).unwrap();
            assert!(f(&mid) <= 0.5 * (f(&s1) + f(&s2)) + 1e-12);
        }
    }
}

#[test]
fn lq_penalty_exponent_is_two_r_over_r_plus_one() {
    for rr in [1.0 / 3.0, 1.0, 3.0] {
        let spec = PenaltySpec::lq(1.3, rr, DVector::zeros(1), 0.7, 2.5);
        let pen = |d: f64| profiled_penalty(&DVector::from_element(1, d), &spec).unwrap();
        let (lo, hi) = (1e-2, 1e1);
        let slope = (pen(hi).ln() - pen(lo).ln()) / (hi.ln() - lo.ln());
        assert!((slope - 2.0 * rr / (rr + 1.0)).abs() < 1e-3, "r = {rr}: slope {slope}");
    }
}

#[test]
fn ridge_closed_form_on_the_identity_design() {
    let data = Dataset::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 0.0]), names(2)).unwrap();
    let spec = PenaltySpec::ridge(DMatrix::identity(2, 2), DVector::zeros(2), 1.0, 1.0);
    let b = solve_penalized(&data, &spec, &SolverOptions::default()).unwrap();
    assert!((b[0] - 0.5).abs() < 1e-15 && b[1].abs() < 1e-15);
}

#[test]
fn ridge_certification_is_exact() {
    let (data, spec) = bridge_instance(BridgeKind::Ridge, 30, 8, RngStream::new(3)).unwrap();
    let rep = certify_equivalence(&data, &spec, &CertifyOptions::default());
    assert!(rep.passed);
    assert!(rep.objective_gap <= 1e-12 * (1.0 + rep.solver_objective.abs()));
    assert!(rep.argmin_gap <= 1e-12);
}

#[test]
fn lasso_solution_satisfies_kkt() {
    let mut r = rng(25);
    for _ in 0..20 {
        let data = regression(&mut r, 30, 8);
        let center = DVector::from_fn(8, |_, _| 0.25 * normal(&mut r));
        let (lambda, sigma) = (0.5 + 3.0 * r.random::<f64>(), 1.0);
        let spec = PenaltySpec::lasso(lambda, center.clone(), sigma, 8.0);
        let b = solve_penalized(&data, &spec, &SolverOptions::default()).unwrap();
        let kappa = (2.0 * lambda * sigma * sigma).sqrt();
        let g = data.covariates().transpose() * (data.response() - data.covariates() * &b);
        for j in 0..8 {
            let d = b[j] - center[j];
            if d != 0.0 {
                assert!((g[j] - kappa * d.signum()).abs() < 1e-8, "active {j}: {} vs {kappa}", g[j]);
            } else {
                assert!(g[j].abs() <= kappa + 1e-8);
            }
        }
    }
}

#[test]
fn large_lambda_returns_the_center() {
    let mut r = rng(26);
    let data = regression(&mut r, 30, 5);
    let center = DVector::from_fn(5, |_, _| normal(&mut r));
    let g = data.covariates().transpose() * (data.response() - data.covariates() * &center);
    let kappa = g.amax() * 1.001;
    let lambda = kappa * kappa / 2.0;
    let spec = PenaltySpec::lasso(lambda, center.clone(), 1.0, 5.0);
    let b = solve_penalized(&data, &spec, &SolverOptions::default()).unwrap();
    assert_eq!(b, center);
}

/// FISTA on `½‖Y−Xβ‖² + (τ/4)‖β−β̄‖² + κ‖β−β̃‖₁`.
fn enet_fista(x: &DMatrix<f64>, y: &DVector<f64>, ridge: &DVector<f64>, center: &DVector<f64>, tau: f64, kappa: f64) -> DVector<f64> {
    let p = x.ncols();
    let xtx = x.transpose() * x;
    let lmax = xtx.clone().symmetric_eigen().eigenvalues.max() + tau / 2.0;
    let step = 1.0 / lmax;
    let grad = |b: &DVector<f64>| -(x.transpose() * (y - x * b)) + (b - ridge) * (tau / 2.0);
    let prox = |v: &DVector<f64>| {
        DVector::from_fn(p, |j, _| {
            let d = v[j] - center[j];
            center[j] + d.signum() * (d.abs() - step * kappa).max(0.0)
        })
    };
    let mut b = center.clone();
    let mut z = b.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let next = prox(&(&z - grad(&z) * step));
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &b) * ((t - 1.0) / tn);
        let change = (&next - &b).amax();
        b = next;
        t = tn;
        if change < 1e-14 {
            break;
        }
    }
    b
}

#[test]
fn elastic_net_matches_an_independent_proximal_solver() {
    let mut r = rng(27);
    // the l1 constant from a grid over the scale: min_s a/s + (λ/τ)s with a = τd²/(4σ²)
    let (lambda, sigma, tau) = (2.0, 1.3, 8.0);
    let d: f64 = 0.7;
    let a = tau * d * d / (4.0 * sigma * sigma);
    let (_, v) = grid_min(|s| a / s + lambda / tau * s, 1e-4, 100.0, 1e-4);
    let kappa = (lambda * sigma * sigma).sqrt();
    assert!((sigma * sigma * v - kappa * d).abs() < 1e-6);

    for _ in 0..10 {
        let data = regression(&mut r, 30, 8);
        let zero = DVector::zeros(8);
        let spec = PenaltySpec::elastic_net(lambda, zero.clone(), zero.clone(), sigma, tau);
        let b = solve_penalized(&data, &spec, &SolverOptions::default()).unwrap();
        let oracle = enet_fista(data.covariates(), data.response(), &zero, &zero, tau, kappa);
        assert!((&b - &oracle).amax() < 1e-6, "gap {}", (&b - &oracle).amax());
    }
}

#[test]
fn group_lasso_drops_a_weak_group() {
    let mut r = rng(28);
    let n = 60;
    let x = DMatrix::from_fn(n, 4, |_, _| normal(&mut r));
    let y = DVector::from_fn(n, |i, _| 3.0 * x[(i, 0)] - 2.0 * x[(i, 1)] + normal(&mut r));
    let data = Dataset::new(x.clone(), y.clone(), names(4)).unwrap();
    let groups = vec![vec![0, 1], vec![2, 3]];
    let metrics = vec![spd(&mut r, 2), spd(&mut r, 2)];

    // dual norm of the weak block's gradient at the strong block's least-squares fit
    let xs = x.columns(0, 2).into_owned();
    let ls = (xs.transpose() * &xs).cholesky().unwrap().solve(&(xs.transpose() * &y));
    let res = &y - &xs * ls;
    let gw = x.columns(2, 2).transpose() * &res;
    let dual = |g: &DVector<f64>, m: &DMatrix<f64>| g.dot(&m.clone().cholesky().unwrap().solve(g)).sqrt();
    let kappa = 2.0 * dual(&gw, &metrics[1]);
    let lambda = kappa * kappa / 2.0;
    let spec = PenaltySpec::group_lasso(lambda, groups.clone(), metrics.clone(), DVector::zeros(4), 1.0, 4.0);
    let b = solve_penalized(&data, &spec, &SolverOptions::default()).unwrap();
    assert_eq!((b[2], b[3]), (0.0, 0.0));
    assert!(b[0].abs() > 1.0 && b[1].abs() > 0.5);

    // block KKT
    let g = x.transpose() * (&y - &x * &b);
    let g_strong = DVector::from_vec(vec![g[0], g[1]]);
    let bs = DVector::from_vec(vec![b[0], b[1]]);
    let norm_s = bs.dot(&(&metrics[0] * &bs)).sqrt();
    let expected = &metrics[0] * &bs * (kappa / norm_s);
    assert!((&g_strong - expected).amax() < 1e-6);
    let g_weak = DVector::from_vec(vec![g[2], g[3]]);
    assert!(dual(&g_weak, &metrics[1]) <= kappa + 1e-8);
}

#[test]
fn certification_passes_on_default_instances() {
    for kind in [BridgeKind::Lasso, BridgeKind::ElasticNet, BridgeKind::GroupLasso, BridgeKind::Lq(3.0), BridgeKind::Lq(1.0 / 3.0)] {
        let (data, spec) = bridge_instance(kind, 30, 8, RngStream::new(7)).unwrap();
        let rep = certify_equivalence(&data, &spec, &CertifyOptions::default());
        assert!(rep.passed, "{kind}: {:?}", rep.failure);
        assert_eq!(rep.local_only, matches!(kind, BridgeKind::Lq(r) if r < 1.0));
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let mut r = rng(29);
    let data = regression(&mut r, 10, 3);
    let beta = DVector::zeros(3);
    let bad_groups = PenaltySpec::group_lasso(1.0, vec![vec![0, 1]], vec![DMatrix::identity(2, 2)], DVector::zeros(3), 1.0, 1.0);
    assert!(profiled_objective(&beta, &data, &bad_groups).is_err());
    let not_spd = PenaltySpec::ridge(DMatrix::from_element(3, 3, 1.0), DVector::zeros(3), 1.0, 1.0);
    assert!(solve_penalized(&data, &not_spd, &SolverOptions::default()).is_err());
    assert!(JointState::new(beta.clone(), DVector::from_vec(vec![1.0, 0.0, 1.0])).is_err());
    let neg = PenaltySpec::lasso(-1.0, DVector::zeros(3), 1.0, 1.0);
    assert!(profile_scales(&beta, &neg).is_err());
}
