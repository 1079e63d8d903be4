//! Cross-check: alternating minimization of the joint objective against the
//! direct solver of the profiled objective.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::objective::{check_data, joint_objective, profile_scales, profiled_objective, profiled_scale};
use super::solvers::{solve_penalized, SolverOptions};
use super::{JointState, PenaltyKind, PenaltySpec};
use crate::data::Dataset;
use crate::error::Result;
use crate::linalg;
use crate::rng::RngStream;

const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub starts: usize,
    pub seed: u64,
    /// Cap on alternating (β, s) rounds per start.
    pub max_rounds: usize,
    /// Stop a start when β moves by at most `tol·(1 + ‖β‖∞)` in a round.
    pub tol: f64,
    pub solver: SolverOptions,
    pub objective_tol: f64,
    pub argmin_tol: f64,
    /// For the nonconvex case: how many starts must agree on one solution.
    pub min_agreeing_starts: usize,
    /// Relative spread of the random starting coefficients.
    pub start_spread: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            starts: 5,
            seed: 0,
            max_rounds: 200_000,
            tol: 1e-13,
            solver: SolverOptions::default(),
            objective_tol: 1e-8,
            argmin_tol: 1e-6,
            min_agreeing_starts: 3,
            start_spread: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// "global" for convex problems, "local" for L_q with r < 1.
    pub guarantee: String,
    pub local_only: bool,
    pub solver_objective: f64,
    pub best_objective: f64,
    pub objective_gap: f64,
    pub argmin_gap: f64,
    /// Each start's final joint objective, on the profiled scale.
    pub start_objectives: Vec<f64>,
    pub start_rounds: Vec<usize>,
    pub starts_at_best: usize,
    /// Size of the largest set of starts whose objectives agree.
    pub largest_agreeing: usize,
    pub beta_solver: Vec<f64>,
    pub beta_alternating: Vec<f64>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl CertificationReport {
    fn failed(spec: &PenaltySpec, msg: String) -> Self {
        Self {
            kind: spec.name().into(),
            r: matches!(spec.kind, PenaltyKind::Lq { .. }).then(|| spec.r()),
            guarantee: guarantee(spec).into(),
            local_only: spec.r() < 1.0,
            solver_objective: f64::NAN,
            best_objective: f64::NAN,
            objective_gap: f64::NAN,
            argmin_gap: f64::NAN,
            start_objectives: vec![],
            start_rounds: vec![],
            starts_at_best: 0,
            largest_agreeing: 0,
            beta_solver: vec![],
            beta_alternating: vec![],
            passed: false,
            failure: Some(msg),
        }
    }
}

fn guarantee(spec: &PenaltySpec) -> &'static str {
    if spec.r() < 1.0 {
        "local"
    } else {
        "global"
    }
}

/// Minimize the joint objective over β for fixed scales (a generalized
/// ridge solve).
fn beta_step(
    xtx: &DMatrix<f64>,
    xty: &DVector<f64>,
    spec: &PenaltySpec,
    scales: &DVector<f64>,
) -> Result<DVector<f64>> {
    let p = spec.p();
    let t = spec.tau;
    let c = &spec.center;
    let (mut a, mut b) = (xtx.clone(), xty.clone());
    match &spec.kind {
        PenaltyKind::Ridge { delta } => {
            a += delta;
            b += delta * c;
        }
        PenaltyKind::Lasso { .. } | PenaltyKind::Lq { .. } => {
            for j in 0..p {
                let w = t / scales[j];
                a[(j, j)] += w;
                b[j] += w * c[j];
            }
        }
        PenaltyKind::ElasticNet { ridge_center, .. } => {
            for j in 0..p {
                let w = t / (2.0 * scales[j]);
                a[(j, j)] += w + t / 2.0;
                b[j] += w * c[j] + t / 2.0 * ridge_center[j];
            }
        }
        PenaltyKind::GroupLasso {
            groups, metrics, ..
        } => {
            for (k, (g, m)) in groups.iter().zip(metrics).enumerate() {
                let w = t / scales[k];
                for (u, &i) in g.iter().enumerate() {
                    for (v, &j) in g.iter().enumerate() {
                        a[(i, j)] += w * m[(u, v)];
                        b[i] += w * m[(u, v)] * c[j];
                    }
                }
            }
        }
    }
    linalg::spd_solve(&linalg::symmetrize(&a), &b)
}

struct StartOutcome {
    beta: DVector<f64>,
    objective: f64,
    rounds: usize,
}

fn alternate(
    data: &Dataset,
    spec: &PenaltySpec,
    xtx: &DMatrix<f64>,
    xty: &DVector<f64>,
    init_scales: DVector<f64>,
    opts: &CertifyOptions,
) -> Result<StartOutcome> {
    let k = profiled_scale(spec);
    let mut scales = init_scales;
    let mut beta = beta_step(xtx, xty, spec, &scales)?;
    let mut rounds = 1;
    if spec.n_scales() > 0 {
        while rounds < opts.max_rounds {
            scales = profile_scales(&beta, spec)?.map(|s| s.max(SCALE_FLOOR));
            let next = beta_step(xtx, xty, spec, &scales)?;
            let change = (&next - &beta).amax();
            beta = next;
            rounds += 1;
            if change <= opts.tol * (1.0 + beta.amax()) {
                break;
            }
        }
        scales = profile_scales(&beta, spec)?.map(|s| s.max(SCALE_FLOOR));
    }
    let objective = k * joint_objective(&JointState { beta: beta.clone(), scales }, data, spec)?;
    Ok(StartOutcome {
        beta,
        objective,
        rounds,
    })
}

/// Run alternating minimization of the joint objective from `opts.starts`
/// random starting points and compare the best result with
/// [`solve_penalized`]. Failures are recorded in the report, not returned.
pub fn certify_equivalence(
    data: &Dataset,
    spec: &PenaltySpec,
    opts: &CertifyOptions,
) -> CertificationReport {
    match certify_inner(data, spec, opts) {
        Ok(r) => r,
        Err(e) => CertificationReport::failed(spec, e.to_string()),
    }
}

fn certify_inner(
    data: &Dataset,
    spec: &PenaltySpec,
    opts: &CertifyOptions,
) -> Result<CertificationReport> {
    check_data(data, spec)?;
    let x = data.covariates();
    let y = data.response();
    let xtx = linalg::symmetrize(&x.tr_mul(x));
    let xty = x.tr_mul(y);
    let stream = RngStream::new(opts.seed).split("certify-starts", 0);
    let mut rng = stream.rng();

    let starts = if spec.n_scales() == 0 { 1 } else { opts.starts.max(1) };
    // Starts are random perturbations of the (barely regularized) least-squares
    // fit, turned into scales by the profile step.
    let p = spec.p();
    let mut ls_gram = xtx.clone();
    for j in 0..p {
        ls_gram[(j, j)] += 1e-8 * (1.0 + xtx[(j, j)]);
    }
    let beta_ls = linalg::spd_solve(&ls_gram, &xty)?;
    let mut outcomes = Vec::with_capacity(starts);
    for _ in 0..starts {
        let beta0 = DVector::from_fn(p, |j, _| {
            let z: f64 = rng.sample(StandardNormal);
            beta_ls[j] + opts.start_spread * (1.0 + beta_ls[j].abs()) * z
        });
        let init = profile_scales(&beta0, spec)?.map(|s| s.max(SCALE_FLOOR));
        outcomes.push(alternate(data, spec, &xtx, &xty, init, opts)?);
    }

    let best = outcomes
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("at least one start");
    let best_objective = best.objective;
    let near = |v: f64| (v - best_objective).abs() <= opts.objective_tol * (1.0 + best_objective.abs());
    let starts_at_best = outcomes.iter().filter(|o| near(o.objective)).count();
    let agree = |a: f64, b: f64| (a - b).abs() <= opts.objective_tol * (1.0 + a.abs().max(b.abs()));
    let largest_agreeing = outcomes
        .iter()
        .map(|o| outcomes.iter().filter(|q| agree(o.objective, q.objective)).count())
        .max()
        .unwrap_or(0);

    let beta_solver = solve_penalized(data, spec, &opts.solver)?;
    let solver_objective = profiled_objective(&beta_solver, data, spec)?;
    let objective_gap = (best_objective - solver_objective).abs();
    let argmin_gap = (&best.beta - &beta_solver).amax();

    let local_only = spec.r() < 1.0;
    let (passed, failure) = if local_only {
        let ok = largest_agreeing >= opts.min_agreeing_starts.min(starts);
        (
            ok,
            (!ok).then(|| format!("at most {largest_agreeing} of {starts} starts agree on a solution")),
        )
    } else {
        let obj_ok = objective_gap <= opts.objective_tol * (1.0 + solver_objective.abs());
        let arg_ok = argmin_gap <= opts.argmin_tol;
        let failure = match (obj_ok, arg_ok) {
            (true, true) => None,
            (false, _) => Some(format!("objective gap {objective_gap:e} exceeds tolerance")),
            (true, false) => Some(format!("argmin gap {argmin_gap:e} exceeds tolerance")),
        };
        (failure.is_none(), failure)
    };

    Ok(CertificationReport {
        kind: spec.name().into(),
        r: matches!(spec.kind, PenaltyKind::Lq { .. }).then(|| spec.r()),
        guarantee: guarantee(spec).into(),
        local_only,
        solver_objective,
        best_objective,
        objective_gap,
        argmin_gap,
        start_objectives: outcomes.iter().map(|o| o.objective).collect(),
        start_rounds: outcomes.iter().map(|o| o.rounds).collect(),
        starts_at_best,
        largest_agreeing,
        beta_solver: beta_solver.iter().cloned().collect(),
        beta_alternating: best.beta.iter().cloned().collect(),
        passed,
        failure,
    })
}
