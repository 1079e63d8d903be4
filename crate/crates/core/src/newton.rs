//! Newton's method with step halving for maximizing a [`LogDensity`].
//!
//! One solver serves flat, catalytic and Cauchy objectives. A run is declared
//! converged only when the gradient norm is below tolerance *and* the Newton
//! step is negligible; under complete separation the gradient decays
//! exponentially while the step stays of order one, so separation never
//! passes as convergence.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LogDensity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            grad_tol: 1e-8,
            max_halvings: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub beta: DVector<f64>,
    pub neg_hessian: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub objective: f64,
    /// Objective after each accepted step, starting with the initial value.
    /// Non-decreasing up to rounding of the objective.
    pub trace: Vec<f64>,
}

const STEP_TOL: f64 = 1e-6;
const ROUNDING_GAIN: f64 = 1e-13;

pub fn maximize<D: LogDensity + ?Sized>(
    density: &D,
    init: DVector<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    if init.len() != density.dim() {
        return Err(Error::Dimension(format!(
            "initial value has length {}, density has dimension {}",
            init.len(),
            density.dim()
        )));
    }
    let mut beta = init;
    let mut f = density.log_density(&beta);
    if !f.is_finite() {
        return Err(Error::NonFinite("objective at initial value".into()));
    }
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;

    let (mut g, mut h) = density.gradient_neg_hessian(&beta);
    loop {
        if g.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "derivatives at iteration {iterations}"
            )));
        }
        let chol = h
            .clone()
            .cholesky()
            .or_else(|| density.fallback_curvature(&beta).and_then(|c| c.cholesky()));
        let Some(chol) = chol else {
            return Err(Error::SingularNewton {
                iteration: iterations,
                beta: beta.iter().cloned().collect(),
            });
        };
        let step = chol.solve(&g);
        let gn = g.norm();
        let step_small = step.amax() <= STEP_TOL * (1.0 + beta.amax());
        if gn <= opts.grad_tol && step_small {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }

        let mut t = 1.0;
        let mut accepted = None;
        // Inside the quadratic region the predicted gain can be smaller than
        // the rounding error of the objective, which would make the ascent
        // test reject good steps; take the full step there.
        if g.dot(&step) <= ROUNDING_GAIN * (1.0 + f.abs()) {
            let cand = &beta + &step;
            let fc = density.log_density(&cand);
            if fc.is_finite() {
                accepted = Some((cand, fc));
            }
        }
        for _ in 0..=opts.max_halvings {
            if accepted.is_some() {
                break;
            }
            let cand = &beta + &step * t;
            let fc = density.log_density(&cand);
            if fc.is_finite() && fc >= f {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            // No ascent possible in floating point: we are at the optimum if
            // the gradient is already tiny.
            converged = gn <= opts.grad_tol;
            break;
        };
        beta = cand;
        f = fc;
        trace.push(f);
        iterations += 1;
        (g, h) = density.gradient_neg_hessian(&beta);
    }

    Ok(NewtonOutcome {
        grad_norm: g.norm(),
        beta,
        neg_hessian: h,
        converged,
        iterations,
        objective: f,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;

    impl LogDensity for Quadratic {
        fn dim(&self) -> usize {
            2
        }
        fn log_density(&self, t: &DVector<f64>) -> f64 {
            -(t[0] - 1.0).powi(2) - 2.0 * (t[1] + 3.0).powi(2)
        }
        fn gradient_neg_hessian(&self, t: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
            (
                DVector::from_vec(vec![-2.0 * (t[0] - 1.0), -4.0 * (t[1] + 3.0)]),
                DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0])),
            )
        }
    }

    #[test]
    fn quadratic_converges_in_one_step() {
        let out = maximize(&Quadratic, DVector::zeros(2), &NewtonOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert!((out.beta[0] - 1.0).abs() < 1e-14 && (out.beta[1] + 3.0).abs() < 1e-14);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        assert!(matches!(
            maximize(&Quadratic, DVector::zeros(3), &NewtonOptions::default()),
            Err(Error::Dimension(_))
        ));
    }
}
