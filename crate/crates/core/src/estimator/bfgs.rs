//! Dense BFGS minimizer with a backtracking (Armijo) line search.
//!
//! Objective failures are treated as `+∞`, so the line search backtracks
//! out of regions where the likelihood cannot be evaluated.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Converged when `max_j |g_j| ≤ gradient_tolerance`.
    pub gradient_tolerance: f64,
    /// Stop when `max_j |Δx_j| / max(|x_j|, 1)` falls below this.
    pub parameter_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    ParameterTolerance,
    LineSearchFailed,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn minimize<F, G>(f: F, grad: G, x0: &[f64], opts: BfgsOptions) -> Result<BfgsOutcome>
where
    F: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice())?;
    let mut g = DVector::from_vec(grad(x.as_slice())?);
    let mut inv_h = DMatrix::identity(n, n) / max_abs(&g).max(1.0);
    let mut fresh = true;
    let mut trace = vec![fx];
    let mut iterations = 0;

    let termination = loop {
        if max_abs(&g) <= opts.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }

        let mut direction = -(&inv_h * &g);
        let mut slope = g.dot(&direction);
        if !(slope < 0.0) {
            inv_h = DMatrix::identity(n, n) / max_abs(&g).max(1.0);
            fresh = true;
            direction = -(&inv_h * &g);
            slope = g.dot(&direction);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &direction * step;
            if let Ok(ft) = f(trial.as_slice()) {
                if ft.is_finite() && ft <= fx + ARMIJO_C1 * step * slope {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break Termination::LineSearchFailed;
            }
            inv_h = DMatrix::identity(n, n) / max_abs(&g).max(1.0);
            fresh = true;
            continue;
        };

        let g_new = DVector::from_vec(grad(x_new.as_slice())?);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let rel_step = s
            .iter()
            .zip(x.iter())
            .fold(0.0f64, |m, (si, xi)| m.max(si.abs() / xi.abs().max(1.0)));

        x = x_new;
        fx = f_new;
        g = g_new;
        iterations += 1;
        trace.push(fx);

        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                inv_h = DMatrix::identity(n, n) * (sy / y.dot(&y));
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &inv_h * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρsy')H(I − ρys') + ρss'
            inv_h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }

        if max_abs(&g) <= opts.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        if rel_step < opts.parameter_tolerance {
            break Termination::ParameterTolerance;
        }
    };

    Ok(BfgsOutcome {
        converged: termination == Termination::GradientTolerance,
        x: x.as_slice().to_vec(),
        value: fx,
        gradient: g.as_slice().to_vec(),
        iterations,
        termination,
        trace,
    })
}
