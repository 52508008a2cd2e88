//! Minimization of smooth convex functions over the non-negative orthant.
//!
//! Every cone computation in the crate reduces to this shape: a point of a
//! finitely generated cone is `Σ λ_i g_i` with `λ ≥ 0`, so projections,
//! membership tests and the Laplace-transform minimization all run over
//! coefficient vectors. The solver is a projected gradient method with
//! Armijo backtracking along the projection arc. When the objective supplies
//! a Hessian, each iteration first tries a two-metric projected Newton step
//! on the free variables, falling back to the gradient step when that fails
//! to decrease the objective.

use nalgebra::{DMatrix, DVector};

/// A smooth objective over `R^n_+`.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Exact Hessian, when cheap to form.
    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stop once the projected-gradient norm falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Armijo sufficient-decrease constant for gradient steps.
    pub armijo: f64,
    /// Backtracking contraction factor.
    pub backtrack: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            max_iterations: 100_000,
            armijo: 0.5,
            backtrack: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Norm of the projected gradient: the stationarity measure for `x ≥ 0`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| if xi > 0.0 { gi } else { gi.min(0.0) })
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

fn project(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

const NEWTON_ARMIJO: f64 = 1e-4;
const BINDING_EPS: f64 = 1e-6;
const MIN_STEP: f64 = 1e-30;
const ROUNDING_LEVEL: f64 = 1e-13;

pub fn minimize_nonnegative<O: Objective>(
    objective: &O,
    start: &[f64],
    opts: &SolverOptions,
) -> Solution {
    let n = start.len();
    let mut x = start.to_vec();
    project(&mut x);
    let mut f = objective.value(&x);
    let mut g = objective.gradient(&x);
    let mut step = 1.0_f64;
    let mut iterations = 0;

    for iteration in 0..opts.max_iterations {
        iterations = iteration;
        let pg = projected_gradient_norm(&x, &g);
        if pg <= opts.tolerance {
            return Solution {
                x,
                value: f,
                gradient: g,
                projected_gradient_norm: pg,
                iterations: iteration,
                converged: true,
            };
        }
        if n == 0 {
            break;
        }

        let moved = newton_step(objective, &x, f, &g)
            .or_else(|| gradient_step(objective, &x, f, &g, &mut step, opts));
        match moved {
            Some((nx, nf)) => {
                x = nx;
                f = nf;
                g = objective.gradient(&x);
            }
            // No decrease is representable any more; report what we have.
            None => break,
        }
    }

    let pg = projected_gradient_norm(&x, &g);
    Solution {
        converged: pg <= opts.tolerance,
        projected_gradient_norm: pg,
        x,
        value: f,
        gradient: g,
        iterations,
    }
}

fn gradient_step<O: Objective>(
    objective: &O,
    x: &[f64],
    f: f64,
    g: &[f64],
    step: &mut f64,
    opts: &SolverOptions,
) -> Option<(Vec<f64>, f64)> {
    // Below this predicted decrease, values cannot be compared reliably and
    // steps are judged by stationarity instead.
    let noise = ROUNDING_LEVEL * f.abs().max(1.0);
    let pg = projected_gradient_norm(x, g);
    // Allow the step to grow back after earlier contractions.
    let mut alpha = (*step * 4.0).min(1e6);
    while alpha > MIN_STEP {
        let mut trial: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - alpha * gi).collect();
        project(&mut trial);
        let decrease: f64 = x
            .iter()
            .zip(&trial)
            .zip(g)
            .map(|((a, b), gi)| gi * (a - b))
            .sum();
        if decrease > 0.0 && decrease <= noise {
            let gt = objective.gradient(&trial);
            if projected_gradient_norm(&trial, &gt) < pg {
                *step = alpha;
                let ft = objective.value(&trial);
                return Some((trial, ft));
            }
        } else if decrease > 0.0 {
            let ft = objective.value(&trial);
            if ft <= f - opts.armijo * decrease {
                *step = alpha;
                return Some((trial, ft));
            }
        }
        alpha *= opts.backtrack;
    }
    None
}

fn newton_step<O: Objective>(
    objective: &O,
    x: &[f64],
    f: f64,
    g: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let h = objective.hessian(x)?;
    let n = x.len();

    // Variables pinned at the bound with an outward-pointing gradient are
    // handled by a scaled gradient step; the rest get a Newton direction.
    let mut trial_proj: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - gi).collect();
    project(&mut trial_proj);
    let gap: f64 = x
        .iter()
        .zip(&trial_proj)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let eps = BINDING_EPS.min(gap);
    let binding: Vec<bool> = (0..n).map(|i| x[i] <= eps && g[i] > 0.0).collect();
    let free: Vec<usize> = (0..n).filter(|&i| !binding[i]).collect();
    if free.is_empty() {
        return None;
    }

    let hff = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
    let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
    let df = solve_spd(hff, &gf)?;

    let mut direction = g.to_vec();
    for (k, &i) in free.iter().enumerate() {
        direction[i] = df[k];
    }
    let newton_decrease: f64 = free.iter().enumerate().map(|(k, &i)| g[i] * df[k]).sum();
    if !(newton_decrease > 0.0) {
        return None;
    }

    // Near the optimum the predicted decrease drops below the rounding noise
    // of `f`; there the full step is accepted on stationarity instead.
    if newton_decrease <= ROUNDING_LEVEL * f.abs().max(1.0) {
        let mut trial: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi - di).collect();
        project(&mut trial);
        let gt = objective.gradient(&trial);
        if projected_gradient_norm(&trial, &gt) < projected_gradient_norm(x, g) {
            let ft = objective.value(&trial);
            return Some((trial, ft));
        }
        return None;
    }

    let mut alpha = 1.0;
    while alpha > 1e-12 {
        let mut trial: Vec<f64> = x
            .iter()
            .zip(&direction)
            .map(|(xi, di)| xi - alpha * di)
            .collect();
        project(&mut trial);
        let decrease: f64 = (0..n)
            .map(|i| {
                if binding[i] {
                    g[i] * (x[i] - trial[i])
                } else {
                    alpha * g[i] * direction[i]
                }
            })
            .sum();
        let ft = objective.value(&trial);
        if ft.is_finite() && ft <= f - NEWTON_ARMIJO * decrease && ft < f {
            return Some((trial, ft));
        }
        alpha *= 0.5;
    }
    None
}

/// Solves `H d = g` for symmetric positive (semi)definite `H`, regularizing
/// when the factorization fails.
fn solve_spd(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        let d = ch.solve(g);
        if d.iter().all(|v| v.is_finite()) {
            return Some(d);
        }
    }
    let trace = h.trace().abs().max(1e-300);
    let mut ridge = 1e-14 * trace;
    for _ in 0..12 {
        let reg = &h + DMatrix::identity(h.nrows(), h.ncols()) * ridge;
        if let Some(ch) = reg.cholesky() {
            let d = ch.solve(g);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        ridge *= 100.0;
    }
    None
}
