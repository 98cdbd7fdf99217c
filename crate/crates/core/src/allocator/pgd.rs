//! Projected gradient descent with Barzilai–Borwein trial steps and
//! backtracking on the projection arc.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// KKT residual accepted as converged.
    pub kkt_tol: f64,
    /// Residual at which iteration stops early.
    pub inner_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            kkt_tol: 1e-6,
            inner_tol: 1e-12,
        }
    }
}

/// Result of one convex subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemSolution<T> {
    pub value: T,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// `kkt_residual <= kkt_tol`. When false, `value` is the best iterate.
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct PgdOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// `‖x − P(x − ∇f(x))‖_∞`, zero exactly at a KKT point of a convex problem
/// over a closed convex set.
pub(crate) fn kkt_residual(x: &[f64], grad: &[f64], project: &impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let trial: Vec<f64> = x.iter().zip(grad).map(|(a, g)| a - g).collect();
    project(&trial)
        .iter()
        .zip(x)
        .map(|(p, a)| (p - a).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes a smooth convex `f` over the set defined by `project`, starting
/// from the feasible point `x0`. The objective never increases.
pub(crate) fn minimize(
    x0: Vec<f64>,
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    project: impl Fn(&[f64]) -> Vec<f64>,
    opts: &SolverOptions,
) -> PgdOutcome {
    let mut x = x0;
    let mut fx = f(&x);
    let mut g = grad(&x);
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut step = if gnorm > 0.0 { 1.0 / gnorm } else { 1.0 };
    let mut residual = kkt_residual(&x, &g, &project);
    let mut iterations = 0;

    while iterations < opts.max_iter && residual > opts.inner_tol {
        iterations += 1;
        let mut t = step;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, gi)| a - t * gi).collect();
            let xn = project(&trial);
            let d: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let dd = dot(&d, &d);
            if dd == 0.0 {
                break None;
            }
            let fxn = f(&xn);
            if fxn <= fx + dot(&g, &d) + dd / (2.0 * t) && fxn <= fx {
                break Some((xn, fxn, d));
            }
            t *= 0.5;
            if t < 1e-30 {
                break None;
            }
        };
        let Some((xn, fxn, s)) = accepted else {
            break;
        };
        let gn = grad(&xn);
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 { dot(&s, &s) / sy } else { t * 2.0 };
        if !step.is_finite() || step <= 0.0 {
            step = t;
        }
        x = xn;
        fx = fxn;
        g = gn;
        residual = kkt_residual(&x, &g, &project);
    }

    PgdOutcome {
        x,
        objective: fx,
        kkt_residual: residual,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::simplex::project_simplex_unchecked;

    #[test]
    fn minimizes_quadratic_on_simplex() {
        // min (x0-1)^2 + (x1-2)^2 + x2^2 on the unit simplex → (0, 1, 0).
        let target = [1.0, 2.0, 0.0];
        let out = minimize(
            vec![1.0 / 3.0; 3],
            |x| x.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum(),
            |x| x.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect(),
            |v| project_simplex_unchecked(v, 1.0),
            &SolverOptions::default(),
        );
        assert!(out.kkt_residual <= 1e-12);
        assert!((out.x[1] - 1.0).abs() < 1e-10, "{:?}", out.x);
    }

    #[test]
    fn already_optimal_start_takes_no_steps() {
        let out = minimize(
            vec![0.5, 0.5],
            |x| x[0] * x[0] + x[1] * x[1],
            |x| vec![2.0 * x[0], 2.0 * x[1]],
            |v| project_simplex_unchecked(v, 1.0),
            &SolverOptions::default(),
        );
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, vec![0.5, 0.5]);
    }
}
