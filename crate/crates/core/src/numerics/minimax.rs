//! Nested `inf_θ sup_α` search.

use std::cell::RefCell;

use super::optimize::{maximize, minimize, Objective, OptimizeOptions, OptimizeReport, Region};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaxOptions {
    /// Outer stationarity tolerance; inner solves use `tol / 10`.
    pub tol: f64,
    pub max_outer_iter: usize,
    pub max_inner_iter: usize,
    /// Initial pattern-search step, relative to `max(1, |θ_i|)`.
    pub initial_step: f64,
    /// Pattern search hands over to quasi-Newton below this relative step.
    pub pattern_tol: f64,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        MinimaxOptions {
            tol: 1e-8,
            max_outer_iter: 100,
            max_inner_iter: 200,
            initial_step: 0.1,
            pattern_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxReport {
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub value: f64,
    /// Outer minimization of `V(θ) = sup_α inner(θ, α)`.
    pub outer: OptimizeReport,
    /// Inner maximization at the returned `θ`.
    pub inner: OptimizeReport,
    /// Outer and every inner solve at the solution converged.
    pub converged: bool,
}

/// Minimizes `V(θ)` where `solve_inner(θ, α_start, inner_opts)` returns the
/// inner maximization report. The inner solve is warm-started at the
/// previous inner maximizer, or at `alpha0` when that point is infeasible.
pub fn minimax_with<S>(
    mut solve_inner: S,
    outer_region: &Region,
    theta0: &[f64],
    alpha0: &[f64],
    opts: &MinimaxOptions,
) -> MinimaxReport
where
    S: FnMut(&[f64], &[f64], &OptimizeOptions) -> OptimizeReport,
{
    let inner_opts = OptimizeOptions {
        tol: opts.tol / 10.0,
        max_iter: opts.max_inner_iter,
    };
    let warm = RefCell::new(alpha0.to_vec());
    let mut value_at = |theta: &[f64]| -> OptimizeReport {
        let start = warm.borrow().clone();
        let mut r = solve_inner(theta, &start, &inner_opts);
        if !r.value.is_finite() && start.as_slice() != alpha0 {
            r = solve_inner(theta, alpha0, &inner_opts);
        }
        if r.value.is_finite() {
            *warm.borrow_mut() = r.argopt.clone();
        }
        r
    };

    let mut theta = theta0.to_vec();
    outer_region.project(&mut theta);
    if outer_region.dim() == 0 {
        let inner = value_at(&theta);
        let outer = OptimizeReport {
            argopt: theta.clone(),
            value: inner.value,
            gradient_norm: 0.0,
            iterations: 0,
            converged: true,
            boundary_active: vec![],
        };
        return MinimaxReport {
            converged: inner.converged,
            theta,
            alpha: inner.argopt.clone(),
            value: inner.value,
            outer,
            inner,
        };
    }

    // Compass search to get near the minimizer robustly.
    let v = |r: &OptimizeReport| if r.value.is_nan() { f64::INFINITY } else { r.value };
    let mut best = v(&value_at(&theta));
    let mut steps: Vec<f64> = theta
        .iter()
        .map(|t| opts.initial_step * t.abs().max(1.0))
        .collect();
    let mut evals = 0;
    while evals < 40 * theta.len().max(1) {
        let mut improved = false;
        for i in 0..theta.len() {
            for sign in [1.0, -1.0] {
                let mut trial = theta.clone();
                trial[i] += sign * steps[i];
                outer_region.project(&mut trial);
                if trial == theta {
                    continue;
                }
                evals += 1;
                let val = v(&value_at(&trial));
                if val < best {
                    best = val;
                    theta = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            let mut done = true;
            for (s, t) in steps.iter_mut().zip(&theta) {
                *s *= 0.5;
                if *s > opts.pattern_tol * t.abs().max(1.0) {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
    }

    struct Outer<'a, F: FnMut(&[f64]) -> OptimizeReport> {
        value_at: &'a mut F,
    }
    impl<F: FnMut(&[f64]) -> OptimizeReport> Objective for Outer<'_, F> {
        fn value(&mut self, x: &[f64]) -> f64 {
            (self.value_at)(x).value
        }
    }
    let outer = minimize(
        &mut Outer {
            value_at: &mut value_at,
        },
        outer_region,
        &theta,
        &OptimizeOptions {
            tol: opts.tol,
            max_iter: opts.max_outer_iter,
        },
    );
    let inner = value_at(&outer.argopt);
    MinimaxReport {
        converged: outer.converged && inner.converged,
        theta: outer.argopt.clone(),
        alpha: inner.argopt.clone(),
        value: inner.value,
        outer,
        inner,
    }
}

/// [`minimax_with`] for a plain inner function over a fixed inner region.
pub fn minimax<F>(
    inner: F,
    outer_region: &Region,
    inner_region: &Region,
    theta0: &[f64],
    alpha0: &[f64],
    opts: &MinimaxOptions,
) -> MinimaxReport
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    minimax_with(
        |theta, start, o| {
            let mut obj = super::optimize::FnObjective(|a: &[f64]| inner(theta, a));
            maximize(&mut obj, inner_region, start, o)
        },
        outer_region,
        theta0,
        alpha0,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamBox;

    fn square(lo: f64, hi: f64) -> Region {
        Region::Box(ParamBox::interval(lo, hi).unwrap())
    }

    #[test]
    fn quadratic_saddle() {
        let t = 0.3;
        let r = minimax(
            |th: &[f64], a: &[f64]| 0.5 * (th[0] - t).powi(2) - 0.5 * (a[0] - t).powi(2),
            &square(-5.0, 5.0),
            &square(-5.0, 5.0),
            &[-4.0],
            &[4.0],
            &MinimaxOptions::default(),
        );
        assert!((r.theta[0] - t).abs() < 1e-6 && (r.alpha[0] - t).abs() < 1e-6, "{r:?}");
        assert!(r.converged);
    }

    #[test]
    fn far_corner_start() {
        let r = minimax(
            |th: &[f64], a: &[f64]| (th[0] - 1.0).powi(2) - (a[0] - 1.0).powi(2),
            &square(-5.0, 5.0),
            &square(-5.0, 5.0),
            &[5.0],
            &[-5.0],
            &MinimaxOptions::default(),
        );
        assert!((r.theta[0] - 1.0).abs() < 1e-6 && (r.alpha[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn outer_independent_inner() {
        let r = minimax(
            |_: &[f64], a: &[f64]| -(a[0] - 2.0).powi(2) + 3.0,
            &square(-1.0, 1.0),
            &square(-5.0, 5.0),
            &[0.25],
            &[0.0],
            &MinimaxOptions::default(),
        );
        assert_eq!(r.theta, vec![0.25]);
        assert!((r.value - 3.0).abs() < 1e-12);
    }
}
