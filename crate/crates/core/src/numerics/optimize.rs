//! Projected quasi-Newton maximization over boxes and ball∩box regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed coordinate-wise intervals; bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidConfig("box bounds differ in length".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::InvalidConfig(format!("empty interval [{l}, {u}]")));
            }
        }
        Ok(ParamBox { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        ParamBox {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| v >= l && v <= u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Midpoint of each finite interval; a finite end or 0 otherwise.
    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| match (l.is_finite(), u.is_finite()) {
                (true, true) => 0.5 * (l + u),
                (true, false) => l.max(0.0),
                (false, true) => u.min(0.0),
                (false, false) => 0.0,
            })
            .collect()
    }

    pub fn intersect(&self, other: &ParamBox) -> Result<ParamBox> {
        let lower = self.lower.iter().zip(&other.lower).map(|(a, b)| a.max(*b)).collect();
        let upper = self.upper.iter().zip(&other.upper).map(|(a, b)| a.min(*b)).collect();
        ParamBox::new(lower, upper)
    }
}

/// Feasible region of a maximization.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Box(ParamBox),
    /// `box ∩ {x : ‖x − center‖ ≤ radius}`.
    BallBox {
        bounds: ParamBox,
        center: Vec<f64>,
        radius: f64,
    },
}

impl Region {
    pub fn dim(&self) -> usize {
        self.bounds().dim()
    }

    pub fn bounds(&self) -> &ParamBox {
        match self {
            Region::Box(b) => b,
            Region::BallBox { bounds, .. } => bounds,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Box(b) => b.contains(x),
            Region::BallBox {
                bounds,
                center,
                radius,
            } => bounds.contains(x) && dist(x, center) <= radius * (1.0 + 1e-12),
        }
    }

    /// Euclidean projection (Dykstra's alternating scheme for ball∩box).
    pub fn project(&self, x: &mut [f64]) {
        match self {
            Region::Box(b) => b.project(x),
            Region::BallBox {
                bounds,
                center,
                radius,
            } => {
                let n = x.len();
                let mut p = vec![0.0; n];
                let mut q = vec![0.0; n];
                let mut y = x.to_vec();
                for _ in 0..200 {
                    let mut z: Vec<f64> = (0..n).map(|i| y[i] + p[i]).collect();
                    project_ball(&mut z, center, *radius);
                    for i in 0..n {
                        p[i] = y[i] + p[i] - z[i];
                    }
                    let mut w: Vec<f64> = (0..n).map(|i| z[i] + q[i]).collect();
                    bounds.project(&mut w);
                    for i in 0..n {
                        q[i] = z[i] + q[i] - w[i];
                    }
                    let change = dist(&w, &y);
                    y = w;
                    if change <= 1e-15 * (1.0 + radius) {
                        break;
                    }
                }
                // Land exactly inside the box; the ball side is within rounding.
                bounds.project(&mut y);
                x.copy_from_slice(&y);
            }
        }
    }

    fn projected(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.project(&mut y);
        y
    }
}

fn project_ball(x: &mut [f64], center: &[f64], radius: f64) {
    let d = dist(x, center);
    if d > radius {
        let s = radius / d;
        for (v, c) in x.iter_mut().zip(center) {
            *v = c + (*v - c) * s;
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A function to maximize. Values `−∞` (and NaN) mark infeasible points.
pub trait Objective {
    fn value(&mut self, x: &[f64]) -> f64;

    /// Value and gradient at `x`. The default uses central differences that
    /// fall back to one-sided ones at the region boundary or next to
    /// infeasible points.
    fn value_grad(&mut self, x: &[f64], region: &Region, grad: &mut [f64]) -> f64 {
        let f0 = self.value(x);
        fd_gradient(|y| self.value(y), x, f0, region, grad);
        f0
    }
}

/// Central-difference gradient with step `ε^{1/3}·max(1, |x_i|)`.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    f0: f64,
    region: &Region,
    grad: &mut [f64],
) {
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let h = f64::EPSILON.cbrt() * x[i].abs().max(1.0);
        y[i] = x[i] + h;
        let up = if region.contains(&y) { f(&y) } else { f64::NAN };
        y[i] = x[i] - h;
        let down = if region.contains(&y) { f(&y) } else { f64::NAN };
        y[i] = x[i];
        let ok = |v: f64| v.is_finite();
        grad[i] = match (ok(up), ok(down)) {
            (true, true) => (up - down) / (2.0 * h),
            (true, false) => (up - f0) / h,
            (false, true) => (f0 - down) / h,
            (false, false) => 0.0,
        };
    }
}

/// Wraps a plain closure; gradients by finite differences.
pub struct FnObjective<F>(pub F);

impl<F: FnMut(&[f64]) -> f64> Objective for FnObjective<F> {
    fn value(&mut self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Wraps a closure returning value and writing the gradient.
pub struct GradObjective<F>(pub F);

impl<F: FnMut(&[f64], Option<&mut [f64]>) -> f64> Objective for GradObjective<F> {
    fn value(&mut self, x: &[f64]) -> f64 {
        (self.0)(x, None)
    }

    fn value_grad(&mut self, x: &[f64], _region: &Region, grad: &mut [f64]) -> f64 {
        (self.0)(x, Some(grad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    /// Stationarity tolerance on `‖P(x + ∇f) − x‖∞`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            tol: 1e-9,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub argopt: Vec<f64>,
    pub value: f64,
    /// Norm of the projected gradient step at `argopt`.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub boundary_active: Vec<bool>,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

/// Maximizes `objective` over `region` starting from the projection of `init`.
///
/// Never fails: an exhausted iteration budget or a stalled line search yields
/// `converged = false` with the best point found. A report whose value is
/// `−∞` means no feasible point was seen.
pub fn maximize<O: Objective + ?Sized>(
    objective: &mut O,
    region: &Region,
    init: &[f64],
    opts: &OptimizeOptions,
) -> OptimizeReport {
    let n = region.dim();
    let mut x = region.projected(init);
    let mut g = vec![0.0; n];
    let mut f = objective.value_grad(&x, region, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return OptimizeReport {
            boundary_active: boundary_flags(region, &x, opts.tol),
            argopt: x,
            value: if f.is_nan() { f64::NEG_INFINITY } else { f },
            gradient_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }
    // Inverse Hessian approximation of −f.
    let mut h = identity(n);
    let mut scaled = false;
    let mut pg_norm = projected_step_norm(region, &x, &g);
    let mut iterations = 0;
    let mut converged = pg_norm <= opts.tol;
    let mut gn = vec![0.0; n];
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let active = active_set(region, &x, &g);
        let mut d = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                continue;
            }
            for j in 0..n {
                if !active[j] {
                    d[i] += h[i][j] * g[j];
                }
            }
        }
        if !(dot(&d, &g) > 0.0) {
            d = g.iter().zip(&active).map(|(v, a)| if *a { 0.0 } else { *v }).collect();
            h = identity(n);
            scaled = false;
        }
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let xn = region.projected(&trial);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if norm_inf(&step) == 0.0 {
                break;
            }
            let fnew = objective.value(&xn);
            if fnew.is_finite() && fnew >= f + ARMIJO_C * dot(&g, &step) {
                accepted = Some((xn, fnew, step));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, _, s)) = accepted else {
            if scaled {
                h = identity(n);
                scaled = false;
                continue;
            }
            break;
        };
        let fnew = objective.value_grad(&xn, region, &mut gn);
        if !fnew.is_finite() || gn.iter().any(|v| !v.is_finite()) {
            break;
        }
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !scaled {
                let c = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut().enumerate().for_each(|(i, r)| r[i] = c);
                scaled = true;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        let small_step = norm_inf(&s) <= 1e-15 * (1.0 + norm_inf(&x));
        x = xn;
        f = fnew;
        std::mem::swap(&mut g, &mut gn);
        pg_norm = projected_step_norm(region, &x, &g);
        converged = pg_norm <= opts.tol;
        if small_step && !converged {
            break;
        }
    }
    OptimizeReport {
        boundary_active: boundary_flags(region, &x, opts.tol),
        argopt: x,
        value: f,
        gradient_norm: pg_norm,
        iterations,
        converged,
    }
}

/// Convenience wrapper: `maximize` on `−f`, report value negated back.
pub fn minimize<O: Objective + ?Sized>(
    objective: &mut O,
    region: &Region,
    init: &[f64],
    opts: &OptimizeOptions,
) -> OptimizeReport {
    let mut neg = Negated(objective);
    let mut r = maximize(&mut neg, region, init, opts);
    r.value = -r.value;
    r
}

struct Negated<'a, O: ?Sized>(&'a mut O);

impl<O: Objective + ?Sized> Objective for Negated<'_, O> {
    fn value(&mut self, x: &[f64]) -> f64 {
        let v = -self.0.value(x);
        if v == f64::INFINITY || v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn value_grad(&mut self, x: &[f64], region: &Region, grad: &mut [f64]) -> f64 {
        let v = -self.0.value_grad(x, region, grad);
        grad.iter_mut().for_each(|g| *g = -*g);
        if v == f64::INFINITY || v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
    }
}

fn projected_step_norm(region: &Region, x: &[f64], g: &[f64]) -> f64 {
    let moved: Vec<f64> = x.iter().zip(g).map(|(a, b)| a + b).collect();
    let p = region.projected(&moved);
    p.iter().zip(x).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

fn active_set(region: &Region, x: &[f64], g: &[f64]) -> Vec<bool> {
    let b = region.bounds();
    (0..x.len())
        .map(|i| (x[i] <= b.lower[i] && g[i] < 0.0) || (x[i] >= b.upper[i] && g[i] > 0.0))
        .collect()
}

fn boundary_flags(region: &Region, x: &[f64], tol: f64) -> Vec<bool> {
    let b = region.bounds();
    let mut flags: Vec<bool> = (0..x.len())
        .map(|i| x[i] - b.lower[i] <= tol || b.upper[i] - x[i] <= tol)
        .collect();
    if let Region::BallBox { center, radius, .. } = region {
        if radius - dist(x, center) <= tol {
            flags.iter_mut().for_each(|f| *f = true);
        }
    }
    flags
}
