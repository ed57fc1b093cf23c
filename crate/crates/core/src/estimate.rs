//! Dual estimators `α̂(θ)`, min-max estimators `θ̂`, constrained estimates over
//! `Θ₀ = s(B₀)` and their asymptotic covariances.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dual::DualObjective;
use crate::error::{Error, Result};
use crate::model::{ParamBox, Sample};
use crate::numerics::{
    maximize, minimax_with, minimize, FnObjective, GradObjective, MinimaxOptions, OptimizeOptions,
    OptimizeReport, Region,
};

/// Global search over `Θ`, or search restricted to a ball around a known
/// center (radius `n^{−1/3}` unless given).
#[derive(Debug, Clone, PartialEq)]
pub enum EstimateMode {
    Global,
    LocalBall { center: Vec<f64>, radius: Option<f64> },
}

impl EstimateMode {
    fn region(&self, bounds: &ParamBox, n: usize) -> Region {
        match self {
            EstimateMode::Global => Region::Box(bounds.clone()),
            EstimateMode::LocalBall { center, radius } => Region::BallBox {
                bounds: bounds.clone(),
                center: center.clone(),
                radius: radius.unwrap_or_else(|| (n as f64).powf(-1.0 / 3.0)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    /// `α̂(θ)` for dual estimates, `θ̂` for min-max estimates and `s(β̂)` for
    /// constrained ones.
    pub estimate: Vec<f64>,
    /// The optimal dual objective, i.e. the divergence estimate.
    pub objective_value: f64,
    /// Asymptotic covariance of `√n(estimate − θ_T)`.
    pub covariance: Option<DMatrix<f64>>,
    /// The covariance was requested but the information matrix is singular.
    pub singular_information: bool,
    /// Inner maximizer paired with a min-max estimate.
    pub companion: Option<Vec<f64>>,
    /// `β̂` for constrained estimates.
    pub beta: Option<Vec<f64>>,
    pub report: OptimizeReport,
    pub mode: EstimateMode,
}

impl EstimateResult {
    pub fn converged(&self) -> bool {
        self.report.converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    /// Inner maximization; also the outer tolerance of min-max searches
    /// (whose inner solves use a tenth of it).
    pub optimize: OptimizeOptions,
    pub minimax: MinimaxOptions,
    /// Compute covariance matrices.
    pub covariance: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            optimize: OptimizeOptions {
                tol: 1e-9,
                max_iter: 200,
            },
            minimax: MinimaxOptions::default(),
            covariance: true,
        }
    }
}

impl EstimateOptions {
    /// No covariance assembly; used inside Monte Carlo loops.
    pub fn fast() -> Self {
        EstimateOptions {
            covariance: false,
            ..Self::default()
        }
    }
}

type VecFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// `Θ₀ = {s(β) : β ∈ B₀}` together with constraints `r(θ) = 0` of
/// codimension `l`.
#[derive(Clone)]
pub struct ConstraintSpec {
    embedding: VecFn,
    embedding_jacobian: Option<MatFn>,
    constraint: VecFn,
    constraint_jacobian: Option<MatFn>,
    pullback: Option<VecFn>,
    beta_box: ParamBox,
    theta_dim: usize,
    codim: usize,
}

impl fmt::Debug for ConstraintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintSpec")
            .field("beta_box", &self.beta_box)
            .field("theta_dim", &self.theta_dim)
            .field("codim", &self.codim)
            .finish()
    }
}

fn fd_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], rows: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(rows, x.len());
    let mut y = x.to_vec();
    for c in 0..x.len() {
        let h = f64::EPSILON.cbrt() * x[c].abs().max(1.0);
        y[c] = x[c] + h;
        let up = f(&y);
        y[c] = x[c] - h;
        let dn = f(&y);
        y[c] = x[c];
        for r in 0..rows {
            j[(r, c)] = (up[r] - dn[r]) / (2.0 * h);
        }
    }
    j
}

impl ConstraintSpec {
    /// General constraint. `check_points` are values of `β` at which
    /// `r(s(β)) = 0` (within 1e-10) and full rank of both Jacobians are
    /// verified.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        theta_dim: usize,
        beta_box: ParamBox,
        embedding: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        constraint: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        codim: usize,
        check_points: &[Vec<f64>],
    ) -> Result<Self> {
        if beta_box.dim() + codim != theta_dim {
            return Err(Error::InvalidConstraint(format!(
                "dim B0 = {} plus codimension {codim} must equal dim Theta = {theta_dim}",
                beta_box.dim()
            )));
        }
        let spec = ConstraintSpec {
            embedding: Arc::new(embedding),
            embedding_jacobian: None,
            constraint: Arc::new(constraint),
            constraint_jacobian: None,
            pullback: None,
            beta_box,
            theta_dim,
            codim,
        };
        spec.validate(check_points)?;
        Ok(spec)
    }

    /// Supplies exact Jacobians `S(β)` and `R(θ)`.
    pub fn with_jacobians(
        mut self,
        s: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        r: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.embedding_jacobian = Some(Arc::new(s));
        self.constraint_jacobian = Some(Arc::new(r));
        self
    }

    /// Supplies a left inverse of `s`, used to start searches from a `θ`.
    pub fn with_pullback(mut self, p: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.pullback = Some(Arc::new(p));
        self
    }

    /// `s = id` (no constraint, `l = 0`).
    pub fn identity(bounds: &ParamBox) -> Self {
        let d = bounds.dim();
        ConstraintSpec {
            embedding: Arc::new(|b: &[f64]| b.to_vec()),
            embedding_jacobian: Some(Arc::new(move |_: &[f64]| DMatrix::identity(d, d))),
            constraint: Arc::new(|_: &[f64]| Vec::new()),
            constraint_jacobian: Some(Arc::new(move |_: &[f64]| DMatrix::zeros(0, d))),
            pullback: Some(Arc::new(|t: &[f64]| t.to_vec())),
            beta_box: bounds.clone(),
            theta_dim: d,
            codim: 0,
        }
    }

    /// Fixes the listed coordinates of `θ` at the given values; the
    /// remaining coordinates form `β`.
    pub fn fix_coordinates(bounds: &ParamBox, fixed: &[(usize, f64)]) -> Result<Self> {
        let d = bounds.dim();
        let mut is_fixed = vec![None; d];
        for &(i, v) in fixed {
            if i >= d || is_fixed[i].is_some() {
                return Err(Error::InvalidConstraint(format!("bad coordinate index {i}")));
            }
            if v < bounds.lower[i] || v > bounds.upper[i] {
                return Err(Error::InvalidConstraint(format!(
                    "fixed value {v} outside the box of coordinate {i}"
                )));
            }
            is_fixed[i] = Some(v);
        }
        let free: Vec<usize> = (0..d).filter(|i| is_fixed[*i].is_none()).collect();
        let beta_box = ParamBox::new(
            free.iter().map(|&i| bounds.lower[i]).collect(),
            free.iter().map(|&i| bounds.upper[i]).collect(),
        )?;
        let (fx1, fr1, fr2, fr3) = (is_fixed.clone(), free.clone(), free.clone(), free.clone());
        let pinned: Vec<(usize, f64)> = fixed.to_vec();
        let pinned2 = pinned.clone();
        let l = fixed.len();
        let embedding = move |b: &[f64]| {
            let mut t = vec![0.0; d];
            let mut k = 0;
            for i in 0..d {
                t[i] = match fx1[i] {
                    Some(v) => v,
                    None => {
                        k += 1;
                        b[k - 1]
                    }
                };
            }
            t
        };
        let constraint = move |t: &[f64]| pinned.iter().map(|&(i, v)| t[i] - v).collect();
        let s_jac = move |_: &[f64]| {
            let mut j = DMatrix::zeros(d, fr1.len());
            for (c, &i) in fr1.iter().enumerate() {
                j[(i, c)] = 1.0;
            }
            j
        };
        let r_jac = move |_: &[f64]| {
            let mut j = DMatrix::zeros(l, d);
            for (r, &(i, _)) in pinned2.iter().enumerate() {
                j[(r, i)] = 1.0;
            }
            j
        };
        let spec = ConstraintSpec {
            embedding: Arc::new(embedding),
            embedding_jacobian: Some(Arc::new(s_jac)),
            constraint: Arc::new(constraint),
            constraint_jacobian: Some(Arc::new(r_jac)),
            pullback: Some(Arc::new(move |t: &[f64]| fr2.iter().map(|&i| t[i]).collect())),
            beta_box,
            theta_dim: d,
            codim: l,
        };
        let _ = fr3;
        spec.validate(&[spec.beta_box.center()])?;
        Ok(spec)
    }

    fn validate(&self, points: &[Vec<f64>]) -> Result<()> {
        for b in points {
            let t = self.embed(b);
            if t.len() != self.theta_dim {
                return Err(Error::InvalidConstraint(format!(
                    "s(beta) has {} coordinates, expected {}",
                    t.len(),
                    self.theta_dim
                )));
            }
            let r = self.residual(&t);
            if r.len() != self.codim {
                return Err(Error::InvalidConstraint(format!(
                    "r(theta) has {} coordinates, expected {}",
                    r.len(),
                    self.codim
                )));
            }
            if let Some(v) = r.iter().find(|v| v.abs() > 1e-10) {
                return Err(Error::InvalidConstraint(format!("r(s({b:?})) = {v} != 0")));
            }
            let sj = self.embedding_jacobian(b);
            if rank(&sj) < self.beta_box.dim() {
                return Err(Error::InvalidConstraint(format!("S({b:?}) is rank deficient")));
            }
            let rj = self.constraint_jacobian(&t);
            if rank(&rj) < self.codim {
                return Err(Error::InvalidConstraint(format!("R at s({b:?}) is rank deficient")));
            }
        }
        Ok(())
    }

    pub fn embed(&self, beta: &[f64]) -> Vec<f64> {
        (self.embedding)(beta)
    }

    pub fn residual(&self, theta: &[f64]) -> Vec<f64> {
        (self.constraint)(theta)
    }

    pub fn embedding_jacobian(&self, beta: &[f64]) -> DMatrix<f64> {
        match &self.embedding_jacobian {
            Some(j) => j(beta),
            None => fd_jacobian(&*self.embedding, beta, self.theta_dim),
        }
    }

    pub fn constraint_jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        match &self.constraint_jacobian {
            Some(j) => j(theta),
            None => fd_jacobian(&*self.constraint, theta, self.codim),
        }
    }

    /// A `β` whose image is close to `θ`: the pullback when known, otherwise
    /// the least-squares fit `argmin ‖s(β) − θ‖²`.
    pub fn beta_near(&self, theta: &[f64]) -> Vec<f64> {
        let mut b = match &self.pullback {
            Some(p) => p(theta),
            None => {
                let t = theta.to_vec();
                let mut obj = FnObjective(|b: &[f64]| {
                    let s = self.embed(b);
                    s.iter().zip(&t).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
                });
                minimize(
                    &mut obj,
                    &Region::Box(self.beta_box.clone()),
                    &self.beta_box.center(),
                    &OptimizeOptions::default(),
                )
                .argopt
            }
        };
        self.beta_box.project(&mut b);
        b
    }

    pub fn beta_box(&self) -> &ParamBox {
        &self.beta_box
    }

    /// `l`.
    pub fn codim(&self) -> usize {
        self.codim
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |a, b| a.max(*b));
    sv.iter().filter(|s| **s > 1e-10 * max.max(1e-300)).count()
}

fn inner_maximize(
    dual: &DualObjective,
    theta: &[f64],
    sample: &Sample,
    region: &Region,
    init: &[f64],
    opts: &OptimizeOptions,
) -> OptimizeReport {
    let mut obj = GradObjective(|a: &[f64], g: Option<&mut [f64]>| {
        dual.empirical_objective_grad(theta, a, sample, g)
    });
    let mut best = maximize(&mut obj, region, init, opts);
    // α = θ gives value 0, so the supremum is never negative.
    if region.contains(theta) && best.value < 0.0 && best.argopt != theta {
        let alt = maximize(&mut obj, region, theta, opts);
        if alt.value > best.value {
            best = alt;
        }
    }
    best
}

/// `α̂(θ) = argmax_α P_n h(θ, α)` and `D̂(θ) = max_α P_n h(θ, α)`.
///
/// Global mode starts from `init`, defaulting to the model's pilot value;
/// local mode requires the ball center and starts there.
pub fn dual_estimate(
    dual: &DualObjective,
    theta: &[f64],
    sample: &Sample,
    init: Option<&[f64]>,
    mode: &EstimateMode,
    opts: &EstimateOptions,
) -> Result<EstimateResult> {
    check_dims(dual, theta, sample)?;
    let model = dual.model();
    let region = mode.region(model.param_box(), sample.len());
    let start = match (mode, init) {
        (_, Some(i)) => i.to_vec(),
        (EstimateMode::Global, None) => model.pilot(sample),
        (EstimateMode::LocalBall { center, .. }, None) => center.clone(),
    };
    let report = inner_maximize(dual, theta, sample, &region, &start, &opts.optimize);
    if !report.value.is_finite() {
        return Err(Error::Estimation(format!(
            "no feasible alpha found for theta = {theta:?}"
        )));
    }
    let (covariance, singular) = if opts.covariance {
        match sandwich_covariance(dual, theta, &report.argopt, sample) {
            Ok(c) => (Some(c), false),
            Err(Error::Singular) => (None, true),
            Err(e) => return Err(e),
        }
    } else {
        (None, false)
    };
    Ok(EstimateResult {
        estimate: report.argopt.clone(),
        objective_value: report.value,
        covariance,
        singular_information: singular,
        companion: None,
        beta: None,
        report,
        mode: mode.clone(),
    })
}

/// `θ̂ = arg inf_θ sup_α P_n h(θ, α)`, the companion `α̂(θ̂)` and
/// `D̂ = inf_θ sup_α P_n h(θ, α)`; covariance `I(θ̂)^{−1}`.
pub fn min_dual_estimate(
    dual: &DualObjective,
    sample: &Sample,
    inits: Option<(&[f64], &[f64])>,
    mode: &EstimateMode,
    opts: &EstimateOptions,
) -> Result<EstimateResult> {
    let c = ConstraintSpec::identity(dual.model().param_box());
    composite_estimate(dual, &c, sample, inits, mode, opts)
}

/// `inf_{β} sup_α P_n h(s(β), α)`. `inits` are `(β₀, α₀)`; by default both
/// come from the model's pilot value.
pub fn composite_estimate(
    dual: &DualObjective,
    constraint: &ConstraintSpec,
    sample: &Sample,
    inits: Option<(&[f64], &[f64])>,
    mode: &EstimateMode,
    opts: &EstimateOptions,
) -> Result<EstimateResult> {
    if constraint.theta_dim() != dual.dim() {
        return Err(Error::InvalidConstraint(format!(
            "constraint acts on dimension {}, model has {}",
            constraint.theta_dim(),
            dual.dim()
        )));
    }
    let model = dual.model();
    let n = sample.len();
    let alpha_region = mode.region(model.param_box(), n);
    let pilot = match mode {
        EstimateMode::Global => model.pilot(sample),
        EstimateMode::LocalBall { center, .. } => center.clone(),
    };
    let (beta0, alpha0) = match inits {
        Some((b, a)) => (b.to_vec(), a.to_vec()),
        None => (constraint.beta_near(&pilot), pilot.clone()),
    };
    let beta_region = match mode {
        EstimateMode::Global => Region::Box(constraint.beta_box().clone()),
        EstimateMode::LocalBall { center, radius } => Region::BallBox {
            bounds: constraint.beta_box().clone(),
            center: constraint.beta_near(center),
            radius: radius.unwrap_or_else(|| (n as f64).powf(-1.0 / 3.0)),
        },
    };
    let mm_opts = MinimaxOptions {
        tol: opts.minimax.tol,
        ..opts.minimax
    };
    let r = minimax_with(
        |beta, start, o| {
            let theta = constraint.embed(beta);
            if !model.param_box().contains(&theta) {
                return OptimizeReport {
                    argopt: start.to_vec(),
                    value: f64::INFINITY,
                    gradient_norm: f64::INFINITY,
                    iterations: 0,
                    converged: false,
                    boundary_active: vec![false; start.len()],
                };
            }
            inner_maximize(dual, &theta, sample, &alpha_region, start, o)
        },
        &beta_region,
        &beta0,
        &alpha0,
        &mm_opts,
    );
    if !r.value.is_finite() {
        return Err(Error::Estimation("min-max value is not finite".into()));
    }
    let theta = constraint.embed(&r.theta);
    let (covariance, singular) = if opts.covariance {
        let info = model.fisher_information(&theta)?;
        let s = constraint.embedding_jacobian(&r.theta);
        let reduced = s.transpose() * &info * &s;
        match reduced.try_inverse() {
            Some(inv) if inv.iter().all(|v| v.is_finite()) => (Some(inv), false),
            _ => (None, true),
        }
    } else {
        (None, false)
    };
    let mut report = r.outer.clone();
    report.converged = r.converged;
    Ok(EstimateResult {
        estimate: theta,
        objective_value: r.value,
        covariance,
        singular_information: singular,
        companion: Some(r.alpha),
        beta: Some(r.theta),
        report,
        mode: mode.clone(),
    })
}

fn check_dims(dual: &DualObjective, theta: &[f64], sample: &Sample) -> Result<()> {
    let m = dual.model();
    if theta.len() != m.dim() {
        return Err(Error::Domain(format!(
            "theta has {} coordinates, model expects {}",
            theta.len(),
            m.dim()
        )));
    }
    if sample.dim() != m.obs_dim() {
        return Err(Error::Domain(format!(
            "observations have dimension {}, model expects {}",
            sample.dim(),
            m.obs_dim()
        )));
    }
    Ok(())
}

/// Empirical `S^{−1} M S^{−1}` with `S = −P_n ∂²h/∂α²` and
/// `M = P_n (∂h/∂α)(∂h/∂α)ᵀ` at `(θ, α)`. [`Error::Singular`] when `S` is
/// not invertible.
pub fn sandwich_covariance(
    dual: &DualObjective,
    theta: &[f64],
    alpha: &[f64],
    sample: &Sample,
) -> Result<DMatrix<f64>> {
    let d = dual.dim();
    let grad_at = |a: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; d];
        dual.empirical_objective_grad(theta, a, sample, Some(&mut g));
        g
    };
    let s = -hessian_from_gradient(&grad_at, alpha, dual.model().param_box());
    let mut mgrad = vec![0.0; d];
    dual.moment_term_grad(theta, alpha, Some(&mut mgrad))?;
    let mut m = DMatrix::zeros(d, d);
    let mut dh = vec![0.0; d];
    for x in sample.iter() {
        dual.h_alpha_gradient(theta, alpha, x, &mgrad, &mut dh)?;
        let v = DVector::from_column_slice(&dh);
        m += &v * v.transpose();
    }
    m /= sample.len() as f64;
    sandwich(&s, &m)
}

/// Population `S^{−1} M S^{−1}` at `α = θ_T` with expectations under
/// `P_{θ_T}`.
pub fn population_sandwich(dual: &DualObjective, theta: &[f64], theta_t: &[f64]) -> Result<DMatrix<f64>> {
    let d = dual.dim();
    let model = dual.model();
    let mean_grad = |a: &[f64]| -> Vec<f64> {
        let mut mg = vec![0.0; d];
        if dual.moment_term_grad(theta, a, Some(&mut mg)).is_err() {
            return vec![f64::NAN; d];
        }
        let mut gf = vec![0.0; d];
        let mut gg = vec![0.0; d];
        let eg = model.integrate_over(
            theta_t,
            &dual.ratio_bounds(theta_t, theta, a),
            &mut |x, out| match dual.kernels_grad(theta, a, x, Some((&mut gf, &mut gg))) {
                Ok(_) => out.copy_from_slice(&gg),
                Err(_) => out.fill(f64::NAN),
            },
            d,
        );
        match eg {
            Ok(eg) => mg.iter().zip(&eg).map(|(m, g)| m - g).collect(),
            Err(_) => vec![f64::NAN; d],
        }
    };
    let s = -hessian_from_gradient(&mean_grad, theta_t, model.param_box());
    let mut mg = vec![0.0; d];
    dual.moment_term_grad(theta, theta_t, Some(&mut mg))?;
    let mut dh = vec![0.0; d];
    let mv = model.integrate_over(
        theta_t,
        &dual.ratio_bounds(theta_t, theta, theta_t),
        &mut |x, out| match dual.h_alpha_gradient(theta, theta_t, x, &mg, &mut dh) {
            Ok(()) => {
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = dh[i] * dh[j];
                    }
                }
            }
            Err(_) => out.fill(f64::NAN),
        },
        d * d,
    )?;
    sandwich(&s, &DMatrix::from_row_slice(d, d, &mv))
}

fn sandwich(s: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let sym = (s + s.transpose()) * 0.5;
    let sv = sym.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |a, b| a.max(*b));
    let min = sv.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    if !(min > 1e-10 * max) {
        return Err(Error::Singular);
    }
    let inv = sym.try_inverse().ok_or(Error::Singular)?;
    let v = &inv * m * &inv;
    Ok((&v + v.transpose()) * 0.5)
}

/// Central differences of a gradient, one-sided at the box faces.
fn hessian_from_gradient(grad: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], bounds: &ParamBox) -> DMatrix<f64> {
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    let mut y = x.to_vec();
    let g0 = grad(x);
    for j in 0..d {
        let step = f64::EPSILON.cbrt() * x[j].abs().max(1.0);
        let can_up = x[j] + step <= bounds.upper[j];
        let can_down = x[j] - step >= bounds.lower[j];
        let (up, dn, width) = match (can_up, can_down) {
            (true, true) => {
                y[j] = x[j] + step;
                let u = grad(&y);
                y[j] = x[j] - step;
                let dn = grad(&y);
                (u, dn, 2.0 * step)
            }
            (true, false) => {
                y[j] = x[j] + step;
                (grad(&y), g0.clone(), step)
            }
            _ => {
                y[j] = x[j] - step;
                (g0.clone(), grad(&y), step)
            }
        };
        y[j] = x[j];
        for i in 0..d {
            h[(i, j)] = (up[i] - dn[i]) / width;
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Where the variance of `h` is estimated.
#[derive(Debug, Clone, Copy)]
pub enum VarianceSource<'a> {
    /// `P_{θ_T}` by quadrature, with `α = θ_T`.
    Population(&'a [f64]),
    /// Sample moments of `h(θ, α̂(θ), X_i)`.
    Sample(&'a Sample),
}

/// `σ²(θ, θ_T) = P_{θ_T} h(θ, θ_T)² − (P_{θ_T} h(θ, θ_T))²`, or its
/// empirical plug-in.
pub fn sigma2_simple(dual: &DualObjective, theta: &[f64], source: VarianceSource<'_>) -> Result<f64> {
    match source {
        VarianceSource::Population(theta_t) => {
            let m = dual.model().integrate_over(
                theta_t,
                &dual.ratio_bounds(theta_t, theta, theta_t),
                &mut |x, out| match dual.kernels(theta, theta_t, x) {
                    Ok(k) => {
                        out[0] = k.g;
                        out[1] = k.g * k.g;
                    }
                    Err(_) => out.fill(f64::NAN),
                },
                2,
            )?;
            Ok((m[1] - m[0] * m[0]).max(0.0))
        }
        VarianceSource::Sample(sample) => {
            let est = dual_estimate(dual, theta, sample, None, &EstimateMode::Global, &EstimateOptions::fast())?;
            let alpha = est.estimate;
            let mut s = 0.0;
            let mut s2 = 0.0;
            for x in sample.iter() {
                let g = dual.kernels(theta, &alpha, x)?.g;
                s += g;
                s2 += g * g;
            }
            let n = sample.len() as f64;
            Ok((s2 / n - (s / n) * (s / n)).max(0.0))
        }
    }
}

/// [`sigma2_simple`] at `θ = s(β*)`.
pub fn sigma2_composite(
    dual: &DualObjective,
    constraint: &ConstraintSpec,
    beta_star: &[f64],
    source: VarianceSource<'_>,
) -> Result<f64> {
    sigma2_simple(dual, &constraint.embed(beta_star), source)
}

/// `β* = arg inf_β D_φ(s(β), θ_T)` by quadrature, the projection of an
/// alternative onto `Θ₀`. Returns `(β*, D_φ(s(β*), θ_T))`.
pub fn beta_star(dual: &DualObjective, constraint: &ConstraintSpec, theta_t: &[f64]) -> Result<(Vec<f64>, f64)> {
    let start = constraint.beta_near(theta_t);
    let mut obj = FnObjective(|b: &[f64]| {
        dual.divergence_quadrature(&constraint.embed(b), theta_t)
            .unwrap_or(f64::INFINITY)
    });
    let r = minimize(
        &mut obj,
        &Region::Box(constraint.beta_box().clone()),
        &start,
        &OptimizeOptions {
            tol: 1e-9,
            max_iter: 200,
        },
    );
    if !r.value.is_finite() {
        return Err(Error::Estimation("divergence to the null set is not finite".into()));
    }
    Ok((r.argopt, r.value))
}

/// `A^{−1} F A^{−1}` for the joint estimate `(β̂, α̂)` of a composite
/// problem, with `A` the Hessian of `(β, α) ↦ P_n h(s(β), α)` and `F` the
/// empirical second moment of its per-observation gradient.
pub fn composite_alternative_covariance(
    dual: &DualObjective,
    constraint: &ConstraintSpec,
    beta: &[f64],
    alpha: &[f64],
    sample: &Sample,
) -> Result<DMatrix<f64>> {
    let db = beta.len();
    let d = alpha.len();
    let k = db + d;
    let joint: Vec<f64> = beta.iter().chain(alpha).copied().collect();
    let per_obs = |z: &[f64], x: &[f64]| -> Option<f64> {
        let theta = constraint.embed(&z[..db]);
        let a = &z[db..];
        let m = dual.moment_term(&theta, a).ok()?;
        let g = dual.kernels(&theta, a, x).ok()?.g;
        Some(m - g)
    };
    let value = |z: &[f64]| -> f64 {
        let mut s = 0.0;
        for x in sample.iter() {
            match per_obs(z, x) {
                Some(v) => s += v,
                None => return f64::NAN,
            }
        }
        s / sample.len() as f64
    };
    let grad_of = |z: &[f64], f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
        let mut g = vec![0.0; k];
        let mut y = z.to_vec();
        for i in 0..k {
            let h = f64::EPSILON.cbrt() * z[i].abs().max(1.0);
            y[i] = z[i] + h;
            let up = f(&y);
            y[i] = z[i] - h;
            let dn = f(&y);
            y[i] = z[i];
            g[i] = (up - dn) / (2.0 * h);
        }
        g
    };
    let full_box = ParamBox::unbounded(k);
    let a = hessian_from_gradient(&|z: &[f64]| grad_of(z, &value), &joint, &full_box);
    let mut f = DMatrix::zeros(k, k);
    for x in sample.iter() {
        let gi = grad_of(&joint, &|z: &[f64]| per_obs(z, x).unwrap_or(f64::NAN));
        let v = DVector::from_column_slice(&gi);
        f += &v * v.transpose();
    }
    f /= sample.len() as f64;
    let inv = a.clone().try_inverse().ok_or(Error::Singular)?;
    let v = &inv * f * &inv;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular);
    }
    Ok((&v + v.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::Divergence;
    use crate::model::{Exponential, GaussianMean, GaussianMeanVector, ParametricModel};

    fn dual(model: Arc<dyn ParametricModel>, gamma: f64) -> DualObjective {
        DualObjective::new(model, Divergence::power(gamma)).unwrap()
    }

    #[test]
    fn modified_kl_dual_estimate_is_the_sample_mean() {
        let d = dual(Arc::new(GaussianMean::unbounded()), 0.0);
        let s = Sample::scalar(vec![0.0, 1.0, 2.0]).unwrap();
        for theta in [5.0, -1.0, 0.3] {
            let r = dual_estimate(&d, &[theta], &s, None, &EstimateMode::Global, &EstimateOptions::default())
                .unwrap();
            assert!((r.estimate[0] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn modified_kl_min_dual_is_the_exponential_mle() {
        let m = Arc::new(Exponential::default());
        let d = dual(m.clone(), 0.0);
        let s = m.sample(&[2.0], 50, 11).unwrap();
        let mle = 1.0 / s.mean()[0];
        let r = min_dual_estimate(&d, &s, None, &EstimateMode::Global, &EstimateOptions::default()).unwrap();
        assert!((r.estimate[0] - mle).abs() < 1e-6, "{} vs {mle}", r.estimate[0]);
        assert!((r.companion.as_ref().unwrap()[0] - mle).abs() < 1e-6);
        let cov = r.covariance.unwrap();
        assert!((cov[(0, 0)] - r.estimate[0].powi(2)).abs() < 1e-12);
    }

    #[test]
    fn local_ball_stays_inside() {
        let m = Arc::new(GaussianMean::unbounded());
        let d = dual(m.clone(), 2.0);
        let s = m.sample(&[0.8], 64, 5).unwrap();
        let mode = EstimateMode::LocalBall {
            center: vec![0.0],
            radius: None,
        };
        let r = dual_estimate(&d, &[0.0], &s, None, &mode, &EstimateOptions::default()).unwrap();
        assert!(r.estimate[0].abs() <= 0.25 + 1e-12);
    }

    #[test]
    fn identity_constraint_matches_min_dual_exactly() {
        let m = Arc::new(GaussianMean::unbounded());
        let d = dual(m.clone(), 2.0);
        let s = m.sample(&[0.3], 200, 9).unwrap();
        let opts = EstimateOptions::default();
        let a = min_dual_estimate(&d, &s, None, &EstimateMode::Global, &opts).unwrap();
        let c = ConstraintSpec::identity(m.param_box());
        let b = composite_estimate(&d, &c, &s, None, &EstimateMode::Global, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constraint_validation() {
        let bx = ParamBox::unbounded(2);
        let fixed = ConstraintSpec::fix_coordinates(&bx, &[(1, 0.0)]).unwrap();
        assert_eq!(fixed.embed(&[0.7]), vec![0.7, 0.0]);
        assert_eq!(fixed.codim(), 1);
        let bad = ConstraintSpec::new(
            2,
            ParamBox::unbounded(1),
            |b: &[f64]| vec![b[0], 1.0],
            |t: &[f64]| vec![t[1]],
            1,
            &[vec![0.0]],
        );
        assert!(matches!(bad, Err(Error::InvalidConstraint(_))));
        let degenerate = ConstraintSpec::new(
            2,
            ParamBox::unbounded(1),
            |_: &[f64]| vec![0.0, 0.0],
            |t: &[f64]| vec![t[1]],
            1,
            &[vec![0.0]],
        );
        assert!(degenerate.is_err());
    }

    #[test]
    fn constrained_modified_kl_is_constrained_mle() {
        let m = Arc::new(GaussianMeanVector::unbounded(2));
        let d = dual(m.clone(), 0.0);
        let s = m.sample(&[0.4, 0.0], 300, 2).unwrap();
        let c = ConstraintSpec::fix_coordinates(m.param_box(), &[(1, 0.0)]).unwrap();
        let r = composite_estimate(&d, &c, &s, None, &EstimateMode::Global, &EstimateOptions::default()).unwrap();
        let mean = s.mean();
        assert!((r.beta.as_ref().unwrap()[0] - mean[0]).abs() < 1e-6);
        let a = r.companion.unwrap();
        assert!((a[0] - mean[0]).abs() < 1e-6 && (a[1] - mean[1]).abs() < 1e-6);
    }

    #[test]
    fn sigma2_examples() {
        let d = dual(Arc::new(GaussianMean::unbounded()), 0.0);
        assert_eq!(sigma2_simple(&d, &[0.4], VarianceSource::Population(&[0.4])).unwrap(), 0.0);
        let v = sigma2_simple(&d, &[1.0], VarianceSource::Population(&[0.0])).unwrap();
        assert!((v - 1.0).abs() < 1e-7);
    }

    #[test]
    fn sandwich_reduces_to_inverse_information() {
        for g in [0.0, 0.5, 1.0, 2.0] {
            let d = dual(Arc::new(GaussianMean::unbounded()), g);
            let v = population_sandwich(&d, &[0.3], &[0.3]).unwrap();
            assert!((v[(0, 0)] - 1.0).abs() < 1e-4, "gamma={g}: {}", v[(0, 0)]);
        }
    }
}
