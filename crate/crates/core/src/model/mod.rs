//! Parametric families `{P_θ : θ ∈ Θ}` with densities w.r.t. Lebesgue measure
//! on an interval (or box) or counting measure on a finite set.

mod config;
mod exponential;
mod gaussian;
mod mixture;

use std::fmt::Debug;

use nalgebra::DMatrix;

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::numerics::{integrate_box, integrate_vec, QuadratureOptions};

pub use crate::numerics::ParamBox;
pub use config::{ComponentConfig, ModelConfig, RegimeConfig};
pub use exponential::Exponential;
pub use gaussian::{GaussianMean, GaussianMeanVector};
pub use mixture::{Component, ComponentFamily, Mixture};

/// Tail mass cut off on each side when integrating over unbounded supports.
pub const TRUNCATION_TAIL: f64 = 1e-10;

/// Flat storage of `len` observations of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    dim: usize,
    values: Vec<f64>,
}

impl Sample {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        #[allow(clippy::manual_is_multiple_of)] // keeps the 1.75 MSRV
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return Err(Error::InvalidConfig(format!(
                "{} values do not form observations of dimension {dim}",
                values.len()
            )));
        }
        Ok(Sample { dim, values })
    }

    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coordinate-wise sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for x in self.iter() {
            for (a, b) in m.iter_mut().zip(x) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

/// Dominating measure and the set it lives on.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Lebesgue measure on a product of intervals, one per observation
    /// coordinate.
    Continuous(Vec<(f64, f64)>),
    /// Counting measure on finitely many points.
    Finite(Vec<Vec<f64>>),
}

/// Whether `p_θ` is a probability density or may take negative values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Probability,
    /// Signed densities with total mass one.
    Signed,
}

pub trait ParametricModel: Debug + Send + Sync {
    fn name(&self) -> String;

    /// Parameter dimension `d`.
    fn dim(&self) -> usize;

    /// Dimension of one observation.
    fn obs_dim(&self) -> usize {
        1
    }

    fn param_box(&self) -> &ParamBox;

    fn support(&self) -> Support;

    fn regime(&self) -> Regime {
        Regime::Probability
    }

    /// `log p_θ(x)`; `−∞` where the density vanishes, NaN where it is negative.
    fn log_density(&self, theta: &[f64], x: &[f64]) -> f64;

    /// `p_θ(x)`, possibly negative in the signed regime.
    fn density(&self, theta: &[f64], x: &[f64]) -> f64 {
        self.log_density(theta, x).exp()
    }

    /// `∇_θ p_θ(x) / p_θ(x)`. The default takes central differences with step
    /// `ε^{1/3}·max(1, |θ_i|)`.
    fn score(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let mut t = theta.to_vec();
        let signed = self.regime() == Regime::Signed;
        let p = self.density(theta, x);
        for i in 0..theta.len() {
            let h = f64::EPSILON.cbrt() * theta[i].abs().max(1.0);
            t[i] = theta[i] + h;
            let up = if signed { self.density(&t, x) } else { self.log_density(&t, x) };
            t[i] = theta[i] - h;
            let down = if signed { self.density(&t, x) } else { self.log_density(&t, x) };
            t[i] = theta[i];
            out[i] = if signed {
                (up - down) / (2.0 * h * p)
            } else {
                (up - down) / (2.0 * h)
            };
        }
    }

    /// Fisher information `∫ s sᵀ dP_θ`; the default integrates the score.
    fn fisher_information(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut s = vec![0.0; d];
        let v = self.integrate_against(
            theta,
            &mut |x, out| {
                self.score(theta, x, &mut s);
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = s[i] * s[j];
                    }
                }
            },
            d * d,
        )?;
        Ok(DMatrix::from_row_slice(d, d, &v))
    }

    /// `n` i.i.d. draws; a pure function of `(θ, n, seed)`.
    fn sample(&self, theta: &[f64], n: usize, seed: u64) -> Result<Sample>;

    /// Per-coordinate `p`-quantile of the observation under `P_θ`.
    fn quantile(&self, theta: &[f64], p: f64) -> Vec<f64>;

    /// Integration box `[q(tail), q(1 − tail)]` intersected with the support.
    fn truncation(&self, theta: &[f64]) -> Vec<(f64, f64)> {
        let lo = self.quantile(theta, TRUNCATION_TAIL);
        let hi = self.quantile(theta, 1.0 - TRUNCATION_TAIL);
        let bounds = match self.support() {
            Support::Continuous(b) => b,
            Support::Finite(_) => vec![(f64::NEG_INFINITY, f64::INFINITY); lo.len()],
        };
        lo.into_iter()
            .zip(hi)
            .zip(bounds)
            .map(|((l, h), (a, b))| (l.max(a), h.min(b)))
            .collect()
    }

    /// `∫ u(x) p_θ(x) dλ(x)` for a vector-valued `u` writing `out_dim` values.
    ///
    /// Adaptive quadrature over [`ParametricModel::truncation`] for
    /// continuous supports, exact summation for finite ones. A non-finite
    /// integrand value or a failure to converge gives
    /// [`Error::NonIntegrable`].
    fn integrate_against(
        &self,
        theta: &[f64],
        u: &mut dyn FnMut(&[f64], &mut [f64]),
        out_dim: usize,
    ) -> Result<Vec<f64>> {
        match self.support() {
            Support::Finite(points) => {
                let mut total = vec![0.0; out_dim];
                let mut buf = vec![0.0; out_dim];
                for x in &points {
                    let p = self.density(theta, x);
                    u(x, &mut buf);
                    for (t, b) in total.iter_mut().zip(&buf) {
                        *t += b * p;
                    }
                }
                if total.iter().any(|t| !t.is_finite()) {
                    return Err(Error::NonIntegrable("non-finite sum".into()));
                }
                Ok(total)
            }
            Support::Continuous(_) => self.integrate_over(theta, &self.truncation(theta), u, out_dim),
        }
    }

    /// [`ParametricModel::integrate_against`] over an explicit box instead of
    /// the truncation of `p_θ`. Finite supports ignore `bounds`.
    fn integrate_over(
        &self,
        theta: &[f64],
        bounds: &[(f64, f64)],
        u: &mut dyn FnMut(&[f64], &mut [f64]),
        out_dim: usize,
    ) -> Result<Vec<f64>> {
        match self.support() {
            Support::Finite(_) => self.integrate_against(theta, u, out_dim),
            Support::Continuous(_) => {
                let opts = QuadratureOptions::default();
                if bounds.len() == 1 {
                    let (a, b) = bounds[0];
                    let mut x = [0.0];
                    integrate_vec(
                        |t, out| {
                            x[0] = t;
                            u(&x, out);
                            let p = self.density(theta, &x);
                            out.iter_mut().for_each(|o| *o *= p);
                        },
                        a,
                        b,
                        out_dim,
                        &opts,
                    )
                } else {
                    let cell = std::cell::RefCell::new(u);
                    integrate_box(
                        &|x: &[f64], out: &mut [f64]| {
                            (cell.borrow_mut())(x, out);
                            let p = self.density(theta, x);
                            out.iter_mut().for_each(|o| *o *= p);
                        },
                        bounds,
                        out_dim,
                        &opts,
                    )
                }
            }
        }
    }

    /// Moment-type starting value computed from the sample.
    fn pilot(&self, sample: &Sample) -> Vec<f64> {
        let _ = sample;
        self.param_box().center()
    }

    /// Closed form of `∫ φ′(p_θ/p_α) dP_θ` and its α-gradient, when known.
    fn moment_closed_form(
        &self,
        divergence: &Divergence,
        theta: &[f64],
        alpha: &[f64],
        grad: Option<&mut [f64]>,
    ) -> Option<Result<f64>> {
        let _ = (divergence, theta, alpha, grad);
        None
    }
}

/// Scalar wrapper around [`ParametricModel::integrate_against`].
pub fn integrate_against(
    model: &dyn ParametricModel,
    theta: &[f64],
    mut u: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    model
        .integrate_against(theta, &mut |x, out| out[0] = u(x), 1)
        .map(|v| v[0])
}

/// Smallest box holding the truncation of every listed parameter, so that
/// integrands built from density ratios keep the tails where they live.
///
/// Signed models keep the truncation of `thetas[0]`: positivity of a signed
/// density is only probed on that range, and widening it would make the
/// feasible set depend on the integrand.
pub fn covering_bounds(model: &dyn ParametricModel, thetas: &[&[f64]]) -> Vec<(f64, f64)> {
    let mut out = model.truncation(thetas[0]);
    if model.regime() == Regime::Signed {
        return out;
    }
    for t in &thetas[1..] {
        for (o, (a, b)) in out.iter_mut().zip(model.truncation(t)) {
            o.0 = o.0.min(a);
            o.1 = o.1.max(b);
        }
    }
    out
}

pub(crate) fn check_theta(model: &dyn ParametricModel, theta: &[f64]) -> Result<()> {
    if theta.len() != model.dim() {
        return Err(Error::Domain(format!(
            "parameter has {} coordinates, model {} expects {}",
            theta.len(),
            model.name(),
            model.dim()
        )));
    }
    if !model.param_box().contains(theta) {
        return Err(Error::Domain(format!("{theta:?} outside the parameter box")));
    }
    Ok(())
}

/// Power-family moment term `(J − 1)/(γ − 1)` from `J = ∫ p_θ^γ p_α^{1−γ}`,
/// with `γ = 1` handled by the caller.
pub(crate) fn power_moment(gamma: f64, j: f64) -> f64 {
    (j - 1.0) / (gamma - 1.0)
}
