//! Dual objective `P h(θ, α)` with
//! `f(θ,α,x) = φ′(p_θ/p_α)`, `g(θ,α,x) = (p_θ/p_α)φ′(p_θ/p_α) − φ(p_θ/p_α)` and
//! `h(θ,α,x) = P_θ f(θ,α) − g(θ,α,x)`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::model::{covering_bounds, ParametricModel, Regime, Sample};
use crate::numerics::kronrod_nodes;

/// Kernel values at one observation. `+∞` marks a ratio outside the domain
/// of φ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernels {
    pub f: f64,
    pub g: f64,
    /// `−g`; the moment term is added separately.
    pub h_without_moment: f64,
}

impl Kernels {
    const INFEASIBLE: Kernels = Kernels {
        f: f64::INFINITY,
        g: f64::INFINITY,
        h_without_moment: f64::INFINITY,
    };
}

/// Number of Kronrod panels of the fixed grid used to probe the sign of a
/// signed density.
pub const PROBE_PANELS: usize = 64;

const CACHE_LIMIT: usize = 200_000;

type CacheKey = Vec<(i64, i16)>;
type MomentCache = RwLock<HashMap<CacheKey, std::result::Result<(f64, Vec<f64>), Error>>>;

/// Dual objective for a model and a divergence, with a shared cache of
/// moment terms computed by quadrature.
pub struct DualObjective {
    model: Arc<dyn ParametricModel>,
    divergence: Divergence,
    cache: MomentCache,
}

impl std::fmt::Debug for DualObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DualObjective")
            .field("model", &self.model.name())
            .field("divergence", &self.divergence)
            .finish()
    }
}

/// Rounds to 12 significant digits.
fn key_part(x: f64) -> (i64, i16) {
    if x == 0.0 || !x.is_finite() {
        return (x.to_bits() as i64, i16::MIN);
    }
    let e = x.abs().log10().floor() as i32;
    let m = (x / 10f64.powi(e - 11)).round() as i64;
    (m, e as i16)
}

impl DualObjective {
    /// Signed-measure models require a φ that is finite on the whole line.
    pub fn new(model: Arc<dyn ParametricModel>, divergence: Divergence) -> Result<Self> {
        if model.regime() == Regime::Signed && !divergence.finite_on_reals() {
            return Err(Error::InvalidDivergence(format!(
                "{} is not finite on the real line, as signed-measure models require",
                divergence.name()
            )));
        }
        Ok(DualObjective {
            model,
            divergence,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn model(&self) -> &Arc<dyn ParametricModel> {
        &self.model
    }

    pub fn divergence(&self) -> &Divergence {
        &self.divergence
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// `(f, g)` from a density ratio `r`.
    pub fn kernels_from_ratio(&self, r: f64) -> Kernels {
        let v = self.divergence.eval(r);
        match self.divergence.conjugate_of_derivative(r) {
            Ok(g) if v.d1.is_finite() => Kernels {
                f: v.d1,
                g,
                h_without_moment: -g,
            },
            _ => Kernels::INFEASIBLE,
        }
    }

    /// `f`, `g` and `−g` at `x`, plus optionally `∂f/∂α` and `∂g/∂α`.
    ///
    /// Probability models form the ratio from log densities; signed models
    /// divide directly and report [`Error::Singular`] where `p_α(x) = 0`.
    pub fn kernels_grad(
        &self,
        theta: &[f64],
        alpha: &[f64],
        x: &[f64],
        grads: Option<(&mut [f64], &mut [f64])>,
    ) -> Result<Kernels> {
        let m = &*self.model;
        let (k, r) = match m.regime() {
            Regime::Probability => {
                let lt = m.log_density(theta, x);
                let la = m.log_density(alpha, x);
                if la == f64::NEG_INFINITY {
                    if lt == f64::NEG_INFINITY {
                        // Outside the common support.
                        if let Some((gf, gg)) = grads {
                            gf.fill(0.0);
                            gg.fill(0.0);
                        }
                        return Ok(Kernels {
                            f: 0.0,
                            g: 0.0,
                            h_without_moment: 0.0,
                        });
                    }
                    return Ok(Kernels::INFEASIBLE);
                }
                let lr = lt - la;
                match self.divergence.gamma() {
                    Some(gam) => {
                        let f = if gam == 1.0 {
                            lr
                        } else {
                            ((gam - 1.0) * lr).exp_m1() / (gam - 1.0)
                        };
                        let g = if gam == 0.0 { lr } else { (gam * lr).exp_m1() / gam };
                        if let Some((gf, gg)) = grads {
                            m.score(alpha, x, gf);
                            let cf = ((gam - 1.0) * lr).exp();
                            let cg = (gam * lr).exp();
                            for (a, b) in gf.iter_mut().zip(gg.iter_mut()) {
                                *b = -cg * *a;
                                *a *= -cf;
                            }
                        }
                        return Ok(Kernels {
                            f,
                            g,
                            h_without_moment: -g,
                        });
                    }
                    None => (self.kernels_from_ratio(lr.exp()), lr.exp()),
                }
            }
            Regime::Signed => {
                let pa = m.density(alpha, x);
                if pa == 0.0 {
                    return Err(Error::Singular);
                }
                let r = m.density(theta, x) / pa;
                (self.kernels_from_ratio(r), r)
            }
        };
        if let Some((gf, gg)) = grads {
            if !k.f.is_finite() {
                gf.fill(f64::NAN);
                gg.fill(f64::NAN);
            } else {
                let d2 = self.divergence.eval(r).d2;
                m.score(alpha, x, gf);
                for (a, b) in gf.iter_mut().zip(gg.iter_mut()) {
                    *b = -d2 * r * r * *a;
                    *a *= -d2 * r;
                }
            }
        }
        Ok(k)
    }

    pub fn kernels(&self, theta: &[f64], alpha: &[f64], x: &[f64]) -> Result<Kernels> {
        self.kernels_grad(theta, alpha, x, None)
    }

    /// `true` when `p_α > 0` at every node of a fixed Kronrod grid over the
    /// truncated support of `P_θ`. Always `true` for probability models.
    pub fn positive_on_probe(&self, theta: &[f64], alpha: &[f64]) -> bool {
        if self.model.regime() == Regime::Probability {
            return true;
        }
        probe_nodes(&*self.model, theta)
            .iter()
            .all(|x| self.model.density(alpha, &[*x]) > 0.0)
    }

    /// `P_θ f(θ, α)`; [`Error::NonIntegrable`] marks `α` outside the
    /// operational feasible set.
    pub fn moment_term(&self, theta: &[f64], alpha: &[f64]) -> Result<f64> {
        self.moment_term_grad(theta, alpha, None)
    }

    /// `P_θ f(θ, α)` and optionally its α-gradient.
    pub fn moment_term_grad(
        &self,
        theta: &[f64],
        alpha: &[f64],
        mut grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        let d = self.dim();
        if theta == alpha {
            if let Some(g) = grad {
                // ∂/∂α P_θ f = −P_θ φ″(r) r s_α = −P_θ s_θ = 0 at α = θ.
                g.fill(0.0);
            }
            return Ok(0.0);
        }
        if self.divergence.gamma() == Some(0.0) {
            // P_θ(1 − p_α/p_θ) = 1 − ∫ p_α dλ = 0.
            if let Some(g) = grad {
                g.fill(0.0);
            }
            return Ok(0.0);
        }
        if self.model.regime() == Regime::Probability {
            if let Some(r) = self.model.moment_closed_form(&self.divergence, theta, alpha, grad.as_deref_mut()) {
                return r;
            }
        } else if !self.positive_on_probe(theta, alpha) {
            return Err(Error::NonIntegrable(format!(
                "signed density at {alpha:?} is not positive on the support"
            )));
        }
        let key: CacheKey = theta.iter().chain(alpha).map(|v| key_part(*v)).collect();
        if let Some(hit) = self.cache.read().expect("cache poisoned").get(&key) {
            return match hit {
                Ok((v, g)) => {
                    if let Some(out) = grad {
                        out.copy_from_slice(g);
                    }
                    Ok(*v)
                }
                Err(e) => Err(e.clone()),
            };
        }
        let signed = self.model.regime() == Regime::Signed;
        let mut gf = vec![0.0; d];
        let mut gg = vec![0.0; d];
        let bounds = self.ratio_bounds(theta, theta, alpha);
        let res = self
            .model
            .integrate_over(
                theta,
                &bounds,
                &mut |x, out| {
                    if signed && !(self.model.density(alpha, x) > 0.0) {
                        out.fill(f64::NAN);
                        return;
                    }
                    match self.kernels_grad(theta, alpha, x, Some((&mut gf, &mut gg))) {
                        Ok(k) => {
                            out[0] = k.f;
                            out[1..].copy_from_slice(&gf);
                        }
                        Err(_) => out.fill(f64::NAN),
                    }
                },
                d + 1,
            )
            .map(|v| (v[0], v[1..].to_vec()));
        {
            let mut cache = self.cache.write().expect("cache poisoned");
            if cache.len() >= CACHE_LIMIT {
                cache.clear();
            }
            cache.insert(key, res.clone());
        }
        let (v, g) = res?;
        if let Some(out) = grad {
            out.copy_from_slice(&g);
        }
        Ok(v)
    }

    /// `P_θ f(θ,α) − P_n g(θ,α)`; `−∞` when `α` is infeasible.
    pub fn empirical_objective(&self, theta: &[f64], alpha: &[f64], sample: &Sample) -> f64 {
        self.empirical_objective_grad(theta, alpha, sample, None)
    }

    /// [`DualObjective::empirical_objective`] with its α-gradient.
    pub fn empirical_objective_grad(
        &self,
        theta: &[f64],
        alpha: &[f64],
        sample: &Sample,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let d = self.dim();
        let want = grad.is_some();
        let mut mgrad = vec![0.0; d];
        let moment = match self.moment_term_grad(theta, alpha, want.then_some(&mut mgrad[..])) {
            Ok(v) => v,
            Err(_) => return f64::NEG_INFINITY,
        };
        let mut sum_g = 0.0;
        let mut sum_dg = vec![0.0; d];
        let mut gf = vec![0.0; d];
        let mut gg = vec![0.0; d];
        for x in sample.iter() {
            let k = match self.kernels_grad(theta, alpha, x, want.then_some((&mut gf[..], &mut gg[..]))) {
                Ok(k) => k,
                Err(_) => return f64::NEG_INFINITY,
            };
            if !k.g.is_finite() {
                return f64::NEG_INFINITY;
            }
            sum_g += k.g;
            if want {
                for (s, v) in sum_dg.iter_mut().zip(&gg) {
                    *s += v;
                }
            }
        }
        let n = sample.len() as f64;
        if let Some(out) = grad {
            for i in 0..d {
                out[i] = mgrad[i] - sum_dg[i] / n;
            }
        }
        moment - sum_g / n
    }

    /// `P_θ f(θ,α) − P_{θ_T} g(θ,α)` by quadrature.
    pub fn population_objective(&self, theta: &[f64], alpha: &[f64], theta_t: &[f64]) -> Result<f64> {
        let moment = self.moment_term(theta, alpha)?;
        let eg = self.expect_ratio(theta_t, theta, alpha, |x| self.kernels(theta, alpha, x).map(|k| k.g))?;
        Ok(moment - eg)
    }

    /// `D_φ(P_θ, P_{θ_T}) = ∫ φ(p_θ/p_{θ_T}) dP_{θ_T}` by direct quadrature.
    pub fn divergence_quadrature(&self, theta: &[f64], theta_t: &[f64]) -> Result<f64> {
        let m = &*self.model;
        self.expect_ratio(theta_t, theta, theta_t, |x| {
            let r = match m.regime() {
                Regime::Probability => (m.log_density(theta, x) - m.log_density(theta_t, x)).exp(),
                Regime::Signed => m.density(theta, x) / m.density(theta_t, x),
            };
            Ok(self.divergence.phi(r))
        })
    }

    /// `P_{θ_T} u` for a fallible scalar integrand.
    pub fn expect_under(
        &self,
        theta_t: &[f64],
        mut u: impl FnMut(&[f64]) -> Result<f64>,
    ) -> Result<f64> {
        self.model
            .integrate_against(
                theta_t,
                &mut |x, out| out[0] = u(x).unwrap_or(f64::NAN),
                1,
            )
            .map(|v| v[0])
    }

    /// Integration box for `(p_θ/p_α)^s` against `P_base`.
    ///
    /// Besides the three parameters it covers the exponential tilt
    /// `base + kγ(θ − α)` for `k = 1, 2` when that lies in the parameter
    /// box: in exponential families `p_base (p_θ/p_α)^{kγ}` is proportional
    /// to the density at that point, which can have much longer tails.
    pub fn ratio_bounds(&self, base: &[f64], theta: &[f64], alpha: &[f64]) -> Vec<(f64, f64)> {
        let mut params: Vec<Vec<f64>> = vec![base.to_vec(), theta.to_vec(), alpha.to_vec()];
        if let Some(g) = self.divergence.gamma() {
            for k in [1.0, 2.0] {
                let tilt: Vec<f64> = base
                    .iter()
                    .zip(theta.iter().zip(alpha))
                    .map(|(b, (t, a))| b + k * g * (t - a))
                    .collect();
                if self.model.param_box().contains(&tilt) {
                    params.push(tilt);
                }
            }
        }
        let refs: Vec<&[f64]> = params.iter().map(|p| p.as_slice()).collect();
        covering_bounds(&*self.model, &refs)
    }

    /// [`DualObjective::expect_under`] over [`DualObjective::ratio_bounds`].
    pub fn expect_ratio(
        &self,
        theta_t: &[f64],
        theta: &[f64],
        alpha: &[f64],
        mut u: impl FnMut(&[f64]) -> Result<f64>,
    ) -> Result<f64> {
        let bounds = self.ratio_bounds(theta_t, theta, alpha);
        self.model
            .integrate_over(theta_t, &bounds, &mut |x, out| out[0] = u(x).unwrap_or(f64::NAN), 1)
            .map(|v| v[0])
    }

    /// `∂h/∂α(θ, α, x)` given the moment gradient.
    pub fn h_alpha_gradient(
        &self,
        theta: &[f64],
        alpha: &[f64],
        x: &[f64],
        moment_grad: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let d = self.dim();
        let mut gf = vec![0.0; d];
        self.kernels_grad(theta, alpha, x, Some((&mut gf, out)))?;
        for (o, m) in out.iter_mut().zip(moment_grad) {
            *o = m - *o;
        }
        Ok(())
    }

    /// Drops every cached moment term.
    pub fn clear_cache(&self) {
        self.cache.write().expect("cache poisoned").clear();
    }
}

/// Nodes of the fixed probe grid over the truncated support of `P_θ`.
pub fn probe_nodes(model: &dyn ParametricModel, theta: &[f64]) -> Vec<f64> {
    let (a, b) = model.truncation(theta)[0];
    let w = (b - a) / PROBE_PANELS as f64;
    let mut nodes = Vec::with_capacity(PROBE_PANELS * 15);
    for j in 0..PROBE_PANELS {
        let lo = a + j as f64 * w;
        nodes.extend_from_slice(&kronrod_nodes(lo, lo + w));
    }
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Component, Exponential, GaussianMean, Mixture};

    fn gaussian(gamma: f64) -> DualObjective {
        DualObjective::new(Arc::new(GaussianMean::unbounded()), Divergence::power(gamma)).unwrap()
    }

    #[test]
    fn kernels_vanish_on_the_diagonal() {
        for g in [-1.0, 0.0, 0.5, 1.0, 2.0] {
            let k = gaussian(g).kernels(&[0.7], &[0.7], &[1.3]).unwrap();
            assert_eq!((k.f, k.g, k.h_without_moment), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn modified_kl_kernels_at_known_point() {
        let k = gaussian(0.0).kernels(&[0.0], &[1.0], &[0.0]).unwrap();
        let r = 0.5f64.exp();
        assert!((k.f - (1.0 - 1.0 / r)).abs() < 1e-15);
        let phi0 = -r.ln() + r - 1.0;
        assert!((k.g - (r * k.f - phi0)).abs() < 1e-15);
        assert!((k.f - 0.393_469_340_287_366_6).abs() < 1e-15);
    }

    #[test]
    fn chi2_kernels_from_ratio() {
        let k = gaussian(2.0).kernels_from_ratio(3.0);
        assert!((k.f - 2.0).abs() < 1e-14 && (k.g - 4.0).abs() < 1e-14, "{k:?}");
    }

    #[test]
    fn moment_term_values() {
        assert_eq!(gaussian(0.0).moment_term(&[0.0], &[3.0]).unwrap(), 0.0);
        let v = gaussian(2.0).moment_term(&[0.0], &[0.5]).unwrap();
        assert!((v - 0.284_025_416_687_741_4).abs() < 1e-12);
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let m: Vec<Arc<dyn ParametricModel>> = vec![
            Arc::new(GaussianMean::unbounded()),
            Arc::new(Exponential::default()),
        ];
        let sample = Sample::scalar(vec![0.3, 1.1, 0.05, 2.4]).unwrap();
        for model in m {
            for g in [-1.0, 0.0, 0.5, 1.0, 2.0] {
                let dual = DualObjective::new(model.clone(), Divergence::power(g)).unwrap();
                let (t, a) = ([1.2], [0.9]);
                let mut grad = [0.0];
                dual.empirical_objective_grad(&t, &a, &sample, Some(&mut grad));
                let h = 1e-6;
                let up = dual.empirical_objective(&t, &[a[0] + h], &sample);
                let dn = dual.empirical_objective(&t, &[a[0] - h], &sample);
                let fd = (up - dn) / (2.0 * h);
                assert!((grad[0] - fd).abs() < 1e-6 * fd.abs().max(1.0), "{} gamma={g}", model.name());
            }
        }
    }

    #[test]
    fn signed_mixture_requires_finite_phi() {
        let mix = Mixture::two_known(
            Component::normal(0.0, 1.0),
            Component::normal(0.5, 1.0),
            Regime::Signed,
            Some((-0.5, 1.5)),
        )
        .unwrap();
        let mix: Arc<dyn ParametricModel> = Arc::new(mix);
        assert!(DualObjective::new(mix.clone(), Divergence::power(0.5)).is_err());
        let dual = DualObjective::new(mix, Divergence::chi2()).unwrap();
        // A weight of 1.5 makes the signed density negative inside the support.
        assert!(!dual.positive_on_probe(&[0.0], &[1.5]));
        assert!(dual.moment_term(&[0.0], &[1.5]).is_err());
        assert!(dual.positive_on_probe(&[0.0], &[0.5]));
        // Closed kernels f = p₀/p_α − 1 and g = ½(p₀/p_α + 1)(p₀/p_α − 1).
        let x = [0.4];
        let k = dual.kernels(&[0.0], &[0.3], &x).unwrap();
        let p0 = dual.model().density(&[0.0], &x);
        let pa = dual.model().density(&[0.3], &x);
        let r = p0 / pa;
        assert!((k.f - (r - 1.0)).abs() < 1e-15);
        assert!((k.g - 0.5 * (r + 1.0) * (r - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn cache_returns_identical_values() {
        let mix = Mixture::two_known(
            Component::normal(0.0, 1.0),
            Component::normal(0.5, 1.0),
            Regime::Signed,
            Some((-0.5, 1.5)),
        )
        .unwrap();
        let dual = DualObjective::new(Arc::new(mix), Divergence::chi2()).unwrap();
        let a = dual.moment_term(&[0.2], &[0.6]).unwrap();
        let b = dual.moment_term(&[0.2], &[0.6]).unwrap();
        assert_eq!(a, b);
        dual.clear_cache();
        assert_eq!(dual.moment_term(&[0.2], &[0.6]).unwrap(), a);
    }
}
