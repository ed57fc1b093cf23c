use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use nalgebra::DMatrix;

use super::{check_theta, ParamBox, ParametricModel, Regime, Sample, Support, TRUNCATION_TAIL};
use crate::error::{Error, Result};
use crate::numerics::{normal_cdf, normal_quantile};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Scalar component families and their parameter vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentFamily {
    /// Parameters `[mean, sd]`.
    Normal,
    /// Parameters `[mean]`, standard deviation fixed.
    NormalMean { sd: f64 },
    /// Parameters `[rate]`.
    Exponential,
}

impl ComponentFamily {
    pub fn n_params(&self) -> usize {
        match self {
            ComponentFamily::Normal => 2,
            ComponentFamily::NormalMean { .. } => 1,
            ComponentFamily::Exponential => 1,
        }
    }

    fn location_scale(&self, p: &[f64]) -> (f64, f64) {
        match *self {
            ComponentFamily::Normal => (p[0], p[1]),
            ComponentFamily::NormalMean { sd } => (p[0], sd),
            ComponentFamily::Exponential => (0.0, 1.0 / p[0]),
        }
    }

    pub fn density(&self, p: &[f64], x: f64) -> f64 {
        match self {
            ComponentFamily::Exponential => {
                if x < 0.0 {
                    0.0
                } else {
                    p[0] * (-p[0] * x).exp()
                }
            }
            _ => {
                let (m, s) = self.location_scale(p);
                let z = (x - m) / s;
                (-0.5 * z * z - LN_SQRT_2PI).exp() / s
            }
        }
    }

    /// `∇_p density(p, x)`.
    pub fn density_gradient(&self, p: &[f64], x: f64, out: &mut [f64]) {
        let d = self.density(p, x);
        match *self {
            ComponentFamily::Normal => {
                let (m, s) = (p[0], p[1]);
                out[0] = d * (x - m) / (s * s);
                out[1] = d * ((x - m) * (x - m) / (s * s * s) - 1.0 / s);
            }
            ComponentFamily::NormalMean { sd } => out[0] = d * (x - p[0]) / (sd * sd),
            ComponentFamily::Exponential => out[0] = d * (1.0 / p[0] - x),
        }
    }

    pub fn cdf(&self, p: &[f64], x: f64) -> f64 {
        match self {
            ComponentFamily::Exponential => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-p[0] * x).exp_m1()
                }
            }
            _ => {
                let (m, s) = self.location_scale(p);
                normal_cdf((x - m) / s)
            }
        }
    }

    pub fn quantile(&self, p: &[f64], prob: f64) -> f64 {
        match self {
            ComponentFamily::Exponential => -(-prob).ln_1p() / p[0],
            _ => {
                let (m, s) = self.location_scale(p);
                m + s * normal_quantile(prob).unwrap_or(f64::NAN)
            }
        }
    }

    pub fn mean(&self, p: &[f64]) -> f64 {
        match self {
            ComponentFamily::Exponential => 1.0 / p[0],
            _ => self.location_scale(p).0,
        }
    }

    fn draw<R: Rng>(&self, p: &[f64], rng: &mut R) -> f64 {
        match self {
            ComponentFamily::Exponential => {
                let e: f64 = Exp1.sample(rng);
                e / p[0]
            }
            _ => {
                let (m, s) = self.location_scale(p);
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            }
        }
    }

    fn lower_support(&self) -> f64 {
        match self {
            ComponentFamily::Exponential => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }

    fn default_param_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ComponentFamily::Normal => (vec![f64::NEG_INFINITY, 1e-6], vec![f64::INFINITY; 2]),
            ComponentFamily::NormalMean { .. } => (vec![f64::NEG_INFINITY], vec![f64::INFINITY]),
            ComponentFamily::Exponential => (vec![1e-6], vec![1e6]),
        }
    }
}

/// A mixture component: a family with either frozen parameters or
/// parameters that are part of `θ` (then `params` is the starting value).
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub family: ComponentFamily,
    pub params: Vec<f64>,
    pub free: bool,
}

impl Component {
    pub fn fixed(family: ComponentFamily, params: Vec<f64>) -> Self {
        Component {
            family,
            params,
            free: false,
        }
    }

    pub fn free(family: ComponentFamily, start: Vec<f64>) -> Self {
        Component {
            family,
            params: start,
            free: true,
        }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        Self::fixed(ComponentFamily::Normal, vec![mean, sd])
    }
}

/// `p_θ = Σ_i w_i p_i(·; a_i)` with `θ = (w_2, …, w_k, free a_i's)` and
/// `w_1 = 1 − Σ_{i≥2} w_i`. For two components this is
/// `(1 − θ)p₀ + θp₁`.
///
/// In the signed regime the weights may leave `[0, 1]`; the density may then
/// be negative and sampling is unavailable.
#[derive(Debug, Clone)]
pub struct Mixture {
    components: Vec<Component>,
    regime: Regime,
    bounds: ParamBox,
    offsets: Vec<Option<usize>>,
}

impl Mixture {
    /// `weight_bounds` overrides the `[0, 1]` interval of each free weight
    /// (required to reach outside `[0, 1]` in the signed regime).
    pub fn new(
        components: Vec<Component>,
        regime: Regime,
        weight_bounds: Option<(f64, f64)>,
    ) -> Result<Self> {
        let k = components.len();
        if k < 2 {
            return Err(Error::InvalidConfig("a mixture needs at least two components".into()));
        }
        let (wl, wu) = weight_bounds.unwrap_or((0.0, 1.0));
        if regime == Regime::Probability && (wl < 0.0 || wu > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "weight bounds [{wl}, {wu}] leave [0, 1] in the probability regime"
            )));
        }
        let mut lower = vec![wl; k - 1];
        let mut upper = vec![wu; k - 1];
        let mut offsets = Vec::with_capacity(k);
        for c in &components {
            if c.params.len() != c.family.n_params() {
                return Err(Error::InvalidConfig(format!(
                    "{:?} takes {} parameters, got {}",
                    c.family,
                    c.family.n_params(),
                    c.params.len()
                )));
            }
            if c.family == ComponentFamily::Exponential && !(c.params[0] > 0.0) {
                return Err(Error::InvalidConfig("exponential rate must be positive".into()));
            }
            if c.free {
                offsets.push(Some(lower.len()));
                let (l, u) = c.family.default_param_bounds();
                lower.extend(l);
                upper.extend(u);
            } else {
                offsets.push(None);
            }
        }
        Ok(Mixture {
            components,
            regime,
            bounds: ParamBox::new(lower, upper)?,
            offsets,
        })
    }

    /// `(1 − θ)p₀ + θp₁` with known components.
    pub fn two_known(p0: Component, p1: Component, regime: Regime, weight_bounds: Option<(f64, f64)>) -> Result<Self> {
        Self::new(
            vec![Component { free: false, ..p0 }, Component { free: false, ..p1 }],
            regime,
            weight_bounds,
        )
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Same components with a different regime and weight interval.
    pub fn with_regime(&self, regime: Regime, weight_bounds: Option<(f64, f64)>) -> Result<Self> {
        Self::new(self.components.clone(), regime, weight_bounds)
    }

    pub fn has_free_params(&self) -> bool {
        self.components.iter().any(|c| c.free)
    }

    pub fn weights(&self, theta: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut w = Vec::with_capacity(k);
        w.push(1.0 - theta[..k - 1].iter().sum::<f64>());
        w.extend_from_slice(&theta[..k - 1]);
        w
    }

    pub fn component_params<'a>(&'a self, theta: &'a [f64], i: usize) -> &'a [f64] {
        match self.offsets[i] {
            Some(o) => &theta[o..o + self.components[i].family.n_params()],
            None => &self.components[i].params,
        }
    }

    /// Component densities at `x` for parameter `θ`.
    pub fn component_densities(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        for (i, c) in self.components.iter().enumerate() {
            out[i] = c.family.density(self.component_params(theta, i), x);
        }
    }

    fn is_probability_point(&self, theta: &[f64]) -> bool {
        self.weights(theta).iter().all(|w| (0.0..=1.0).contains(w))
    }

    fn cdf(&self, theta: &[f64], x: f64) -> f64 {
        let w = self.weights(theta);
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| w[i] * c.family.cdf(self.component_params(theta, i), x))
            .sum()
    }
}

impl ParametricModel for Mixture {
    fn name(&self) -> String {
        format!("mixture(k={})", self.k())
    }

    // The score involves p_j/p_θ, so a component with zero weight still
    // needs its own tails covered.
    fn fisher_information(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, c) in self.components.iter().enumerate() {
            let p = self.component_params(theta, i);
            lo = lo.min(c.family.quantile(p, TRUNCATION_TAIL));
            hi = hi.max(c.family.quantile(p, 1.0 - TRUNCATION_TAIL));
        }
        let mut s = vec![0.0; d];
        let v = self.integrate_over(
            theta,
            &[(lo, hi)],
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

    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn param_box(&self) -> &ParamBox {
        &self.bounds
    }

    fn support(&self) -> Support {
        let lo = self
            .components
            .iter()
            .map(|c| c.family.lower_support())
            .fold(f64::INFINITY, f64::min);
        Support::Continuous(vec![(lo, f64::INFINITY)])
    }

    fn regime(&self) -> Regime {
        self.regime
    }

    fn density(&self, theta: &[f64], x: &[f64]) -> f64 {
        let k = self.k();
        let mut sum_w = 0.0;
        let mut p = 0.0;
        for i in 1..k {
            let w = theta[i - 1];
            sum_w += w;
            if w != 0.0 {
                p += w * self.components[i].family.density(self.component_params(theta, i), x[0]);
            }
        }
        let w0 = 1.0 - sum_w;
        if w0 != 0.0 {
            p += w0 * self.components[0].family.density(self.component_params(theta, 0), x[0]);
        }
        p
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> f64 {
        let p = self.density(theta, x);
        if p > 0.0 {
            p.ln()
        } else if p == 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::NAN
        }
    }

    fn score(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let k = self.k();
        let p = self.density(theta, x);
        let p0 = self.components[0].family.density(self.component_params(theta, 0), x[0]);
        for i in 1..k {
            let pi = self.components[i].family.density(self.component_params(theta, i), x[0]);
            out[i - 1] = (pi - p0) / p;
        }
        let w = self.weights(theta);
        let mut buf = [0.0; 2];
        for (i, c) in self.components.iter().enumerate() {
            if let Some(o) = self.offsets[i] {
                let n = c.family.n_params();
                c.family
                    .density_gradient(self.component_params(theta, i), x[0], &mut buf[..n]);
                for j in 0..n {
                    out[o + j] = w[i] * buf[j] / p;
                }
            }
        }
    }

    fn sample(&self, theta: &[f64], n: usize, seed: u64) -> Result<Sample> {
        check_theta(self, theta)?;
        if !self.is_probability_point(theta) {
            return Err(Error::Domain(format!(
                "cannot sample a signed mixture with weights {:?}",
                self.weights(theta)
            )));
        }
        let w = self.weights(theta);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut idx = self.k() - 1;
                for (i, wi) in w.iter().enumerate() {
                    acc += wi;
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                self.components[idx]
                    .family
                    .draw(self.component_params(theta, idx), &mut rng)
            })
            .collect();
        Sample::scalar(v)
    }

    /// Mixture quantile by bisection when the weights form a probability
    /// vector; otherwise the hull of the component quantiles.
    fn quantile(&self, theta: &[f64], p: f64) -> Vec<f64> {
        let w = self.weights(theta);
        let qs: Vec<f64> = self
            .components
            .iter()
            .enumerate()
            .filter(|(i, _)| w[*i] != 0.0)
            .map(|(i, c)| c.family.quantile(self.component_params(theta, i), p))
            .collect();
        let mut lo = qs.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !self.is_probability_point(theta) {
            return vec![if p < 0.5 { lo } else { hi }];
        }
        if lo == hi {
            return vec![lo];
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(theta, mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        vec![0.5 * (lo + hi)]
    }

    /// Moment estimate of the weight for two known components; equal weights
    /// and the configured component parameters otherwise.
    fn pilot(&self, sample: &Sample) -> Vec<f64> {
        let k = self.k();
        let mut theta = vec![1.0 / k as f64; k - 1];
        for c in &self.components {
            if c.free {
                theta.extend_from_slice(&c.params);
            }
        }
        if k == 2 && !self.has_free_params() {
            let m0 = self.components[0].family.mean(&self.components[0].params);
            let m1 = self.components[1].family.mean(&self.components[1].params);
            if m0 != m1 {
                theta[0] = (sample.mean()[0] - m0) / (m1 - m0);
            }
        }
        self.bounds.project(&mut theta);
        theta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{integrate_against, GaussianMean};

    fn pair(regime: Regime, bounds: Option<(f64, f64)>) -> Mixture {
        Mixture::two_known(Component::normal(0.0, 1.0), Component::normal(0.5, 1.0), regime, bounds)
            .unwrap()
    }

    #[test]
    fn zero_weight_is_first_component() {
        let m = pair(Regime::Probability, None);
        let g = GaussianMean::unbounded();
        for x in [-3.0, -0.2, 0.0, 1.7] {
            assert!((m.density(&[0.0], &[x]) - g.density(&[0.0], &[x])).abs() < 1e-16);
        }
    }

    #[test]
    fn signed_weights_keep_unit_mass() {
        let m = pair(Regime::Signed, Some((-0.5, 1.5)));
        for t in [-0.04, 0.3, 1.03] {
            let mass = integrate_against(&m, &[t], |_| 1.0).unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "theta={t}: {mass}");
        }
        assert!(m.sample(&[-0.1], 5, 1).is_err());
    }

    #[test]
    fn analytic_score_matches_differences() {
        let m = Mixture::new(
            vec![
                Component::free(ComponentFamily::NormalMean { sd: 1.0 }, vec![0.0]),
                Component::free(ComponentFamily::Normal, vec![2.0, 1.5]),
                Component::fixed(ComponentFamily::Exponential, vec![1.0]),
            ],
            Regime::Probability,
            None,
        )
        .unwrap();
        assert_eq!(m.dim(), 2 + 1 + 2);
        let theta = [0.3, 0.2, -0.4, 2.1, 1.3];
        let mut s = [0.0; 5];
        m.score(&theta, &[0.7], &mut s);
        let h = 1e-6;
        for i in 0..5 {
            let mut t = theta;
            t[i] += h;
            let up = m.log_density(&t, &[0.7]);
            t[i] -= 2.0 * h;
            let dn = m.log_density(&t, &[0.7]);
            assert!((s[i] - (up - dn) / (2.0 * h)).abs() < 1e-7, "coordinate {i}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let m = pair(Regime::Probability, None);
        let q = m.quantile(&[0.4], 0.9)[0];
        assert!((m.cdf(&[0.4], q) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn probability_regime_rejects_wide_bounds() {
        assert!(Mixture::two_known(
            Component::normal(0.0, 1.0),
            Component::normal(0.5, 1.0),
            Regime::Probability,
            Some((-0.5, 1.5))
        )
        .is_err());
    }
}
