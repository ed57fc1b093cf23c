//! Convex generators φ of φ-divergences.
//!
//! The power family `φ_γ(x) = (x^γ − γx + γ − 1) / (γ(γ − 1))` covers the
//! modified Kullback-Leibler (`γ = 0`), Kullback-Leibler (`γ = 1`), χ²
//! (`γ = 2`), modified χ² (`γ = −1`) and Hellinger (`γ = 1/2`) divergences.
//! On `x < 0` the generator is `+∞` unless `x^γ` is itself convex on the whole
//! line (even integer `γ ≥ 2`), in which case the polynomial is used as is.
//! At `x = 0` the value is the right limit.
//!
//! Infinite values are ordinary `f64` infinities; they propagate through sums
//! and are treated as infeasible by the optimizers.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(φ(x), φ′(x), φ″(x))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl PhiValue {
    const INFEASIBLE: PhiValue = PhiValue {
        value: f64::INFINITY,
        d1: f64::INFINITY,
        d2: f64::INFINITY,
    };
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User supplied generator. All callables must be consistent with each other;
/// [`Divergence::custom`] checks what can be checked numerically.
#[derive(Clone)]
pub struct CustomPhi {
    pub name: String,
    pub phi: ScalarFn,
    pub d1: ScalarFn,
    pub d2: ScalarFn,
    /// Closed form of φ* if known; otherwise the conjugate is computed by a
    /// safeguarded Newton solve of `φ′(x) = t`.
    pub conjugate: Option<ScalarFn>,
    /// `(a_φ, b_φ)`.
    pub domain: (f64, f64),
    /// `(a_φ*, b_φ*)`.
    pub conjugate_domain: (f64, f64),
    /// Exact φ″(1); it scales every test statistic.
    pub second_derivative_at_one: f64,
}

#[derive(Clone)]
enum Kind {
    Power(f64),
    Custom(Arc<CustomPhi>),
}

/// A validated convex generator φ with `φ(1) = φ′(1) = 0 < φ″(1)`.
#[derive(Clone)]
pub struct Divergence {
    kind: Kind,
    domain: (f64, f64),
    conjugate_domain: (f64, f64),
    phi2_at_one: f64,
}

impl fmt::Debug for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Power(g) => write!(f, "Divergence::Power({g})"),
            Kind::Custom(c) => write!(f, "Divergence::Custom({})", c.name),
        }
    }
}

/// Width of the window around `x = 1` where the power generator is evaluated
/// by its Taylor series.
const SERIES_RADIUS: f64 = 1e-4;

fn is_even_integer(g: f64) -> bool {
    g >= 2.0 && g.fract() == 0.0 && (g as i64) % 2 == 0
}

impl Divergence {
    /// The power generator `φ_γ`.
    pub fn power(gamma: f64) -> Self {
        assert!(gamma.is_finite(), "gamma must be finite");
        let finite_on_reals = is_even_integer(gamma);
        let a = if finite_on_reals { f64::NEG_INFINITY } else { 0.0 };
        let b_conj = if gamma < 1.0 {
            1.0 / (1.0 - gamma)
        } else {
            f64::INFINITY
        };
        Divergence {
            kind: Kind::Power(gamma),
            domain: (a, f64::INFINITY),
            conjugate_domain: (f64::NEG_INFINITY, b_conj),
            phi2_at_one: 1.0,
        }
    }

    pub fn kullback_leibler() -> Self {
        Self::power(1.0)
    }

    pub fn modified_kullback_leibler() -> Self {
        Self::power(0.0)
    }

    pub fn chi2() -> Self {
        Self::power(2.0)
    }

    pub fn modified_chi2() -> Self {
        Self::power(-1.0)
    }

    pub fn hellinger() -> Self {
        Self::power(0.5)
    }

    /// Validates and wraps a custom generator.
    ///
    /// Checks `φ(1) = 0`, `φ′(1) = 0`, the supplied `φ″(1) > 0` against the
    /// supplied `φ″`, convexity on a grid of the domain and the conjugate
    /// domain endpoints against the asymptotic slopes `φ(y)/y`.
    /// Essential smoothness is assumed, not checked.
    pub fn custom(spec: CustomPhi) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidDivergence(format!("{}: {m}", spec.name)));
        let (a, b) = spec.domain;
        if !(a < 1.0 && 1.0 < b) {
            return bad(format!("domain ({a}, {b}) must contain 1"));
        }
        let (ac, bc) = spec.conjugate_domain;
        if !(ac < 0.0 && 0.0 < bc) {
            return bad(format!("conjugate domain ({ac}, {bc}) must contain 0"));
        }
        let s2 = spec.second_derivative_at_one;
        if !(s2 > 0.0 && s2.is_finite()) {
            return bad(format!("phi''(1) = {s2} must be positive"));
        }
        if (spec.phi)(1.0).abs() > 1e-12 {
            return bad("phi(1) != 0".into());
        }
        if (spec.d1)(1.0).abs() > 1e-12 {
            return bad("phi'(1) != 0".into());
        }
        if ((spec.d2)(1.0) - s2).abs() > 1e-8 * s2 {
            return bad("supplied phi''(1) disagrees with phi''".into());
        }
        for x in interior_grid(a, b) {
            let d2 = (spec.d2)(x);
            if d2.is_nan() || d2 < 0.0 {
                return bad(format!("phi'' negative at {x}"));
            }
        }
        check_slope_limit(&*spec.phi, 1.0, bc).map_err(|m| {
            Error::InvalidDivergence(format!("{}: upper conjugate endpoint: {m}", spec.name))
        })?;
        check_slope_limit(&*spec.phi, -1.0, ac).map_err(|m| {
            Error::InvalidDivergence(format!("{}: lower conjugate endpoint: {m}", spec.name))
        })?;
        Ok(Divergence {
            domain: spec.domain,
            conjugate_domain: spec.conjugate_domain,
            phi2_at_one: s2,
            kind: Kind::Custom(Arc::new(spec)),
        })
    }

    /// `γ` for power generators.
    pub fn gamma(&self) -> Option<f64> {
        match self.kind {
            Kind::Power(g) => Some(g),
            Kind::Custom(_) => None,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            Kind::Power(g) => format!("power(gamma={g})"),
            Kind::Custom(c) => c.name.clone(),
        }
    }

    /// `φ″(1)`, the scale of the `2n/φ″(1)` statistics.
    pub fn phi2_at_one(&self) -> f64 {
        self.phi2_at_one
    }

    /// `(a_φ, b_φ)`.
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// `(a_φ*, b_φ*)`.
    pub fn conjugate_domain(&self) -> (f64, f64) {
        self.conjugate_domain
    }

    /// True when φ is finite on the whole real line, which the signed-measure
    /// mixture statistics require.
    pub fn finite_on_reals(&self) -> bool {
        self.domain.0 == f64::NEG_INFINITY && self.domain.1 == f64::INFINITY
    }

    /// `(φ(x), φ′(x), φ″(x))`, `+∞` outside the domain.
    pub fn eval(&self, x: f64) -> PhiValue {
        match &self.kind {
            Kind::Power(g) => power_eval(*g, x),
            Kind::Custom(c) => {
                let (a, b) = c.domain;
                if x.is_nan() || x < a || x > b {
                    return PhiValue::INFEASIBLE;
                }
                PhiValue {
                    value: (c.phi)(x),
                    d1: (c.d1)(x),
                    d2: (c.d2)(x),
                }
            }
        }
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.eval(x).value
    }

    /// Fenchel conjugate `φ*(t) = sup_x {tx − φ(x)}`.
    pub fn conjugate(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        let (ac, bc) = self.conjugate_domain;
        if t < ac || t > bc || (t == bc && bc.is_finite()) {
            return f64::INFINITY;
        }
        match &self.kind {
            Kind::Power(g) if *g == 0.0 => -(-t).ln_1p(),
            Kind::Power(g) if *g == 1.0 => t.exp_m1(),
            Kind::Power(g) if *g == 2.0 => t + 0.5 * t * t,
            Kind::Custom(c) if c.conjugate.is_some() => (c.conjugate.as_ref().unwrap())(t),
            _ => self.conjugate_numeric(t),
        }
    }

    /// `φ*(φ′(x)) = xφ′(x) − φ(x)` evaluated directly, `x` in the open domain.
    pub fn conjugate_of_derivative(&self, x: f64) -> Result<f64> {
        let (a, b) = self.domain;
        if !(x > a && x < b) {
            return Err(Error::Domain(format!(
                "x = {x} outside the open domain ({a}, {b})"
            )));
        }
        Ok(match &self.kind {
            Kind::Power(g) => power_conjugate_of_derivative(*g, x),
            Kind::Custom(c) => x * (c.d1)(x) - (c.phi)(x),
        })
    }

    /// Solves `φ′(x) = t` by safeguarded Newton and returns `tx − φ(x)`.
    fn conjugate_numeric(&self, t: f64) -> f64 {
        let (a, b) = self.domain;
        let d1 = |x: f64| self.eval(x).d1;
        // Left boundary: the sup is attained at a finite endpoint once t falls
        // below the limiting slope there.
        if a.is_finite() {
            let at_a = self.eval(a);
            if at_a.value.is_finite() && t <= at_a.d1 {
                return t * a - at_a.value;
            }
        }
        if t == 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = if t > 0.0 {
            let mut hi = 2.0_f64;
            while d1(hi) < t {
                hi *= 2.0;
                if hi > b || hi > 1e300 {
                    return f64::INFINITY;
                }
            }
            (1.0, hi)
        } else if a.is_finite() {
            (a, 1.0)
        } else {
            let mut lo = 0.0_f64;
            let mut step = 1.0;
            while d1(lo) > t {
                step *= 2.0;
                lo = 1.0 - step;
                if step > 1e300 {
                    return f64::NEG_INFINITY;
                }
            }
            (lo, 1.0)
        };
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let v = self.eval(x);
            let r = v.d1 - t;
            if r.abs() <= 1e-15 * t.abs().max(1.0) {
                break;
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - r / v.d2;
            x = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-16 * x.abs().max(1e-300) {
                break;
            }
        }
        t * x - self.phi(x)
    }
}

fn power_eval(g: f64, x: f64) -> PhiValue {
    if x.is_nan() {
        return PhiValue {
            value: f64::NAN,
            d1: f64::NAN,
            d2: f64::NAN,
        };
    }
    if x < 0.0 {
        if is_even_integer(g) {
            let k = g as i32;
            return PhiValue {
                value: (x.powi(k) - g * x + g - 1.0) / (g * (g - 1.0)),
                d1: (x.powi(k - 1) - 1.0) / (g - 1.0),
                d2: x.powi(k - 2),
            };
        }
        return PhiValue::INFEASIBLE;
    }
    if x == 0.0 {
        let value = if g > 0.0 { 1.0 / g } else { f64::INFINITY };
        let d1 = if g > 1.0 {
            -1.0 / (g - 1.0)
        } else {
            f64::NEG_INFINITY
        };
        let d2 = if g > 2.0 {
            0.0
        } else if g == 2.0 {
            1.0
        } else {
            f64::INFINITY
        };
        return PhiValue { value, d1, d2 };
    }
    if x == f64::INFINITY {
        return PhiValue::INFEASIBLE;
    }
    let u = x - 1.0;
    let lx = u.ln_1p();
    let value = if u.abs() < SERIES_RADIUS {
        // φ^(k)(1) = (γ−2)(γ−3)…(γ−k+1) for k ≥ 2.
        let mut term = 0.5 * u * u;
        let mut sum = term;
        for k in 3..=7 {
            term *= (g - (k - 1) as f64) * u / k as f64;
            sum += term;
        }
        sum
    } else if g == 0.0 {
        -lx + u
    } else if g == 1.0 {
        x * lx - u
    } else {
        (x.powf(g) - g * x + g - 1.0) / (g * (g - 1.0))
    };
    let d1 = if g == 1.0 {
        lx
    } else {
        ((g - 1.0) * lx).exp_m1() / (g - 1.0)
    };
    let d2 = ((g - 2.0) * lx).exp();
    PhiValue { value, d1, d2 }
}

fn power_conjugate_of_derivative(g: f64, x: f64) -> f64 {
    // xφ′(x) − φ(x) simplifies to (x^γ − 1)/γ.
    if x < 0.0 {
        let k = g as i32;
        return (x.powi(k) - 1.0) / g;
    }
    let lx = (x - 1.0).ln_1p();
    if g == 0.0 {
        lx
    } else {
        (g * lx).exp_m1() / g
    }
}

/// Grid of interior points used for convexity checks.
fn interior_grid(a: f64, b: f64) -> Vec<f64> {
    let mut xs = Vec::new();
    for k in -6..=6 {
        let x = 10f64.powf(k as f64 / 2.0);
        if x > a && x < b {
            xs.push(x);
        }
        let y = 1.0 - x;
        if y > a && y < b && y != 1.0 {
            xs.push(y);
        }
    }
    xs
}

/// Slopes `φ(y)/y` at `y = sign·10^k`, `k = 2..=6`.
pub fn asymptotic_slopes(phi: &dyn Fn(f64) -> f64, sign: f64) -> [f64; 5] {
    let mut s = [0.0; 5];
    for (i, k) in (2..=6).enumerate() {
        let y = sign * 10f64.powi(k);
        s[i] = phi(y) / y;
    }
    s
}

/// Aitken Δ² extrapolation of the last three terms.
pub fn aitken(s: &[f64]) -> f64 {
    let n = s.len();
    let (s0, s1, s2) = (s[n - 3], s[n - 2], s[n - 1]);
    let den = s2 - 2.0 * s1 + s0;
    if den == 0.0 {
        return f64::NAN;
    }
    s2 - (s2 - s1).powi(2) / den
}

fn check_slope_limit(
    phi: &dyn Fn(f64) -> f64,
    sign: f64,
    stored: f64,
) -> std::result::Result<(), String> {
    let s = asymptotic_slopes(phi, sign);
    if s.iter().any(|v| v.is_infinite()) {
        // φ = +∞ on that side, so φ(y)/y is +∞ for y > 0 and −∞ for y < 0.
        return if stored == sign * f64::INFINITY {
            Ok(())
        } else {
            Err(format!("phi is infinite on this side but endpoint is {stored}"))
        };
    }
    let limit = aitken(&s);
    let converged = limit.is_finite() && (limit - s[4]).abs() <= 1e-2 * limit.abs().max(1.0);
    if stored.is_finite() {
        if !converged || (limit - stored).abs() > 1e-3 * stored.abs().max(1.0) {
            return Err(format!(
                "slopes {s:?} extrapolate to {limit}, stored {stored}"
            ));
        }
    } else if converged {
        return Err(format!("slopes converge to {limit} but endpoint is infinite"));
    }
    Ok(())
}

/// Config-file form of a divergence: `divergence = { family = "power", gamma = 2 }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DivergenceConfig {
    Power { gamma: f64 },
    KullbackLeibler,
    ModifiedKullbackLeibler,
    Chi2,
    ModifiedChi2,
    Hellinger,
}

impl DivergenceConfig {
    pub fn build(&self) -> Divergence {
        match *self {
            DivergenceConfig::Power { gamma } => Divergence::power(gamma),
            DivergenceConfig::KullbackLeibler => Divergence::kullback_leibler(),
            DivergenceConfig::ModifiedKullbackLeibler => Divergence::modified_kullback_leibler(),
            DivergenceConfig::Chi2 => Divergence::chi2(),
            DivergenceConfig::ModifiedChi2 => Divergence::modified_chi2(),
            DivergenceConfig::Hellinger => Divergence::hellinger(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn spot_values() {
        let v = Divergence::power(1.0).eval(1.0);
        assert_eq!((v.value, v.d1, v.d2), (0.0, 0.0, 1.0));

        let v = Divergence::power(2.0).eval(3.0);
        assert!(close(v.value, 2.0, 1e-15) && close(v.d1, 2.0, 1e-15) && close(v.d2, 1.0, 1e-15));

        // −ln 0.5 + 0.5 − 1
        let v = Divergence::power(0.0).eval(0.5);
        assert!(close(v.value, 0.193_147_180_559_945_3, 1e-15));
        assert!(close(v.d1, -1.0, 1e-15));
        assert!(close(v.d2, 4.0, 1e-14));

        let v = Divergence::power(0.5).eval(0.0);
        assert_eq!(v.value, 2.0);
        assert_eq!(v.d1, f64::NEG_INFINITY);
        assert_eq!(v.d2, f64::INFINITY);
    }

    #[test]
    fn negative_arguments() {
        for g in [-1.0, 0.0, 0.5, 1.0, 3.0] {
            assert_eq!(Divergence::power(g).phi(-0.5), f64::INFINITY, "gamma {g}");
        }
        assert!(close(Divergence::power(2.0).phi(-1.0), 2.0, 1e-15));
        assert!(Divergence::power(4.0).phi(-1.0).is_finite());
        assert!(Divergence::chi2().finite_on_reals());
        assert!(!Divergence::hellinger().finite_on_reals());
    }

    #[test]
    fn limits_at_zero() {
        assert_eq!(Divergence::power(0.0).phi(0.0), f64::INFINITY);
        assert_eq!(Divergence::power(1.0).phi(0.0), 1.0);
        assert_eq!(Divergence::power(-1.0).phi(0.0), f64::INFINITY);
        let v = Divergence::power(3.0).eval(0.0);
        assert!(close(v.value, 1.0 / 3.0, 1e-15) && close(v.d1, -0.5, 1e-15) && v.d2 == 0.0);
    }

    #[test]
    fn series_matches_formula_near_one() {
        // Just outside the series window the direct formula is still accurate
        // to ~1e-8 relative; compare both branches across the switch.
        for g in [-1.0, 0.0, 0.5, 1.0, 2.0, 3.5] {
            let d = Divergence::power(g);
            let inside = d.phi(1.0 + 0.999e-4);
            let outside = d.phi(1.0 + 1.001e-4);
            let h = 0.002e-4;
            let slope = d.eval(1.0 + 1e-4).d1;
            assert!(
                (outside - inside - slope * h).abs() < 1e-7 * inside,
                "gamma {g}: {inside} {outside}"
            );
        }
    }

    #[test]
    fn conjugate_closed_forms() {
        assert_eq!(Divergence::chi2().conjugate(0.0), 0.0);
        assert!(close(Divergence::power(0.0).conjugate(0.5), std::f64::consts::LN_2, 1e-15));
        assert!(close(Divergence::chi2().conjugate(1.0), 1.5, 1e-15));
        assert_eq!(Divergence::power(0.0).conjugate(1.0), f64::INFINITY);
        assert_eq!(Divergence::power(0.5).conjugate(2.5), f64::INFINITY);
    }

    #[test]
    fn numeric_conjugate_matches_power_closed_form() {
        // φ*_γ(t) = ((1 + (γ−1)t)^{γ/(γ−1)} − 1)/γ where the stationary point exists.
        for g in [-1.0, 0.5, 1.5, 3.0] {
            let d = Divergence::power(g);
            for t in [-3.0, -0.4, 0.0, 0.3, 0.9, 1.5] {
                let base = 1.0 + (g - 1.0) * t;
                if base <= 0.0 {
                    continue;
                }
                let exact = (base.powf(g / (g - 1.0)) - 1.0) / g;
                let num = d.conjugate(t);
                assert!(
                    (num - exact).abs() < 1e-10 * exact.abs().max(1.0),
                    "gamma {g} t {t}: {num} vs {exact}"
                );
            }
        }
        // γ = 3 below φ′(0) = −1/2: the sup sits at x = 0.
        assert!(close(Divergence::power(3.0).conjugate(-2.0), -1.0 / 3.0, 1e-15));
    }

    #[test]
    fn conjugate_of_derivative_values() {
        assert_eq!(Divergence::power(1.0).conjugate_of_derivative(1.0).unwrap(), 0.0);
        assert!(close(Divergence::chi2().conjugate_of_derivative(3.0).unwrap(), 4.0, 1e-14));
        let d = Divergence::power(0.0);
        let v = d.conjugate_of_derivative(0.5).unwrap();
        assert!(close(v, -std::f64::consts::LN_2, 1e-15));
        assert!(close(v, d.conjugate(d.eval(0.5).d1), 1e-15));
        assert!(matches!(d.conjugate_of_derivative(0.0), Err(Error::Domain(_))));
        assert!(matches!(d.conjugate_of_derivative(-1.0), Err(Error::Domain(_))));
    }

    fn hellinger_custom(b_conj: f64) -> CustomPhi {
        CustomPhi {
            name: "hellinger-custom".into(),
            phi: Arc::new(|x: f64| if x < 0.0 { f64::INFINITY } else { 2.0 * (x.sqrt() - 1.0).powi(2) }),
            d1: Arc::new(|x: f64| 2.0 - 2.0 / x.sqrt()),
            d2: Arc::new(|x: f64| x.powf(-1.5)),
            conjugate: None,
            domain: (0.0, f64::INFINITY),
            conjugate_domain: (f64::NEG_INFINITY, b_conj),
            second_derivative_at_one: 1.0,
        }
    }

    #[test]
    fn custom_validation() {
        let d = Divergence::custom(hellinger_custom(2.0)).unwrap();
        let p = Divergence::hellinger();
        for t in [-2.0, 0.0, 1.0, 1.9] {
            assert!((d.conjugate(t) - p.conjugate(t)).abs() < 1e-9, "t = {t}");
        }
        assert!(Divergence::custom(hellinger_custom(3.0)).is_err());
        assert!(Divergence::custom(hellinger_custom(f64::INFINITY)).is_err());

        let mut bad = hellinger_custom(2.0);
        bad.second_derivative_at_one = 0.0;
        assert!(Divergence::custom(bad).is_err());
        let mut shifted = hellinger_custom(2.0);
        shifted.phi = Arc::new(|x: f64| 2.0 * (x.sqrt() - 1.0).powi(2) + 0.1);
        assert!(Divergence::custom(shifted).is_err());
    }
}
