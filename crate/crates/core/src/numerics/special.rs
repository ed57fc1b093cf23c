//! χ² and normal distribution functions built on the regularized incomplete
//! gamma function.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the Lanczos sum in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x - ln_gamma(a)).exp()
}

fn series_p(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * prefactor(a, x)
}

fn continued_fraction_q(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * prefactor(a, x)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else if x < a + 1.0 {
        series_p(a, x)
    } else {
        1.0 - continued_fraction_q(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x == f64::INFINITY {
        0.0
    } else if x < a + 1.0 {
        1.0 - series_p(a, x)
    } else {
        continued_fraction_q(a, x)
    }
}

pub fn chi2_cdf(dof: f64, x: f64) -> f64 {
    gamma_p(0.5 * dof, 0.5 * x)
}

/// Upper tail `1 − chi2_cdf`, accurate far in the tail.
pub fn chi2_sf(dof: f64, x: f64) -> f64 {
    gamma_q(0.5 * dof, 0.5 * x)
}

pub fn chi2_pdf(dof: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let k = 0.5 * dof;
    if x == 0.0 {
        return match k.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => 0.5,
            _ => 0.0,
        };
    }
    ((k - 1.0) * x.ln() - 0.5 * x - k * 2f64.ln() - ln_gamma(k)).exp()
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability {p} outside (0, 1)")))
    }
}

/// `p`-quantile of χ² with `dof` degrees of freedom.
pub fn chi2_quantile(dof: f64, p: f64) -> Result<f64> {
    check_probability(p)?;
    if !(dof > 0.0) {
        return Err(Error::Domain(format!("degrees of freedom {dof} must be positive")));
    }
    // Work on whichever tail is smaller so the residual keeps relative precision.
    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    let resid = |x: f64| {
        if upper {
            target - chi2_sf(dof, x)
        } else {
            chi2_cdf(dof, x) - target
        }
    };
    // Wilson-Hilferty start.
    let z = normal_quantile(p)?;
    let c = 2.0 / (9.0 * dof);
    let mut x = (dof * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-8);
    let mut lo = 0.0;
    let mut hi = x.max(1.0);
    while resid(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    if x <= lo || x >= hi {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..300 {
        let r = resid(x);
        if r == 0.0 {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = r / chi2_pdf(dof, x);
        if step.abs() <= 1e-15 * x {
            break;
        }
        let newton = x - step;
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * x {
            break;
        }
    }
    Ok(x)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF, via `erfc(z) = Q(1/2, z²)`.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let half_tail = 0.5 * gamma_q(0.5, 0.5 * x * x);
    if x < 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// Standard normal quantile: rational start plus Halley refinement.
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    if p > 0.5 {
        return Ok(-lower_normal_quantile(1.0 - p));
    }
    Ok(lower_normal_quantile(p))
}

fn lower_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let mut x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..3 {
        // x ≤ 0 here, so the CDF is the accurately computed half tail.
        let e = normal_cdf(x) - p;
        let u = e / normal_pdf(x);
        let next = x - u / (1.0 + 0.5 * x * u);
        if !next.is_finite() {
            break;
        }
        if (next - x).abs() <= 1e-16 * x.abs() {
            x = next;
            break;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_quantile_reference_values() {
        assert!((chi2_quantile(1.0, 0.95).unwrap() - 3.841_458_820_694_124).abs() < 1e-10);
        assert!((chi2_quantile(2.0, 0.95).unwrap() - 5.991_464_547_107_979).abs() < 1e-10);
        assert!((chi2_quantile(5.0, 0.99).unwrap() - 15.086_272_469_388_99).abs() < 1e-9);
        assert_eq!(chi2_cdf(1.0, 0.0), 0.0);
        assert!(chi2_quantile(1.0, 1.0).is_err());
        assert!(chi2_quantile(1.0, 0.0).is_err());
    }

    #[test]
    fn chi2_round_trip() {
        for d in [1.0, 2.0, 5.0] {
            for p in [0.5, 0.9, 0.95, 0.99] {
                let q = chi2_quantile(d, p).unwrap();
                assert!((chi2_cdf(d, q) - p).abs() < 1e-9, "d={d} p={p}");
            }
        }
    }

    #[test]
    fn two_dof_is_exponential() {
        for x in [0.1f64, 1.0, 7.5, 40.0] {
            let exact = -(-0.5 * x).exp_m1();
            assert!((chi2_cdf(2.0, x) - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn normal_symmetry_and_inverse() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-14);
        let mut x = -6.0;
        while x <= 6.0 {
            let back = normal_quantile(normal_cdf(x)).unwrap();
            assert!((back - x).abs() < 1e-8, "x={x} back={back}");
            x += 0.05;
        }
    }

    #[test]
    fn ln_gamma_integers() {
        let mut fact = 1.0_f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12);
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }
}
