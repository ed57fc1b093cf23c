//! Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and subdivision budget.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            abs_tol: 1e-13,
            rel_tol: 1e-9,
            max_intervals: 400,
        }
    }
}

/// The 15 Kronrod nodes mapped onto `[a, b]`.
pub fn kronrod_nodes(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [0.0; 15];
    for j in 0..7 {
        out[2 * j] = c - h * XGK[j];
        out[2 * j + 1] = c + h * XGK[j];
    }
    out[14] = c;
    out
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    key: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

fn rule<F>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Result<Panel>
where
    F: FnMut(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut fvals = vec![0.0; 15 * dim];
    let mut eval = |x: f64, slot: usize, buf: &mut [f64]| -> Result<()> {
        f(x, buf);
        for (k, v) in buf.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonIntegrable(format!("integrand is {v} at x = {x}")));
            }
            fvals[slot * dim + k] = *v;
        }
        Ok(())
    };
    eval(c, 14, buf)?;
    for (j, x) in XGK.iter().take(7).enumerate() {
        let dx = h * x;
        eval(c - dx, 2 * j, buf)?;
        eval(c + dx, 2 * j + 1, buf)?;
    }
    let mut resasc = vec![0.0; dim];
    for k in 0..dim {
        let fc = fvals[14 * dim + k];
        let mut rk = WGK[7] * fc;
        let mut rg = WG[3] * fc;
        for j in 0..7 {
            let s = fvals[2 * j * dim + k] + fvals[(2 * j + 1) * dim + k];
            rk += WGK[j] * s;
            if j % 2 == 1 {
                rg += WG[j / 2] * s;
            }
        }
        let mean = 0.5 * rk;
        let mut asc = WGK[7] * (fc - mean).abs();
        for j in 0..7 {
            asc += WGK[j]
                * ((fvals[2 * j * dim + k] - mean).abs()
                    + (fvals[(2 * j + 1) * dim + k] - mean).abs());
        }
        kron[k] = rk * h;
        gauss[k] = rg * h;
        resasc[k] = asc * h.abs();
    }
    let mut error = vec![0.0; dim];
    let mut key: f64 = 0.0;
    for k in 0..dim {
        let mut e = (kron[k] - gauss[k]).abs();
        if resasc[k] != 0.0 && e != 0.0 {
            e = resasc[k] * (200.0 * e / resasc[k]).powf(1.5).min(1.0);
        }
        error[k] = e;
        key = key.max(e);
    }
    Ok(Panel {
        a,
        b,
        value: kron,
        error,
        key,
    })
}

/// Integrates a vector-valued integrand over `[a, b]`.
///
/// Fails with [`Error::NonIntegrable`] when the integrand is not finite at a
/// node or when the subdivision budget is exhausted before every component
/// meets `max(abs_tol, rel_tol·|I_k|)`.
pub fn integrate_vec<F>(mut f: F, a: f64, b: f64, dim: usize, opts: &QuadratureOptions) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonIntegrable(format!("infinite interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(vec![0.0; dim]);
    }
    let mut buf = vec![0.0; dim];
    let first = rule(&mut f, a, b, dim, &mut buf)?;
    let mut total = first.value.clone();
    let mut err = first.error.clone();
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let done = |total: &[f64], err: &[f64]| {
        total
            .iter()
            .zip(err)
            .all(|(t, e)| *e <= opts.abs_tol.max(opts.rel_tol * t.abs()))
    };
    while !done(&total, &err) {
        if heap.len() >= opts.max_intervals {
            return Err(Error::NonIntegrable(format!(
                "no convergence on [{a}, {b}] within {} subintervals (error {:?})",
                opts.max_intervals, err
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::NonIntegrable(format!(
                "interval around {mid} cannot be subdivided further"
            )));
        }
        let left = rule(&mut f, worst.a, mid, dim, &mut buf)?;
        let right = rule(&mut f, mid, worst.b, dim, &mut buf)?;
        for k in 0..dim {
            total[k] += left.value[k] + right.value[k] - worst.value[k];
            err[k] += left.error[k] + right.error[k] - worst.error[k];
        }
        heap.push(left);
        heap.push(right);
        // Re-sum from scratch occasionally; the running sums drift.
        if heap.len() % 64 == 0 {
            total.iter_mut().for_each(|t| *t = 0.0);
            err.iter_mut().for_each(|e| *e = 0.0);
            for p in heap.iter() {
                for k in 0..dim {
                    total[k] += p.value[k];
                    err[k] += p.error[k];
                }
            }
        }
    }
    let mut out = vec![0.0; dim];
    for p in heap.iter() {
        for (o, v) in out.iter_mut().zip(&p.value) {
            *o += v;
        }
    }
    Ok(out)
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: &QuadratureOptions) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_vec(|x, out: &mut [f64]| out[0] = f(x), a, b, 1, opts).map(|v| v[0])
}

/// Iterated integration over a box `∏ [lo_i, hi_i]`.
pub fn integrate_box<F>(
    f: &F,
    bounds: &[(f64, f64)],
    dim: usize,
    opts: &QuadratureOptions,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let point = vec![0.0; bounds.len()];
    integrate_box_rec(f, bounds, 0, &point, dim, opts)
}

fn integrate_box_rec<F>(
    f: &F,
    bounds: &[(f64, f64)],
    axis: usize,
    point: &[f64],
    dim: usize,
    opts: &QuadratureOptions,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let (lo, hi) = bounds[axis];
    if axis + 1 == bounds.len() {
        let mut p = point.to_vec();
        return integrate_vec(
            |x, out| {
                p[axis] = x;
                f(&p, out);
            },
            lo,
            hi,
            dim,
            opts,
        );
    }
    let inner_opts = QuadratureOptions {
        abs_tol: opts.abs_tol * 1e-2,
        rel_tol: opts.rel_tol * 1e-1,
        ..*opts
    };
    let mut failure = None;
    let mut p = point.to_vec();
    let res = integrate_vec(
        |x, out| {
            p[axis] = x;
            match integrate_box_rec(f, bounds, axis + 1, &p, dim, &inner_opts) {
                Ok(v) => out.copy_from_slice(&v),
                Err(e) => {
                    failure.get_or_insert(e);
                    out.iter_mut().for_each(|o| *o = f64::NAN);
                }
            }
        },
        lo,
        hi,
        dim,
        opts,
    );
    match failure {
        Some(e) => Err(e),
        None => res,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_gaussian() {
        let o = QuadratureOptions::default();
        let v = integrate(|x| x * x, 0.0, 3.0, &o).unwrap();
        assert!((v - 9.0).abs() < 1e-13);
        let s = (2.0 * std::f64::consts::PI).sqrt();
        let v = integrate(|x| (-0.5 * x * x).exp() / s, -8.0, 8.0, &o).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand_needs_subdivision() {
        let o = QuadratureOptions::default();
        // ∫_{-1}^{1} 1/(x² + 1e-4) dx = 2·100·atan(100)
        let v = integrate(|x| 1.0 / (x * x + 1e-4), -1.0, 1.0, &o).unwrap();
        let exact = 200.0 * 100f64.atan();
        assert!((v - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn non_integrable_is_reported() {
        let o = QuadratureOptions::default();
        assert!(matches!(
            integrate(|x| 1.0 / x, 0.0, 1.0, &o),
            Err(Error::NonIntegrable(_))
        ));
        assert!(matches!(
            integrate(|x| 1.0 / (x - 0.3), 0.0, 1.0, &o),
            Err(Error::NonIntegrable(_))
        ));
    }

    #[test]
    fn vector_and_box() {
        let o = QuadratureOptions::default();
        let v = integrate_vec(|x, out| {
            out[0] = x;
            out[1] = x.cos();
        }, 0.0, 1.0, 2, &o)
        .unwrap();
        assert!((v[0] - 0.5).abs() < 1e-14 && (v[1] - 1f64.sin()).abs() < 1e-14);
        let b = integrate_box(&|p: &[f64], out: &mut [f64]| out[0] = p[0] * p[1], &[(0.0, 1.0), (0.0, 2.0)], 1, &o)
            .unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12);
    }
}
