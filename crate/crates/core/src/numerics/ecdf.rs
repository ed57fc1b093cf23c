//! Empirical distribution functions and Kolmogorov-Smirnov distances to
//! reference laws that may carry atoms.

use super::special::{chi2_cdf, normal_cdf};

/// A reference distribution: right-continuous CDF plus its left limits.
pub trait ReferenceCdf {
    fn cdf(&self, x: f64) -> f64;

    /// `F(x−)`; equals [`ReferenceCdf::cdf`] where `F` is continuous.
    fn left_limit(&self, x: f64) -> f64 {
        self.cdf(x)
    }
}

/// Reference laws used by the simulation designs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    ChiSquared(f64),
    /// `½δ₀ + ½χ²₁`.
    HalfChiSquared1,
    PointMass(f64),
    Uniform01,
    StandardNormal,
}

impl ReferenceCdf for Reference {
    fn cdf(&self, x: f64) -> f64 {
        match *self {
            Reference::ChiSquared(k) => chi2_cdf(k, x),
            Reference::HalfChiSquared1 => {
                if x < 0.0 {
                    0.0
                } else {
                    0.5 + 0.5 * chi2_cdf(1.0, x)
                }
            }
            Reference::PointMass(c) => {
                if x >= c {
                    1.0
                } else {
                    0.0
                }
            }
            Reference::Uniform01 => x.clamp(0.0, 1.0),
            Reference::StandardNormal => normal_cdf(x),
        }
    }

    fn left_limit(&self, x: f64) -> f64 {
        match *self {
            Reference::HalfChiSquared1 if x == 0.0 => 0.0,
            Reference::PointMass(c) if x == c => 0.0,
            _ => self.cdf(x),
        }
    }
}

impl<F: Fn(f64) -> f64> ReferenceCdf for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Sorted sample with ECDF queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    /// # Panics
    /// On an empty sample or NaN entries.
    pub fn new(sample: &[f64]) -> Self {
        assert!(!sample.is_empty(), "ECDF of an empty sample");
        assert!(sample.iter().all(|x| !x.is_nan()), "NaN in ECDF sample");
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ecdf { sorted }
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of observations `≤ x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.len() as f64
    }

    /// `sup_x |F_n(x) − F(x)|`, checking both one-sided limits at every jump
    /// of the ECDF and the reference's left limits there.
    pub fn ks_distance<R: ReferenceCdf + ?Sized>(&self, reference: &R) -> f64 {
        let n = self.len() as f64;
        let mut d: f64 = 0.0;
        let mut i = 0;
        let mut below = 0.0;
        while i < self.sorted.len() {
            let v = self.sorted[i];
            let mut j = i;
            while j < self.sorted.len() && self.sorted[j] == v {
                j += 1;
            }
            let above = j as f64 / n;
            d = d
                .max((below - reference.left_limit(v)).abs())
                .max((above - reference.cdf(v)).abs());
            below = above;
            i = j;
        }
        d.min(1.0)
    }
}

pub fn ecdf_ks<R: ReferenceCdf + ?Sized>(sample: &[f64], reference: &R) -> f64 {
    Ecdf::new(sample).ks_distance(reference)
}
