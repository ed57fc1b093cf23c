use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_theta, power_moment, ParamBox, ParametricModel, Sample, Support};
use crate::divergence::Divergence;
use crate::error::Result;
use crate::numerics::normal_quantile;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `𝒩(θ, 1)`.
#[derive(Debug, Clone)]
pub struct GaussianMean {
    bounds: ParamBox,
}

impl GaussianMean {
    pub fn new(bounds: ParamBox) -> Self {
        assert_eq!(bounds.dim(), 1);
        GaussianMean { bounds }
    }

    pub fn unbounded() -> Self {
        Self::new(ParamBox::unbounded(1))
    }
}

impl Default for GaussianMean {
    fn default() -> Self {
        Self::unbounded()
    }
}

/// `∫ p_θ^γ p_α^{1−γ}` for unit-variance normals is `exp(γ(γ−1)δ/2)` with
/// `δ = ‖θ − α‖²`.
fn gaussian_moment(
    divergence: &Divergence,
    theta: &[f64],
    alpha: &[f64],
    grad: Option<&mut [f64]>,
) -> Option<Result<f64>> {
    let g = divergence.gamma()?;
    let delta: f64 = theta.iter().zip(alpha).map(|(t, a)| (t - a) * (t - a)).sum();
    let e = (0.5 * g * (g - 1.0) * delta).exp();
    let value = if g == 1.0 {
        0.5 * delta
    } else {
        power_moment(g, e)
    };
    if let Some(grad) = grad {
        let c = if g == 1.0 { 1.0 } else { g * e };
        for ((o, t), a) in grad.iter_mut().zip(theta).zip(alpha) {
            *o = -c * (t - a);
        }
    }
    Some(Ok(value))
}

impl ParametricModel for GaussianMean {
    fn name(&self) -> String {
        "gaussian_mean".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn param_box(&self) -> &ParamBox {
        &self.bounds
    }

    fn support(&self) -> Support {
        Support::Continuous(vec![(f64::NEG_INFINITY, f64::INFINITY)])
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> f64 {
        let z = x[0] - theta[0];
        -0.5 * z * z - LN_SQRT_2PI
    }

    fn score(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = x[0] - theta[0];
    }

    fn fisher_information(&self, _theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(1, 1))
    }

    fn sample(&self, theta: &[f64], n: usize, seed: u64) -> Result<Sample> {
        check_theta(self, theta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                theta[0] + z
            })
            .collect();
        Sample::scalar(v)
    }

    fn quantile(&self, theta: &[f64], p: f64) -> Vec<f64> {
        vec![theta[0] + normal_quantile(p).unwrap_or(f64::NAN)]
    }

    fn pilot(&self, sample: &Sample) -> Vec<f64> {
        let mut m = sample.mean();
        self.bounds.project(&mut m);
        m
    }

    fn moment_closed_form(
        &self,
        divergence: &Divergence,
        theta: &[f64],
        alpha: &[f64],
        grad: Option<&mut [f64]>,
    ) -> Option<Result<f64>> {
        gaussian_moment(divergence, theta, alpha, grad)
    }
}

/// `𝒩(θ, I_d)` with independent coordinates.
#[derive(Debug, Clone)]
pub struct GaussianMeanVector {
    bounds: ParamBox,
}

impl GaussianMeanVector {
    pub fn new(bounds: ParamBox) -> Self {
        GaussianMeanVector { bounds }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::new(ParamBox::unbounded(dim))
    }
}

impl ParametricModel for GaussianMeanVector {
    fn name(&self) -> String {
        format!("gaussian_mean_vector(d={})", self.bounds.dim())
    }

    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn obs_dim(&self) -> usize {
        self.bounds.dim()
    }

    fn param_box(&self) -> &ParamBox {
        &self.bounds
    }

    fn support(&self) -> Support {
        Support::Continuous(vec![(f64::NEG_INFINITY, f64::INFINITY); self.dim()])
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> f64 {
        theta
            .iter()
            .zip(x)
            .map(|(t, v)| -0.5 * (v - t) * (v - t) - LN_SQRT_2PI)
            .sum()
    }

    fn score(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        for ((o, t), v) in out.iter_mut().zip(theta).zip(x) {
            *o = v - t;
        }
    }

    fn fisher_information(&self, _theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.dim(), self.dim()))
    }

    fn sample(&self, theta: &[f64], n: usize, seed: u64) -> Result<Sample> {
        check_theta(self, theta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vec::with_capacity(n * theta.len());
        for _ in 0..n {
            for t in theta {
                let z: f64 = StandardNormal.sample(&mut rng);
                v.push(t + z);
            }
        }
        Sample::new(theta.len(), v)
    }

    fn quantile(&self, theta: &[f64], p: f64) -> Vec<f64> {
        let z = normal_quantile(p).unwrap_or(f64::NAN);
        theta.iter().map(|t| t + z).collect()
    }

    fn pilot(&self, sample: &Sample) -> Vec<f64> {
        let mut m = sample.mean();
        self.bounds.project(&mut m);
        m
    }

    fn moment_closed_form(
        &self,
        divergence: &Divergence,
        theta: &[f64],
        alpha: &[f64],
        grad: Option<&mut [f64]>,
    ) -> Option<Result<f64>> {
        gaussian_moment(divergence, theta, alpha, grad)
    }
}
