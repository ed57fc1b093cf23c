use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::{check_theta, power_moment, ParamBox, ParametricModel, Sample, Support};
use crate::divergence::Divergence;
use crate::error::{Error, Result};

/// `p_θ(x) = θ e^{−θx}` on `[0, ∞)`.
#[derive(Debug, Clone)]
pub struct Exponential {
    bounds: ParamBox,
}

impl Exponential {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "exponential rate box must lie in (0, inf), got lower bound {lo}"
            )));
        }
        Ok(Exponential {
            bounds: ParamBox::interval(lo, hi)?,
        })
    }
}

impl Default for Exponential {
    fn default() -> Self {
        Self::new(1e-6, 1e6).expect("valid default box")
    }
}

impl ParametricModel for Exponential {
    fn name(&self) -> String {
        "exponential".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn param_box(&self) -> &ParamBox {
        &self.bounds
    }

    fn support(&self) -> Support {
        Support::Continuous(vec![(0.0, f64::INFINITY)])
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> f64 {
        if x[0] < 0.0 {
            f64::NEG_INFINITY
        } else {
            theta[0].ln() - theta[0] * x[0]
        }
    }

    fn score(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = 1.0 / theta[0] - x[0];
    }

    fn fisher_information(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_element(1, 1, 1.0 / (theta[0] * theta[0])))
    }

    fn sample(&self, theta: &[f64], n: usize, seed: u64) -> Result<Sample> {
        check_theta(self, theta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n)
            .map(|_| {
                let e: f64 = Exp1.sample(&mut rng);
                e / theta[0]
            })
            .collect();
        Sample::scalar(v)
    }

    fn quantile(&self, theta: &[f64], p: f64) -> Vec<f64> {
        vec![-(-p).ln_1p() / theta[0]]
    }

    fn pilot(&self, sample: &Sample) -> Vec<f64> {
        let mut t = vec![1.0 / sample.mean()[0]];
        self.bounds.project(&mut t);
        t
    }

    /// `∫ p_θ^γ p_α^{1−γ} = θ^γ α^{1−γ} / (γθ + (1−γ)α)`, infinite when the
    /// denominator is not positive.
    fn moment_closed_form(
        &self,
        divergence: &Divergence,
        theta: &[f64],
        alpha: &[f64],
        grad: Option<&mut [f64]>,
    ) -> Option<Result<f64>> {
        let g = divergence.gamma()?;
        let (t, a) = (theta[0], alpha[0]);
        if g == 1.0 {
            if let Some(grad) = grad {
                grad[0] = -(t - a) / (a * t);
            }
            return Some(Ok((t / a).ln() - 1.0 + a / t));
        }
        let d = g * t + (1.0 - g) * a;
        if !(d > 0.0) {
            return Some(Err(Error::NonIntegrable(format!(
                "exponential moment diverges at theta = {t}, alpha = {a}"
            ))));
        }
        let ratio_pow = (g * (t / a).ln()).exp();
        if let Some(grad) = grad {
            grad[0] = -g * ratio_pow * (t - a) / (d * d);
        }
        Some(Ok(power_moment(g, ratio_pow * a / d)))
    }
}
