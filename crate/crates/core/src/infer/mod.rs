//! Divergence-based tests, the power approximation and sample-size planning,
//! likelihood-ratio statistics for comparison, and inference for mixtures
//! extended to signed weights.

mod mixture;

pub use mixture::{
    confidence_region, mixture_component_test, mixture_dual_chi2, mixture_theta_test, ConfidenceRegion, DualChi2,
    MixtureExtended,
};

use crate::dual::DualObjective;
use crate::error::{Error, Result};
use crate::estimate::{composite_estimate, dual_estimate, ConstraintSpec, EstimateMode, EstimateOptions, EstimateResult};
use crate::model::{ParametricModel, Sample};
use crate::numerics::{
    chi2_quantile, chi2_sf, maximize, normal_cdf, normal_quantile, FnObjective, GradObjective, OptimizeOptions,
    OptimizeReport, Region,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    /// Scaled by `2n/φ″(1)`.
    pub statistic: f64,
    pub dof: usize,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub level: f64,
    pub estimate: EstimateResult,
    /// Whether the underlying optimization met its tolerance.
    pub converged: bool,
}

impl TestReport {
    pub(crate) fn assemble(statistic: f64, dof: usize, level: f64, estimate: EstimateResult) -> Result<Self> {
        let (critical_value, p_value) = if dof == 0 {
            (0.0, 1.0)
        } else {
            (chi2_quantile(dof as f64, 1.0 - level)?, chi2_sf(dof as f64, statistic))
        };
        Ok(TestReport {
            statistic,
            dof,
            critical_value,
            p_value,
            reject: dof > 0 && statistic > critical_value,
            level,
            converged: estimate.converged(),
            estimate,
        })
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {level}")))
    }
}

fn scale(dual: &DualObjective, n: usize) -> f64 {
    2.0 * n as f64 / dual.divergence().phi2_at_one()
}

/// `H₀: θ_T = θ₀` rejected when `(2n/φ″(1)) D̂_φ(θ₀) > q_{d,ε}`.
pub fn simple_test(dual: &DualObjective, theta0: &[f64], sample: &Sample, level: f64) -> Result<TestReport> {
    check_level(level)?;
    let est = dual_estimate(dual, theta0, sample, None, &EstimateMode::Global, &EstimateOptions::fast())?;
    TestReport::assemble(scale(dual, sample.len()) * est.objective_value, dual.dim(), level, est)
}

/// `H₀: θ_T ∈ s(B₀)` rejected when `(2n/φ″(1)) inf_{Θ₀} D̂_φ > q_{l,ε}`.
/// A constraint of codimension 0 never rejects.
pub fn composite_test(
    dual: &DualObjective,
    constraint: &ConstraintSpec,
    sample: &Sample,
    level: f64,
) -> Result<TestReport> {
    check_level(level)?;
    let est = composite_estimate(dual, constraint, sample, None, &EstimateMode::Global, &EstimateOptions::fast())?;
    let l = constraint.codim();
    let statistic = if l == 0 {
        0.0
    } else {
        scale(dual, sample.len()) * est.objective_value
    };
    TestReport::assemble(statistic, l, level, est)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerPlan {
    pub divergence: f64,
    pub sigma: f64,
    pub dof: usize,
    pub level: f64,
    pub phi2_at_one: f64,
    /// Requested power in sample-size mode.
    pub target_power: Option<f64>,
    /// Sample size at which `approx_power` is reported: the given one, or
    /// `n_star` in sample-size mode.
    pub n: f64,
    pub approx_power: f64,
    pub n0: Option<f64>,
    pub n_star: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanTarget {
    /// Approximate power at this sample size.
    SampleSize(f64),
    /// Smallest sample size reaching this power.
    Power(f64),
}

/// `1 − Φ((√n/σ)[(φ″(1)/2n) q_{d,ε} − D])`.
pub fn approx_power(divergence: f64, sigma: f64, dof: usize, phi2_at_one: f64, level: f64, n: f64) -> Result<f64> {
    check_level(level)?;
    if !(sigma > 0.0) || !(n > 0.0) || dof == 0 {
        return Err(Error::InvalidConfig(format!(
            "power needs sigma > 0, n > 0 and dof > 0 (sigma = {sigma}, n = {n}, dof = {dof})"
        )));
    }
    let q = chi2_quantile(dof as f64, 1.0 - level)?;
    let arg = n.sqrt() / sigma * (phi2_at_one * q / (2.0 * n) - divergence);
    Ok(1.0 - normal_cdf(arg))
}

/// Power at a given `n`, or the planning quantities `n₀` and
/// `n* = ⌊n₀⌋ + 1` for a target power `β`.
///
/// `n₀` solves the power equation: with `a = σ²[Φ^{−1}(1−β)]²` and
/// `b = φ″(1) q_{d,ε} D` it is `((a+b) + √(a(a+2b)))/(2D²)` for `β > ½`
/// and the root with the minus sign for `β < ½`; the two coincide at `½`.
pub fn power_plan(
    divergence: f64,
    sigma: f64,
    dof: usize,
    phi2_at_one: f64,
    level: f64,
    target: PlanTarget,
) -> Result<PowerPlan> {
    let mut plan = PowerPlan {
        divergence,
        sigma,
        dof,
        level,
        phi2_at_one,
        target_power: None,
        n: f64::NAN,
        approx_power: f64::NAN,
        n0: None,
        n_star: None,
    };
    match target {
        PlanTarget::SampleSize(n) => {
            plan.n = n;
            plan.approx_power = approx_power(divergence, sigma, dof, phi2_at_one, level, n)?;
        }
        PlanTarget::Power(beta) => {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::InvalidConfig(format!("target power must lie in (0, 1), got {beta}")));
            }
            if !(divergence > 0.0) {
                return Err(Error::PlanningImpossible(format!(
                    "divergence {divergence} is not positive; no sample size separates the alternative"
                )));
            }
            check_level(level)?;
            let z = normal_quantile(1.0 - beta)?;
            let q = chi2_quantile(dof as f64, 1.0 - level)?;
            let a = sigma * sigma * z * z;
            let b = phi2_at_one * q * divergence;
            let root = (a * (a + 2.0 * b)).sqrt();
            let n0 = if beta >= 0.5 {
                (a + b + root) / (2.0 * divergence * divergence)
            } else {
                (a + b - root) / (2.0 * divergence * divergence)
            };
            let n_star = n0.floor() as u64 + 1;
            plan.target_power = Some(beta);
            plan.n0 = Some(n0);
            plan.n_star = Some(n_star);
            plan.n = n_star as f64;
            plan.approx_power = approx_power(divergence, sigma, dof, phi2_at_one, level, n_star as f64)?;
        }
    }
    Ok(plan)
}

/// Null hypothesis for [`glr_statistic`].
#[derive(Debug, Clone, Copy)]
pub enum Hypothesis<'a> {
    Simple(&'a [f64]),
    Composite(&'a ConstraintSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlrOutcome {
    /// `2 log [sup_Θ L / sup_{Θ₀} L]`.
    pub statistic: f64,
    pub unrestricted: Vec<f64>,
    pub restricted: Vec<f64>,
    pub converged: bool,
}

fn log_likelihood(model: &dyn ParametricModel, theta: &[f64], sample: &Sample, grad: Option<&mut [f64]>) -> f64 {
    let mut ll = 0.0;
    match grad {
        None => {
            for x in sample.iter() {
                ll += model.log_density(theta, x);
            }
        }
        Some(g) => {
            g.fill(0.0);
            let mut s = vec![0.0; theta.len()];
            for x in sample.iter() {
                ll += model.log_density(theta, x);
                model.score(theta, x, &mut s);
                for (gi, si) in g.iter_mut().zip(&s) {
                    *gi += si;
                }
            }
        }
    }
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

/// The generalized likelihood ratio statistic, maximized independently of
/// the divergence machinery.
pub fn glr_statistic(model: &dyn ParametricModel, hypothesis: Hypothesis<'_>, sample: &Sample) -> Result<GlrOutcome> {
    let opts = OptimizeOptions {
        tol: 1e-10,
        max_iter: 500,
    };
    let region = Region::Box(model.param_box().clone());
    let mut obj = GradObjective(|t: &[f64], g: Option<&mut [f64]>| log_likelihood(model, t, sample, g));
    let (restricted, l0, conv0) = match hypothesis {
        Hypothesis::Simple(t0) => {
            if t0.len() != model.dim() {
                return Err(Error::Domain(format!("theta0 has {} coordinates", t0.len())));
            }
            (t0.to_vec(), log_likelihood(model, t0, sample, None), true)
        }
        Hypothesis::Composite(c) => {
            let start = c.beta_near(&model.pilot(sample));
            if c.beta_box().dim() == 0 {
                let t = c.embed(&[]);
                let l = log_likelihood(model, &t, sample, None);
                (t, l, true)
            } else {
                let mut sub = FnObjective(|b: &[f64]| log_likelihood(model, &c.embed(b), sample, None));
                let r = maximize(&mut sub, &Region::Box(c.beta_box().clone()), &start, &opts);
                (c.embed(&r.argopt), r.value, r.converged)
            }
        }
    };
    if !l0.is_finite() {
        return Err(Error::Estimation("null log-likelihood is not finite".into()));
    }
    let mut best: OptimizeReport = maximize(&mut obj, &region, &model.pilot(sample), &opts);
    if best.value <= l0 {
        let alt = maximize(&mut obj, &region, &restricted, &opts);
        if alt.value > best.value {
            best = alt;
        }
    }
    let (unrestricted, l1) = if best.value > l0 {
        (best.argopt.clone(), best.value)
    } else {
        (restricted.clone(), l0)
    };
    Ok(GlrOutcome {
        statistic: 2.0 * (l1 - l0),
        unrestricted,
        restricted,
        converged: best.converged && conv0,
    })
}
