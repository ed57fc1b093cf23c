use std::sync::Arc;

use super::{check_level, TestReport};
use crate::divergence::Divergence;
use crate::dual::{probe_nodes, DualObjective};
use crate::error::{Error, Result};
use crate::estimate::{ConstraintSpec, EstimateMode, EstimateResult};
use crate::model::{Mixture, ParamBox, ParametricModel, Regime, Sample};
use crate::numerics::{
    chi2_quantile, maximize, minimax_with, GradObjective, MinimaxOptions, Objective, OptimizeOptions, OptimizeReport,
    Region,
};

/// Default interval for each weight of the signed extension.
pub const DEFAULT_SEARCH: (f64, f64) = (-0.5, 1.5);

/// A mixture extended to signed weights, paired with a divergence finite on
/// all of ℝ (χ² by default).
#[derive(Debug)]
pub struct MixtureExtended {
    mixture: Arc<Mixture>,
    dual: DualObjective,
}

impl MixtureExtended {
    /// `weight_search` bounds every weight of `α` (and of `θ`); defaults to
    /// `[−0.5, 1.5]`.
    pub fn new(mixture: &Mixture, weight_search: Option<(f64, f64)>) -> Result<Self> {
        Self::with_divergence(mixture, weight_search, Divergence::chi2())
    }

    pub fn with_divergence(mixture: &Mixture, weight_search: Option<(f64, f64)>, divergence: Divergence) -> Result<Self> {
        let ext = Arc::new(mixture.with_regime(Regime::Signed, Some(weight_search.unwrap_or(DEFAULT_SEARCH)))?);
        let dual = DualObjective::new(ext.clone(), divergence)?;
        Ok(MixtureExtended { mixture: ext, dual })
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    pub fn dual(&self) -> &DualObjective {
        &self.dual
    }

    pub fn dim(&self) -> usize {
        self.mixture.dim()
    }

    pub fn search_box(&self) -> &ParamBox {
        self.mixture.param_box()
    }

    /// For two known components, the open interval of `α` with `p_α > 0` at
    /// the probe nodes and the end points of the truncated support of `P_θ`.
    /// `None` for other mixtures, whose feasibility is probed pointwise.
    pub fn feasible_interval(&self, theta: &[f64]) -> Option<(f64, f64)> {
        let m = &*self.mixture;
        if m.k() != 2 || m.has_free_params() {
            return None;
        }
        let (a, b) = m.truncation(theta)[0];
        let mut nodes = probe_nodes(m, theta);
        nodes.push(a);
        nodes.push(b);
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut c = [0.0; 2];
        for x in nodes {
            m.component_densities(theta, x, &mut c);
            // p_α(x) = c₀ + α(c₁ − c₀).
            let slope = c[1] - c[0];
            if slope > 0.0 {
                lo = lo.max(-c[0] / slope);
            } else if slope < 0.0 {
                hi = hi.min(-c[0] / slope);
            } else if !(c[0] > 0.0) {
                return Some((f64::NAN, f64::NAN));
            }
        }
        Some((lo, hi))
    }

    /// `search_box` cut down to the feasible interval when it is known.
    fn region(&self, theta: &[f64], search_box: Option<&ParamBox>) -> Result<(Region, Option<(f64, f64)>)> {
        let sb = search_box.unwrap_or(self.search_box());
        if sb.dim() != self.dim() {
            return Err(Error::Domain(format!(
                "search box has dimension {}, model has {}",
                sb.dim(),
                self.dim()
            )));
        }
        match self.feasible_interval(theta) {
            Some((lo, hi)) => {
                if !(lo < hi) {
                    return Err(Error::Estimation(format!("empty feasible set at theta = {theta:?}")));
                }
                // Stay a hair inside so that the end nodes remain positive.
                let margin = 1e-9 * (hi - lo).min(1.0);
                let (l, u) = (lo + margin, hi - margin);
                let cut = ParamBox::interval(l.max(sb.lower[0]), u.min(sb.upper[0])).map_err(|_| {
                    Error::Estimation(format!("feasible set misses the search box at theta = {theta:?}"))
                })?;
                Ok((Region::Box(cut), Some((lo, hi))))
            }
            None => Ok((Region::Box(sb.clone()), None)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualChi2 {
    /// `χ̃²(θ) = sup_α {P_θ f(θ,α) − P_n g(θ,α)}`, unscaled.
    pub statistic: f64,
    pub alpha: Vec<f64>,
    /// Feasible interval for two known components.
    pub feasible: Option<(f64, f64)>,
    /// The maximizer sits on the edge of the feasible set.
    pub on_feasible_edge: bool,
    pub report: OptimizeReport,
}

fn solve_alpha(
    ext: &MixtureExtended,
    theta: &[f64],
    sample: &Sample,
    region: &Region,
    start: Option<&[f64]>,
    opts: &OptimizeOptions,
) -> OptimizeReport {
    let dual = ext.dual();
    let mut obj = GradObjective(|a: &[f64], g: Option<&mut [f64]>| dual.empirical_objective_grad(theta, a, sample, g));
    let mut init = start.unwrap_or(theta).to_vec();
    region.project(&mut init);
    if start.is_some() && obj.value(&init) == f64::NEG_INFINITY {
        init = theta.to_vec();
        region.project(&mut init);
    }
    maximize(&mut obj, region, &init, opts)
}

/// The dual χ² estimate at `θ` over `α ∈ search_box ∩ Θ_e^op(θ)`.
pub fn mixture_dual_chi2(
    ext: &MixtureExtended,
    theta: &[f64],
    sample: &Sample,
    search_box: Option<&ParamBox>,
) -> Result<DualChi2> {
    if theta.len() != ext.dim() {
        return Err(Error::Domain(format!("theta has {} coordinates", theta.len())));
    }
    let (region, feasible) = ext.region(theta, search_box)?;
    let report = solve_alpha(ext, theta, sample, &region, None, &OptimizeOptions::default());
    if !report.value.is_finite() {
        return Err(Error::Estimation(format!("no feasible alpha at theta = {theta:?}")));
    }
    let on_feasible_edge = match feasible {
        Some((lo, hi)) => {
            let a = report.argopt[0];
            let tol = 1e-6 * (hi - lo).min(1.0);
            a - lo < tol || hi - a < tol
        }
        None => false,
    };
    Ok(DualChi2 {
        statistic: report.value,
        alpha: report.argopt.clone(),
        feasible,
        on_feasible_edge,
        report,
    })
}

fn annex(alpha: Vec<f64>, value: f64, report: OptimizeReport, beta: Option<Vec<f64>>) -> EstimateResult {
    EstimateResult {
        estimate: alpha,
        objective_value: value,
        covariance: None,
        singular_information: false,
        companion: None,
        beta,
        report,
        mode: EstimateMode::Global,
    }
}

fn scale(ext: &MixtureExtended, n: usize) -> f64 {
    2.0 * n as f64 / ext.dual().divergence().phi2_at_one()
}

/// `θ`-pinned test: rejects when `2n χ̃²(θ) > q_{d,ε}` with
/// `d = k − 1 + d₁ + ⋯ + d_k`.
pub fn mixture_theta_test(ext: &MixtureExtended, theta: &[f64], sample: &Sample, level: f64) -> Result<TestReport> {
    check_level(level)?;
    let r = mixture_dual_chi2(ext, theta, sample, None)?;
    let stat = scale(ext, sample.len()) * r.statistic;
    TestReport::assemble(stat, ext.dim(), level, annex(r.alpha, r.statistic, r.report, None))
}

/// `H₀: w_{k₀+1} = ⋯ = w_k = 0` rejected when
/// `2n inf_{Θ₀} χ̃² > q_{k−k₀,ε}`.
pub fn mixture_component_test(ext: &MixtureExtended, k0: usize, sample: &Sample, level: f64) -> Result<TestReport> {
    check_level(level)?;
    let k = ext.mixture().k();
    if k0 < 1 || k0 >= k {
        return Err(Error::InvalidConfig(format!("k0 must lie in [1, {}], got {k0}", k - 1)));
    }
    let fixed: Vec<(usize, f64)> = (k0 - 1..k - 1).map(|i| (i, 0.0)).collect();
    let c = ConstraintSpec::fix_coordinates(ext.search_box(), &fixed)?;
    let dof = k - k0;
    if c.beta_box().dim() == 0 {
        let theta = c.embed(&[]);
        let r = mixture_dual_chi2(ext, &theta, sample, None)?;
        let stat = scale(ext, sample.len()) * r.statistic;
        return TestReport::assemble(stat, dof, level, annex(r.alpha, r.statistic, r.report, Some(Vec::new())));
    }
    let pilot = ext.mixture().pilot(sample);
    let beta0 = c.beta_near(&pilot);
    let alpha0 = c.embed(&beta0);
    let mm = minimax_with(
        |beta, start, o| {
            let theta = c.embed(beta);
            match ext.region(&theta, None) {
                Ok((region, _)) => solve_alpha(ext, &theta, sample, &region, Some(start), o),
                Err(_) => OptimizeReport {
                    argopt: start.to_vec(),
                    value: f64::INFINITY,
                    gradient_norm: f64::INFINITY,
                    iterations: 0,
                    converged: false,
                    boundary_active: vec![false; start.len()],
                },
            }
        },
        &Region::Box(c.beta_box().clone()),
        &beta0,
        &alpha0,
        &MinimaxOptions::default(),
    );
    if !mm.value.is_finite() {
        return Err(Error::Estimation("dual chi-square is infeasible on the null set".into()));
    }
    let mut report = mm.outer.clone();
    report.converged = mm.converged;
    let stat = scale(ext, sample.len()) * mm.value;
    TestReport::assemble(stat, dof, level, annex(mm.alpha, mm.value, report, Some(mm.theta)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRegion {
    /// Grid points whose pinned statistic is at most the critical value,
    /// in lexicographic order.
    pub members: Vec<Vec<f64>>,
    /// `2n χ̃²(θ)` per grid point, in grid order; `+∞` where infeasible.
    pub statistics: Vec<f64>,
    pub critical_value: f64,
    pub dof: usize,
    /// Coordinatewise `(min, max)` over the members.
    pub hull: Option<(Vec<f64>, Vec<f64>)>,
}

impl ConfidenceRegion {
    pub fn contains(&self, theta: &[f64]) -> bool {
        self.members.iter().any(|m| m == theta)
    }
}

/// `{θ in grid : 2n χ̃²(θ) ≤ q_{d,ε}}`.
pub fn confidence_region(
    ext: &MixtureExtended,
    sample: &Sample,
    level: f64,
    grid: &[Vec<f64>],
) -> Result<ConfidenceRegion> {
    check_level(level)?;
    let dof = ext.dim();
    let critical_value = chi2_quantile(dof as f64, 1.0 - level)?;
    let mut statistics = Vec::with_capacity(grid.len());
    let mut members = Vec::new();
    for theta in grid {
        let s = match mixture_theta_test(ext, theta, sample, level) {
            Ok(t) => t.statistic,
            Err(Error::Domain(m)) | Err(Error::InvalidConfig(m)) => return Err(Error::InvalidConfig(m)),
            Err(_) => f64::INFINITY,
        };
        if s <= critical_value {
            members.push(theta.clone());
        }
        statistics.push(s);
    }
    members.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    let hull = members.first().map(|first| {
        let mut lo = first.clone();
        let mut hi = first.clone();
        for m in &members {
            for i in 0..m.len() {
                lo[i] = lo[i].min(m[i]);
                hi[i] = hi[i].max(m[i]);
            }
        }
        (lo, hi)
    });
    Ok(ConfidenceRegion {
        members,
        statistics,
        critical_value,
        dof,
        hull,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Component;

    fn ext() -> MixtureExtended {
        let m = Mixture::two_known(Component::normal(0.0, 1.0), Component::normal(0.5, 1.0), Regime::Probability, None)
            .unwrap();
        MixtureExtended::new(&m, None).unwrap()
    }

    #[test]
    fn feasible_interval_brackets_zero() {
        let e = ext();
        let (lo, hi) = e.feasible_interval(&[0.0]).unwrap();
        // p₁/p₀ = exp(x/2 − 1/8) at the ends ±z of the truncated support.
        let z = -crate::numerics::normal_quantile(1e-10).unwrap();
        let expect_lo = -1.0 / ((0.5 * z - 0.125).exp() - 1.0);
        let expect_hi = 1.0 / (1.0 - (-0.5 * z - 0.125).exp());
        assert!((lo - expect_lo).abs() < 1e-6 * expect_lo.abs(), "{lo} vs {expect_lo}");
        assert!((hi - expect_hi).abs() < 1e-6, "{hi} vs {expect_hi}");
        assert!(lo < 0.0 && hi > 1.0);
    }

    #[test]
    fn statistic_is_nonnegative_and_matches_the_test() {
        let e = ext();
        let data = Mixture::two_known(Component::normal(0.0, 1.0), Component::normal(0.5, 1.0), Regime::Probability, None)
            .unwrap();
        for seed in 0..5 {
            let s = data.sample(&[0.0], 300, seed).unwrap();
            let r = mixture_dual_chi2(&e, &[0.0], &s, None).unwrap();
            assert!(r.statistic >= 0.0);
            let t = mixture_component_test(&e, 1, &s, 0.05).unwrap();
            assert_eq!(t.dof, 1);
            assert!((t.statistic - 600.0 * r.statistic).abs() < 1e-9);
            let cr = confidence_region(&e, &s, 0.05, &[vec![0.0]]).unwrap();
            assert_eq!(cr.contains(&[0.0]), !t.reject);
        }
    }

    #[test]
    fn region_contains_the_grid_argmin() {
        let e = ext();
        let data = e.mixture().with_regime(Regime::Probability, None).unwrap();
        let s = data.sample(&[0.5], 400, 3).unwrap();
        let grid: Vec<Vec<f64>> = (0..=20).map(|i| vec![i as f64 / 20.0]).collect();
        let cr = confidence_region(&e, &s, 0.05, &grid).unwrap();
        let (imin, _) = cr
            .statistics
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (i, v)| if *v < b.1 { (i, *v) } else { b });
        assert!(cr.contains(&grid[imin]));
        let (lo, hi) = cr.hull.unwrap();
        assert!(lo[0] <= grid[imin][0] && grid[imin][0] <= hi[0]);
    }

    #[test]
    fn rejects_bad_component_counts() {
        let e = ext();
        let s = Sample::scalar(vec![0.1, 0.2]).unwrap();
        assert!(mixture_component_test(&e, 0, &s, 0.05).is_err());
        assert!(mixture_component_test(&e, 2, &s, 0.05).is_err());
    }
}
