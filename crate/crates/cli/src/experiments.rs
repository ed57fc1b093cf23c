//! One function per subcommand. Each returns its tables plus the lines to
//! print; nothing touches the file system except reading `data`.

use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use phidiv::divergence::Divergence;
use phidiv::dual::DualObjective;
use phidiv::estimate::{
    beta_star, dual_estimate, min_dual_estimate, sigma2_composite, sigma2_simple, ConstraintSpec, EstimateMode,
    EstimateOptions, VarianceSource,
};
use phidiv::infer::{
    approx_power, composite_test, confidence_region, glr_statistic, mixture_component_test, mixture_dual_chi2,
    mixture_theta_test, power_plan, simple_test, Hypothesis, MixtureExtended, PlanTarget, TestReport,
};
use phidiv::model::{Mixture, ParametricModel, Sample};
use phidiv::numerics::{Ecdf, Reference, ReferenceCdf};
use phidiv::simulate::{frequency, replicate};

use crate::config::{Estimator, ExperimentConfig};
use crate::output::{num, opt_num, Table};
use crate::Command;

pub struct Outcome {
    pub tables: Vec<Table>,
    pub lines: Vec<String>,
}

pub fn run(command: Command, c: &ExperimentConfig) -> Result<Outcome> {
    match command {
        Command::Estimate => estimate(c),
        Command::TestSimple => test_simple(c),
        Command::TestComposite => test_composite(c),
        Command::PowerPlan => plan(c),
        Command::PowerCurve => power_curve(c),
        Command::GlrEcdf => glr_ecdf(c),
        Command::DualChi2Ecdf => dual_chi2_ecdf(c),
        Command::ConfReg => confreg(c),
        Command::MixtureTest => mixture_test(c),
        Command::PlotScript => unreachable!("handled by the plot module"),
    }
}

fn model(c: &ExperimentConfig) -> Result<Arc<dyn ParametricModel>> {
    Ok(c.model.as_ref().expect("resolved").build()?)
}

fn mixture(c: &ExperimentConfig) -> Result<Mixture> {
    Ok(c.model.as_ref().expect("resolved").build_mixture()?)
}

fn divergence(c: &ExperimentConfig) -> Divergence {
    c.divergence.as_ref().expect("resolved").build()
}

fn dual(c: &ExperimentConfig) -> Result<DualObjective> {
    Ok(DualObjective::new(model(c)?, divergence(c))?)
}

fn extended(c: &ExperimentConfig) -> Result<MixtureExtended> {
    let search = c.weight_search.map(|[l, u]| (l, u));
    Ok(MixtureExtended::with_divergence(&mixture(c)?, search, divergence(c))?)
}

fn level(c: &ExperimentConfig) -> f64 {
    c.level.expect("resolved")
}

fn seed(c: &ExperimentConfig) -> u64 {
    c.seed.expect("resolved")
}

fn reps(c: &ExperimentConfig) -> usize {
    c.reps.expect("resolved")
}

fn theta_t(c: &ExperimentConfig) -> Result<&[f64]> {
    c.theta_t.as_deref().ok_or_else(|| anyhow!("theta_t is required"))
}

fn read_data(path: &Path, dim: usize) -> Result<Sample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) if row.len() == dim => values.extend(row),
            Ok(row) => bail!("{}: line {} has {} fields, expected {dim}", path.display(), i + 1, row.len()),
            Err(_) if i == 0 => continue,
            Err(e) => bail!("{}: line {}: {e}", path.display(), i + 1),
        }
    }
    Ok(Sample::new(dim, values)?)
}

/// The observed data file, or a sample drawn at `theta_t` with `seed`.
fn data(c: &ExperimentConfig, model: &dyn ParametricModel) -> Result<Sample> {
    match &c.data {
        Some(path) => read_data(path, model.obs_dim()),
        None => Ok(model.sample(theta_t(c)?, c.n.expect("resolved"), seed(c))?),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("[{}]", parts.join(", "))
}

const TEST_HEADER: [&str; 8] = ["statistic", "dof", "critical_value", "p_value", "reject", "level", "converged", "n"];

fn test_table(r: &TestReport, n: usize) -> Result<Table> {
    let mut t = Table::new("test.csv", "test/v1", &TEST_HEADER)?;
    t.row([
        num(r.statistic),
        r.dof.to_string(),
        num(r.critical_value),
        num(r.p_value),
        r.reject.to_string(),
        num(r.level),
        r.converged.to_string(),
        n.to_string(),
    ])?;
    Ok(t)
}

fn test_lines(r: &TestReport) -> Vec<String> {
    vec![
        format!("statistic = {}", num(r.statistic)),
        format!("critical_value = {} (dof {}, level {})", num(r.critical_value), r.dof, num(r.level)),
        format!("p_value = {}", num(r.p_value)),
        format!("reject = {}", r.reject),
        format!("converged = {}", r.converged),
    ]
}

fn estimate(c: &ExperimentConfig) -> Result<Outcome> {
    let dual = dual(c)?;
    let sample = data(c, &**dual.model())?;
    let opts = EstimateOptions::default();
    let r = match c.estimator.expect("resolved") {
        Estimator::MinDual => min_dual_estimate(&dual, &sample, None, &EstimateMode::Global, &opts)?,
        Estimator::Dual => {
            let t0 = c.theta0.as_deref().expect("validated");
            dual_estimate(&dual, t0, &sample, None, &EstimateMode::Global, &opts)?
        }
    };
    let n = sample.len() as f64;
    let mut t = Table::new(
        "estimate.csv",
        "estimate/v1",
        &["coordinate", "estimate", "std_error", "companion", "divergence", "converged"],
    )?;
    for (i, v) in r.estimate.iter().enumerate() {
        let se = r.covariance.as_ref().map(|m| (m[(i, i)] / n).sqrt());
        let comp = r.companion.as_ref().map(|a| a[i]);
        t.row([
            i.to_string(),
            num(*v),
            opt_num(se),
            opt_num(comp),
            num(r.objective_value),
            r.converged().to_string(),
        ])?;
    }
    let mut lines = vec![format!("theta_hat = {}", fmt_vec(&r.estimate))];
    if let Some(a) = &r.companion {
        lines.push(format!("alpha_hat = {}", fmt_vec(a)));
    }
    lines.push(format!("divergence_estimate = {}", num(r.objective_value)));
    if r.singular_information {
        lines.push("warning: information matrix is singular, no standard errors".into());
    }
    lines.push(format!("converged = {}", r.converged()));
    Ok(Outcome { tables: vec![t], lines })
}

fn test_simple(c: &ExperimentConfig) -> Result<Outcome> {
    let dual = dual(c)?;
    let sample = data(c, &**dual.model())?;
    let r = simple_test(&dual, c.theta0.as_deref().expect("resolved"), &sample, level(c))?;
    Ok(Outcome {
        tables: vec![test_table(&r, sample.len())?],
        lines: test_lines(&r),
    })
}

fn constraint(c: &ExperimentConfig, model: &dyn ParametricModel) -> Result<ConstraintSpec> {
    Ok(ConstraintSpec::fix_coordinates(model.param_box(), c.fix.as_deref().expect("resolved"))?)
}

fn test_composite(c: &ExperimentConfig) -> Result<Outcome> {
    let dual = dual(c)?;
    let spec = constraint(c, &**dual.model())?;
    let sample = data(c, &**dual.model())?;
    let r = composite_test(&dual, &spec, &sample, level(c))?;
    let mut lines = test_lines(&r);
    lines.push(format!("restricted_estimate = {}", fmt_vec(&r.estimate.estimate)));
    Ok(Outcome {
        tables: vec![test_table(&r, sample.len())?],
        lines,
    })
}

fn plan(c: &ExperimentConfig) -> Result<Outcome> {
    let dual = dual(c)?;
    let tt = theta_t(c)?;
    let (d, sigma, dof) = match &c.fix {
        Some(_) => {
            let spec = constraint(c, &**dual.model())?;
            let (b, d) = beta_star(&dual, &spec, tt)?;
            let s2 = sigma2_composite(&dual, &spec, &b, VarianceSource::Population(tt))?;
            (d, s2.sqrt(), spec.codim())
        }
        None => {
            let t0 = c.theta0.as_deref().expect("resolved");
            let d = dual.divergence_quadrature(t0, tt)?;
            let s2 = sigma2_simple(&dual, t0, VarianceSource::Population(tt))?;
            (d, s2.sqrt(), dual.dim())
        }
    };
    let target = match (c.power, c.n) {
        (Some(p), _) => PlanTarget::Power(p),
        (None, Some(n)) => PlanTarget::SampleSize(n as f64),
        (None, None) => unreachable!("resolution sets one of them"),
    };
    let p = power_plan(d, sigma, dof, dual.divergence().phi2_at_one(), level(c), target)?;
    let mut t = Table::new(
        "plan.csv",
        "plan/v1",
        &["divergence", "sigma", "dof", "level", "target_power", "n", "approx_power", "n0", "n_star"],
    )?;
    t.row([
        num(p.divergence),
        num(p.sigma),
        p.dof.to_string(),
        num(p.level),
        opt_num(p.target_power),
        num(p.n),
        num(p.approx_power),
        opt_num(p.n0),
        p.n_star.map(|v| v.to_string()).unwrap_or_default(),
    ])?;
    let mut lines = vec![
        format!("divergence = {}", num(p.divergence)),
        format!("sigma = {}", num(p.sigma)),
    ];
    if let (Some(n0), Some(ns)) = (p.n0, p.n_star) {
        lines.push(format!("n0 = {}", num(n0)));
        lines.push(format!("n_star = {ns}"));
    }
    lines.push(format!("approx_power = {} at n = {}", num(p.approx_power), num(p.n)));
    Ok(Outcome { tables: vec![t], lines })
}

fn power_curve(c: &ExperimentConfig) -> Result<Outcome> {
    let dual = dual(c)?;
    let model = dual.model().clone();
    if model.dim() != 1 {
        bail!("power-curve needs a one-parameter model, {} has {}", model.name(), model.dim());
    }
    let t0 = c.theta0.clone().expect("resolved");
    let grid = c.grid.expect("resolved").points()?;
    for g in &grid {
        if !model.param_box().contains(&[*g]) {
            bail!("grid point {g} lies outside the parameter box");
        }
    }
    let lvl = level(c);
    let phi2 = dual.divergence().phi2_at_one();
    let mut tables = Vec::new();
    let mut lines = Vec::new();
    for &n in c.sample_sizes.as_ref().expect("resolved") {
        let mut t = Table::new(format!("power_curve_n{n}.csv"), "power_curve/v1", &["theta_t", "empirical", "approx"])?;
        for &tt in &grid {
            let rejects = replicate(reps(c), seed(c), |_, s| -> Result<bool> {
                let sample = model.sample(&[tt], n, s)?;
                Ok(simple_test(&dual, &t0, &sample, lvl)?.reject)
            });
            let rejects: Vec<bool> = rejects.into_iter().collect::<Result<_>>()?;
            // The normal approximation is degenerate at the null itself.
            let approx = if tt == t0[0] {
                f64::NAN
            } else {
                let d = dual.divergence_quadrature(&t0, &[tt])?;
                let s2 = sigma2_simple(&dual, &t0, VarianceSource::Population(&[tt]))?;
                approx_power(d, s2.sqrt(), 1, phi2, lvl, n as f64)?
            };
            let empirical = frequency(&rejects);
            if tt == t0[0] {
                lines.push(format!("n = {n}: rejection rate at the null {}", num(empirical)));
            }
            t.row([num(tt), num(empirical), num(approx)])?;
        }
        tables.push(t);
    }
    Ok(Outcome { tables, lines })
}

/// Writes sorted statistics with the ECDF and the reference CDF, then a
/// final `KS` row holding the Kolmogorov-Smirnov distance.
fn ecdf_table(file: String, schema: &'static str, stats: &[f64], reference: &dyn ReferenceCdf) -> Result<(Table, f64)> {
    let e = Ecdf::new(stats);
    let ks = e.ks_distance(reference);
    let mut t = Table::new(file, schema, &["statistic", "ecdf", "limit_cdf"])?;
    let m = e.len() as f64;
    for (i, v) in e.sorted().iter().enumerate() {
        t.row([num(*v), num((i + 1) as f64 / m), num(reference.cdf(*v))])?;
    }
    t.row(["KS".to_string(), num(ks), String::new()])?;
    Ok((t, ks))
}

/// `½δ₀ + ½χ²₁` when a one-dimensional null sits on the edge of the box,
/// `χ²_d` otherwise.
fn glr_reference(model: &dyn ParametricModel, theta0: &[f64]) -> Reference {
    let b = model.param_box();
    if model.dim() == 1 && (theta0[0] == b.lower[0] || theta0[0] == b.upper[0]) {
        Reference::HalfChiSquared1
    } else {
        Reference::ChiSquared(model.dim() as f64)
    }
}

fn glr_ecdf(c: &ExperimentConfig) -> Result<Outcome> {
    let model = model(c)?;
    let t0 = c.theta0.clone().expect("resolved");
    let tt = theta_t(c)?.to_vec();
    let reference = glr_reference(&*model, &t0);
    let mut summary = Table::new("glr_ecdf_summary.csv", "glr_ecdf_summary/v1", &["n", "reps", "ks", "mass_at_zero"])?;
    let mut tables = Vec::new();
    let mut lines = Vec::new();
    for &n in c.sample_sizes.as_ref().expect("resolved") {
        let stats = replicate(reps(c), seed(c), |_, s| -> Result<f64> {
            let sample = model.sample(&tt, n, s)?;
            Ok(glr_statistic(&*model, Hypothesis::Simple(&t0), &sample)?.statistic)
        });
        let stats: Vec<f64> = stats.into_iter().collect::<Result<_>>()?;
        let zero = stats.iter().filter(|v| **v == 0.0).count() as f64 / stats.len() as f64;
        let (t, ks) = ecdf_table(format!("glr_ecdf_n{n}.csv"), "ecdf/v1", &stats, &reference)?;
        summary.row([n.to_string(), stats.len().to_string(), num(ks), num(zero)])?;
        lines.push(format!("n = {n}: KS {} to {reference:?}, mass at zero {}", num(ks), num(zero)));
        tables.push(t);
    }
    tables.push(summary);
    Ok(Outcome { tables, lines })
}

fn dual_chi2_ecdf(c: &ExperimentConfig) -> Result<Outcome> {
    let ext = extended(c)?;
    let data_model = mixture(c)?;
    let t0 = c.theta0.clone().expect("resolved");
    let tt = theta_t(c)?.to_vec();
    let reference = Reference::ChiSquared(ext.dim() as f64);
    let phi2 = ext.dual().divergence().phi2_at_one();
    let mut summary = Table::new(
        "dualchi2_ecdf_summary.csv",
        "dualchi2_ecdf_summary/v1",
        &["n", "reps", "ks", "feasible_edge_fraction"],
    )?;
    let mut tables = Vec::new();
    let mut lines = Vec::new();
    for &n in c.sample_sizes.as_ref().expect("resolved") {
        let runs = replicate(reps(c), seed(c), |_, s| -> Result<(f64, bool)> {
            let sample = data_model.sample(&tt, n, s)?;
            let r = mixture_dual_chi2(&ext, &t0, &sample, None)?;
            Ok((2.0 * n as f64 / phi2 * r.statistic, r.on_feasible_edge))
        });
        let runs: Vec<(f64, bool)> = runs.into_iter().collect::<Result<_>>()?;
        let stats: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let edge = frequency(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
        let (t, ks) = ecdf_table(format!("dualchi2_ecdf_n{n}.csv"), "ecdf/v1", &stats, &reference)?;
        summary.row([n.to_string(), stats.len().to_string(), num(ks), num(edge)])?;
        lines.push(format!("n = {n}: KS {} to {reference:?}, maximizer on feasible edge {}", num(ks), num(edge)));
        tables.push(t);
    }
    tables.push(summary);
    Ok(Outcome { tables, lines })
}

fn cartesian(axis: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    out
}

fn confreg(c: &ExperimentConfig) -> Result<Outcome> {
    let ext = extended(c)?;
    let sample = data(c, &mixture(c)?)?;
    let d = ext.dim();
    let grid = cartesian(&c.grid.expect("resolved").points()?, d);
    let region = confidence_region(&ext, &sample, level(c), &grid)?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("theta_{i}")).collect();
    header.push("statistic".into());
    header.push("member".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new("confreg.csv", "confreg/v1", &header)?;
    for (theta, s) in grid.iter().zip(&region.statistics) {
        let mut row: Vec<String> = theta.iter().map(|v| num(*v)).collect();
        row.push(num(*s));
        row.push((*s <= region.critical_value).to_string());
        t.row(row)?;
    }
    let mut lines = vec![
        format!("critical_value = {} (dof {})", num(region.critical_value), region.dof),
        format!("members = {} of {} grid points", region.members.len(), grid.len()),
    ];
    match &region.hull {
        Some((lo, hi)) => lines.push(format!("hull = {} to {}", fmt_vec(lo), fmt_vec(hi))),
        None => lines.push("region is empty on this grid".into()),
    }
    Ok(Outcome { tables: vec![t], lines })
}

fn mixture_test(c: &ExperimentConfig) -> Result<Outcome> {
    let ext = extended(c)?;
    let sample = data(c, &mixture(c)?)?;
    let r = match (c.null_components, &c.theta0) {
        (Some(k0), _) => mixture_component_test(&ext, k0, &sample, level(c))?,
        (None, Some(t0)) => mixture_theta_test(&ext, t0, &sample, level(c))?,
        (None, None) => unreachable!("resolution sets one of them"),
    };
    let mut lines = test_lines(&r);
    if let Some(b) = r.estimate.beta.as_ref().filter(|b| !b.is_empty()) {
        lines.push(format!("null_weights = {}", fmt_vec(b)));
    }
    Ok(Outcome {
        tables: vec![test_table(&r, sample.len())?],
        lines,
    })
}
