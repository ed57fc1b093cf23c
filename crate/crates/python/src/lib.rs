//! Python bindings. Models are given as the body of a TOML table, for
//! example `'name = "exponential"'` or
//! `'name = "two_mixture"\np0 = { family = "normal", mean = 0.0, sd = 1.0 }\n...'`.

use std::sync::Arc;

use phidiv::divergence::Divergence;
use phidiv::dual::DualObjective;
use phidiv::estimate::{min_dual_estimate, EstimateMode, EstimateOptions};
use phidiv::infer::{self, MixtureExtended, PlanTarget, TestReport};
use phidiv::model::{ModelConfig, ParametricModel, Sample};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn model_config(model: &str) -> PyResult<ModelConfig> {
    toml::from_str(model).map_err(err)
}

fn build(model: &str) -> PyResult<Arc<dyn ParametricModel>> {
    model_config(model)?.build().map_err(err)
}

fn sample_of(model: &dyn ParametricModel, data: Vec<f64>) -> PyResult<Sample> {
    Sample::new(model.obs_dim(), data).map_err(err)
}

fn report<'py>(py: Python<'py>, r: &TestReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("statistic", r.statistic)?;
    d.set_item("dof", r.dof)?;
    d.set_item("critical_value", r.critical_value)?;
    d.set_item("p_value", r.p_value)?;
    d.set_item("reject", r.reject)?;
    d.set_item("converged", r.converged)?;
    Ok(d)
}

/// `φ_γ(x)` of the power family.
#[pyfunction]
fn power_phi(gamma: f64, x: f64) -> f64 {
    Divergence::power(gamma).phi(x)
}

/// `n` draws at `theta` as a flat list.
#[pyfunction]
fn sample(model: &str, theta: Vec<f64>, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let m = build(model)?;
    Ok(m.sample(&theta, n, seed).map_err(err)?.values().to_vec())
}

/// Minimum dual estimate with the power divergence `gamma`.
#[pyfunction]
#[pyo3(signature = (model, data, gamma = 0.0))]
fn estimate<'py>(py: Python<'py>, model: &str, data: Vec<f64>, gamma: f64) -> PyResult<Bound<'py, PyDict>> {
    let m = build(model)?;
    let s = sample_of(&*m, data)?;
    let dual = DualObjective::new(m, Divergence::power(gamma)).map_err(err)?;
    let r = min_dual_estimate(&dual, &s, None, &EstimateMode::Global, &EstimateOptions::default()).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("estimate", r.estimate.clone())?;
    d.set_item("divergence", r.objective_value)?;
    d.set_item("converged", r.converged())?;
    if let Some(c) = &r.covariance {
        let rows: Vec<Vec<f64>> = c.row_iter().map(|row| row.iter().copied().collect()).collect();
        d.set_item("covariance", rows)?;
    }
    Ok(d)
}

/// Divergence test of `H0: theta = theta0`.
#[pyfunction]
#[pyo3(signature = (model, data, theta0, gamma = 0.0, level = 0.05))]
fn simple_test<'py>(
    py: Python<'py>,
    model: &str,
    data: Vec<f64>,
    theta0: Vec<f64>,
    gamma: f64,
    level: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let m = build(model)?;
    let s = sample_of(&*m, data)?;
    let dual = DualObjective::new(m, Divergence::power(gamma)).map_err(err)?;
    report(py, &infer::simple_test(&dual, &theta0, &s, level).map_err(err)?)
}

/// Signed-weight dual chi-square test of `H0: theta = theta0` for a mixture.
#[pyfunction]
#[pyo3(signature = (model, data, theta0, level = 0.05))]
fn mixture_test<'py>(
    py: Python<'py>,
    model: &str,
    data: Vec<f64>,
    theta0: Vec<f64>,
    level: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let mix = model_config(model)?.build_mixture().map_err(err)?;
    let s = sample_of(&mix, data)?;
    let ext = MixtureExtended::new(&mix, None).map_err(err)?;
    report(py, &infer::mixture_theta_test(&ext, &theta0, &s, level).map_err(err)?)
}

/// Approximate power at `n`, or the sample size reaching `power`.
#[pyfunction]
#[pyo3(signature = (divergence, sigma, dof = 1, phi2_at_one = 1.0, level = 0.05, power = None, n = None))]
#[allow(clippy::too_many_arguments)]
fn power_plan<'py>(
    py: Python<'py>,
    divergence: f64,
    sigma: f64,
    dof: usize,
    phi2_at_one: f64,
    level: f64,
    power: Option<f64>,
    n: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let target = match (power, n) {
        (Some(p), None) => PlanTarget::Power(p),
        (None, Some(n)) => PlanTarget::SampleSize(n),
        _ => return Err(PyValueError::new_err("give exactly one of power and n")),
    };
    let p = infer::power_plan(divergence, sigma, dof, phi2_at_one, level, target).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("approx_power", p.approx_power)?;
    d.set_item("n", p.n)?;
    d.set_item("n0", p.n0)?;
    d.set_item("n_star", p.n_star)?;
    Ok(d)
}

#[pymodule]
fn phidiv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(power_phi, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(simple_test, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_test, m)?)?;
    m.add_function(wrap_pyfunction!(power_plan, m)?)?;
    Ok(())
}
