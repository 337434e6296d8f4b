//! Python bindings: simulation, likelihood evaluation, chains and evidence.

use std::collections::{BTreeMap, HashMap};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyAny;

use pmmh_core::config::{LikelihoodKind, RunConfig};
use pmmh_core::dataset::Dataset;
use pmmh_core::diagnostics;
use pmmh_core::evidence::{self, WeightedDraw};
use pmmh_core::models::{LinearGaussianModel, ModelSpec, Preset};
use pmmh_core::oracle::kalman_loglik;
use pmmh_core::params::ParameterVector;
use pmmh_core::parallel::WorkerPool;
use pmmh_core::runner::{execute, run_replicate, simulate_series, Problem};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn preset(name: &str) -> PyResult<ModelSpec> {
    Preset::parse(name).map(ModelSpec::new).ok_or_else(|| err(format!("unknown model preset `{name}`")))
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Simulates `horizon` observations; returns `(y, states)`.
#[pyfunction]
#[pyo3(signature = (model, horizon, seed=0, truth=None))]
fn simulate(
    model: &str,
    horizon: usize,
    seed: u64,
    truth: Option<HashMap<String, f64>>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let truth: BTreeMap<String, f64> = truth.unwrap_or_default().into_iter().collect();
    let sim = simulate_series(&preset(model)?, &truth, horizon, seed, &[]).map_err(err)?;
    Ok((sim.data.y, sim.states))
}

/// Free parameter names of a preset, in sampling order.
#[pyfunction]
fn parameter_names(model: &str) -> PyResult<Vec<String>> {
    let any = pmmh_core::models::AnyModel::build(&preset(model)?, &[], 1).map_err(err)?;
    Ok(any.template().free_names())
}

fn theta_from(template: &ParameterVector, values: &HashMap<String, f64>) -> PyResult<ParameterVector> {
    let mut theta = template.clone();
    for (k, v) in values {
        theta.set(k, *v).map_err(err)?;
    }
    Ok(theta)
}

/// Log-likelihood estimate of `y` at `theta` from `workers` averaged
/// particle filters ("sir" or "apf"), or the exact value for "kalman".
#[pyfunction]
#[pyo3(signature = (model, y, theta, filter="sir", particles=500, seed=0, apf_epsilon=0.05, workers=1))]
#[allow(clippy::too_many_arguments)]
fn log_likelihood(
    model: &str,
    y: Vec<f64>,
    theta: HashMap<String, f64>,
    filter: &str,
    particles: usize,
    seed: u64,
    apf_epsilon: f64,
    workers: usize,
) -> PyResult<f64> {
    let mut cfg = RunConfig::new(preset(model)?);
    cfg.filter.kind = match filter {
        "sir" => LikelihoodKind::Sir,
        "apf" => LikelihoodKind::Apf,
        "kalman" => LikelihoodKind::Kalman,
        other => return Err(err(format!("unknown filter `{other}`"))),
    };
    cfg.filter.particles = particles;
    cfg.filter.apf_epsilon = apf_epsilon;
    let pool = WorkerPool::new(workers, 0).map_err(err)?;
    let problem = Problem::new(&cfg, Dataset::from_y(y), pool).map_err(err)?;
    let theta = theta_from(&problem.template, &theta)?;
    Ok(problem.likelihood.evaluate(&theta, seed, None).map_err(err)?.total)
}

/// Exact log-likelihood of `x_t = a x_{t-1} + N(0, q)`, `y_t = x_t + N(0, r)`.
#[pyfunction]
#[pyo3(signature = (y, a, q, r, m0=0.0, p0=1.0))]
fn kalman_log_likelihood(y: Vec<f64>, a: f64, q: f64, r: f64, m0: f64, p0: f64) -> PyResult<f64> {
    let model = LinearGaussianModel::new(m0, p0);
    let theta = pmmh_core::model::StateSpaceModel::template(&model)
        .with_value("a", a)
        .with_value("q", q)
        .with_value("r", r);
    Ok(kalman_loglik(&model.ssm(&theta).map_err(err)?, &y))
}

#[pyfunction]
fn inefficiency(trace: Vec<f64>) -> f64 {
    diagnostics::inefficiency(&trace).value
}

#[pyfunction]
fn ect(inefficiency: f64, seconds_per_iteration: f64) -> f64 {
    diagnostics::ect(inefficiency, seconds_per_iteration)
}

/// Two-sample KS test; returns `(statistic, p_value)`.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> (f64, f64) {
    let t = diagnostics::ks_two_sample(&a, &b, None);
    (t.statistic, t.p_value)
}

fn draws(log_target: Vec<f64>, log_q: Vec<f64>) -> PyResult<Vec<WeightedDraw>> {
    if log_target.len() != log_q.len() {
        return Err(err("log_target and log_q differ in length"));
    }
    Ok(log_target.into_iter().zip(log_q).map(|(log_target, log_q)| WeightedDraw { log_target, log_q }).collect())
}

/// Bridge-sampling log evidence from posterior and proposal draws, each given
/// as unnormalized log posterior and log proposal density values.
#[pyfunction]
fn bridge_evidence(
    post_log_target: Vec<f64>,
    post_log_q: Vec<f64>,
    prop_log_target: Vec<f64>,
    prop_log_q: Vec<f64>,
    log_u: f64,
) -> PyResult<f64> {
    evidence::bridge_evidence(&draws(post_log_target, post_log_q)?, &draws(prop_log_target, prop_log_q)?, log_u)
        .map_err(err)
}

/// Importance-sampling log evidence from proposal draws.
#[pyfunction]
fn importance_evidence(prop_log_target: Vec<f64>, prop_log_q: Vec<f64>) -> PyResult<f64> {
    evidence::importance_evidence(&draws(prop_log_target, prop_log_q)?).map_err(err)
}

/// One chain produced by [`run`].
#[pyclass(frozen)]
struct Chain {
    #[pyo3(get)]
    names: Vec<String>,
    #[pyo3(get)]
    draws: Vec<Vec<f64>>,
    #[pyo3(get)]
    log_lik: Vec<f64>,
    #[pyo3(get)]
    log_prior: Vec<f64>,
    #[pyo3(get)]
    accepted: Vec<bool>,
    summary_json: String,
}

#[pymethods]
impl Chain {
    /// Diagnostics, evidence and coverage as a dict.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.summary_json)
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name).ok_or_else(|| err(format!("no parameter `{name}`")))?;
        Ok(self.draws.iter().map(|row| row[k]).collect())
    }

    fn __len__(&self) -> usize {
        self.draws.len()
    }

    fn __repr__(&self) -> String {
        format!("Chain({} draws of {:?})", self.draws.len(), self.names)
    }
}

/// Runs one replicate of a TOML config in memory, writing no files.
#[pyfunction]
#[pyo3(signature = (config, overrides=None, replicate=0))]
fn run(py: Python<'_>, config: &str, overrides: Option<Vec<String>>, replicate: usize) -> PyResult<Chain> {
    let cfg = RunConfig::from_toml(config, &overrides.unwrap_or_default()).map_err(err)?;
    let result = py.detach(|| -> Result<_, String> {
        let pool = pmmh_core::runner::pool_for(&cfg).map_err(|e| e.to_string())?;
        let outer = pmmh_core::runner::outer_pool_for(&cfg).map_err(|e| e.to_string())?;
        let problem = Problem::from_config(&cfg, pool).map_err(|e| e.to_string())?;
        run_replicate(&problem, &cfg, replicate, &outer).map_err(|e| e.to_string())
    });
    let result = result.map_err(err)?;
    let summary_json = serde_json::to_string(&result.summary).map_err(err)?;
    let rec = result.record;
    Ok(Chain {
        names: rec.names,
        draws: rec.draws,
        log_lik: rec.log_lik,
        log_prior: rec.log_prior,
        accepted: rec.accepted,
        summary_json,
    })
}

/// Runs every replicate of a config file and writes the usual output
/// directory; returns the replicate summaries.
#[pyfunction]
#[pyo3(signature = (path, overrides=None))]
fn run_file<'py>(py: Python<'py>, path: &str, overrides: Option<Vec<String>>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::load(std::path::Path::new(path), &overrides.unwrap_or_default()).map_err(err)?;
    let out = py.detach(|| execute(&cfg)).map_err(err)?;
    json_to_py(py, &serde_json::to_string(&out.replicates).map_err(err)?)
}

#[pymodule]
fn pmmh_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(parameter_names, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(kalman_log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(inefficiency, m)?)?;
    m.add_function(wrap_pyfunction!(ect, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(bridge_evidence, m)?)?;
    m.add_function(wrap_pyfunction!(importance_evidence, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_file, m)?)?;
    m.add_class::<Chain>()?;
    Ok(())
}
