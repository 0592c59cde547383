//! Python bindings: run an experiment from a JSON config and get back the
//! CSV body, the summary document and the verdict.

use hubbard_cone::cli::{self, Experiment};
use hubbard_cone::lightcone::report::Report;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn resolve(config_json: &str, overrides: Vec<String>, experiment: Option<&str>) -> PyResult<cli::RunConfig> {
    let doc: serde_json::Value = serde_json::from_str(config_json).map_err(py_err)?;
    let experiment = experiment
        .map(|name| serde_json::from_value::<Experiment>(serde_json::Value::String(name.into())))
        .transpose()
        .map_err(|_| py_err(format!("unknown experiment {:?}", experiment.unwrap_or_default())))?;
    cli::parse_document(doc, &overrides, experiment).map_err(py_err)
}

/// Run an experiment. Returns a dict with `experiment`, `passed`, `hash`,
/// `csv`, `summary` (JSON text) and `companion_csv` (or None).
#[pyfunction]
#[pyo3(signature = (config_json, overrides = Vec::new(), experiment = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config_json: &str,
    overrides: Vec<String>,
    experiment: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = resolve(config_json, overrides, experiment)?;
    let report = py.detach(|| cli::execute(&cfg)).map_err(py_err)?;
    let hash = cfg.hash();
    let companion = match &report {
        Report::Sweep(r) => r.companion.as_ref().map(|c| c.to_csv()),
        Report::Audit(_) => None,
    };
    let out = PyDict::new(py);
    out.set_item("experiment", report.experiment())?;
    out.set_item("passed", report.passed())?;
    out.set_item("hash", &hash)?;
    out.set_item("csv", report.to_csv())?;
    out.set_item("summary", cli::summary_json(&cfg, &report, &hash).to_string())?;
    out.set_item("companion_csv", companion)?;
    Ok(out)
}

/// Hash identifying a resolved configuration (used in report file names).
#[pyfunction]
#[pyo3(signature = (config_json, overrides = Vec::new()))]
fn config_hash(config_json: &str, overrides: Vec<String>) -> PyResult<String> {
    Ok(resolve(config_json, overrides, None)?.hash())
}

/// Number of Fock states with `particles` bosons on `sites` sites.
#[pyfunction]
fn sector_dimension(sites: usize, particles: usize) -> u64 {
    hubbard_cone::fock::sector_dimension(sites, particles)
}

#[pymodule]
fn hubbard_cone_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(sector_dimension, m)?)?;
    Ok(())
}
