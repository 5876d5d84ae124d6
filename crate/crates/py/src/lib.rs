//! Python bindings. Models, families and configs cross the boundary as JSON
//! strings; samples as lists of rows.

use expfam_core::curvature::grid_gamma as core_grid_gamma;
use expfam_core::experiment::{build_report, read_rows, run_sweep, write_rows, ExperimentConfig, VERSION};
use expfam_core::family::{Family, Model};
use expfam_core::qp::SolverOptions;
use expfam_core::recovery::{algorithm1, recover_family_structure, RecoveryOptions};
use expfam_core::sampler::{draw_samples_seeded, GibbsConfig, SampleBatch};
use expfam_core::score::assemble_quadratic;
use expfam_core::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::Json(_)
        | Error::Parse(_)
        | Error::InvalidModel(_)
        | Error::InvalidFamily(_)
        | Error::InvalidFactor(_)
        | Error::Dimension { .. }
        | Error::UnknownVariable { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| to_py(e.into()))
}

fn batch(rows: Vec<Vec<f64>>) -> PyResult<SampleBatch> {
    SampleBatch::from_rows(&rows).map_err(to_py)
}

/// A model if the document has `theta`, otherwise its family alone.
fn family_of(doc: &str) -> PyResult<(Family, Option<Model>)> {
    match Model::from_json(doc) {
        Ok(m) => Ok((m.family().clone(), Some(m))),
        Err(_) => Ok((Family::from_json(doc).map_err(to_py)?, None)),
    }
}

#[pyfunction]
fn version() -> &'static str {
    VERSION
}

/// Gibbs samples from a model document, as a list of rows.
#[pyfunction]
#[pyo3(signature = (model_json, m, seed, burn_in = 1000, thinning = 1, grid_points = 1024))]
fn sample(model_json: &str, m: usize, seed: u64, burn_in: usize, thinning: usize, grid_points: usize) -> PyResult<Vec<Vec<f64>>> {
    let model = Model::from_json(model_json).map_err(to_py)?;
    let cfg = GibbsConfig {
        burn_in,
        thinning,
        grid_points,
        truncation: None,
    };
    let b = draw_samples_seeded(&model, m, cfg, seed).map_err(to_py)?;
    Ok(b.rows().map(<[f64]>::to_vec).collect())
}

/// `(H, b, c0)` of the local score-matching quadratic at vertex `i`.
#[pyfunction]
fn local_quadratic(family_json: &str, i: usize, rows: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let (family, _) = family_of(family_json)?;
    let q = assemble_quadratic(&family, i, &batch(rows)?).map_err(to_py)?;
    let h = q.hessian();
    let hm = (0..h.nrows()).map(|r| h.row(r).iter().copied().collect()).collect();
    Ok((hm, q.linear().iter().copied().collect(), q.constant()))
}

/// Per-vertex constrained estimates as JSON.
#[pyfunction]
#[pyo3(signature = (model_json, rows, bound = None, tol = None))]
fn fit(model_json: &str, rows: Vec<Vec<f64>>, bound: Option<f64>, tol: Option<f64>) -> PyResult<String> {
    let (family, model) = family_of(model_json)?;
    let bound = bound.or(model.map(|m| m.bound() as f64)).unwrap_or(1.0);
    let opts = SolverOptions {
        tol,
        ..Default::default()
    };
    json(&recover_family_structure(&family, &batch(rows)?, bound, &opts).map_err(to_py)?)
}

/// Structure recovery report as JSON; errors are filled in when the
/// document carries `theta`.
#[pyfunction]
#[pyo3(signature = (model_json, rows, eps = 0.04, threshold = None))]
fn recover(model_json: &str, rows: Vec<Vec<f64>>, eps: f64, threshold: Option<f64>) -> PyResult<String> {
    let (family, model) = family_of(model_json)?;
    let opts = RecoveryOptions {
        bound: model.as_ref().map_or(1.0, |m| m.bound() as f64),
        eps,
        threshold,
        ..Default::default()
    };
    json(&algorithm1(&family, &batch(rows)?, &opts, model.as_ref()).map_err(to_py)?)
}

#[pyfunction]
fn grid_gamma(d: u32, c_t: u32, bound: u32) -> PyResult<u64> {
    core_grid_gamma(d, c_t, bound).map_err(to_py)
}

/// Runs a sweep and returns `(csv, report_json)`.
#[pyfunction]
fn sweep(py: Python<'_>, config_json: &str) -> PyResult<(String, String)> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let rows = py.detach(|| run_sweep(&cfg)).map_err(to_py)?;
    let mut csv = Vec::new();
    write_rows(&rows, &mut csv).map_err(to_py)?;
    let report = build_report(&cfg, &rows).to_json().map_err(to_py)?;
    Ok((String::from_utf8(csv).expect("CSV is UTF-8"), report))
}

/// Report JSON for a config and the CSV of a previous sweep.
#[pyfunction]
fn report(config_json: &str, csv: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let rows = read_rows(csv.as_bytes()).map_err(to_py)?;
    build_report(&cfg, &rows).to_json().map_err(to_py)
}

#[pymodule]
fn expfam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(local_quadratic, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(recover, m)?)?;
    m.add_function(wrap_pyfunction!(grid_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    Ok(())
}
