//! Python bindings.
//!
//! Data cross the boundary as nested lists: rows of floats with `None` for
//! missing cells, and per-column level counts (`0` for continuous) for
//! mixed data. Structured outputs that have no class of their own are
//! returned as dictionaries decoded from JSON.

pub mod convert;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use gems_core::bench::generators::{apply_missing, gen_precision, sample_mvn, true_edges, MissingSpec, PrecisionModel};
use gems_core::bench::metrics;
use gems_core::bench::runner::{run_experiment as run_core_experiment, ExperimentConfig};
use gems_core::engine::GicPolicy;
use gems_core::ggm::{gems_ggm, GgmConfig, PenaltyGrid};
use gems_core::glm::mcem::{gems_glm, imputation_baseline as core_imputation, GlmConfig, MsStepOptions};
use gems_core::mixed::forest::{learn_sd_forest, ForestMode};
use gems_core::mixed::mi::{all_pair_weights_pairwise, EdgePenalty};
use gems_core::{GemsError, GemsTrace, ObservedMatrix};
use nalgebra::DVector;

use convert::{levels_from_kinds, matrix_from_rows, matrix_to_rows, mixed_from_rows};

fn py_err(e: GemsError) -> PyErr {
    match e {
        GemsError::Ingest(_) | GemsError::InvalidInput(_) | GemsError::Shape(_) | GemsError::EmptyRow { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn forest_mode(mode: &str) -> PyResult<ForestMode> {
    match mode {
        "forest" => Ok(ForestMode::Forest),
        "tree" => Ok(ForestMode::Tree),
        _ => Err(PyValueError::new_err(format!("mode must be 'forest' or 'tree', not {mode:?}"))),
    }
}

fn gic_trace(trace: &GemsTrace) -> Vec<f64> {
    trace.gic_values()
}

/// Selected Gaussian graphical model.
#[pyclass(frozen, skip_from_py_object, module = "gems")]
#[derive(Clone)]
pub struct GgmModel {
    #[pyo3(get)]
    edges: Vec<(usize, usize)>,
    #[pyo3(get)]
    mu: Vec<f64>,
    #[pyo3(get)]
    omega: Vec<Vec<f64>>,
    #[pyo3(get)]
    gic: f64,
    /// Observed criterion per iteration, starting with the initial state.
    #[pyo3(get)]
    gic_trace: Vec<f64>,
    #[pyo3(get)]
    stop_reason: String,
}

#[pymethods]
impl GgmModel {
    fn __repr__(&self) -> String {
        format!(
            "GgmModel(p={}, edges={}, gic={:.4})",
            self.mu.len(),
            self.edges.len(),
            self.gic
        )
    }
}

/// Strongly decomposable forest over typed vertices.
#[pyclass(frozen, skip_from_py_object, module = "gems")]
#[derive(Clone)]
pub struct SdForest {
    inner: gems_core::mixed::forest::SdForest,
}

#[pymethods]
impl SdForest {
    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges.clone()
    }

    /// Level counts per vertex, 0 for continuous.
    #[getter]
    fn levels(&self) -> Vec<usize> {
        levels_from_kinds(&self.inner.kinds)
    }

    fn df(&self) -> usize {
        self.inner.df()
    }

    /// A pair of categorical vertices joined through continuous vertices
    /// only, if any.
    fn forbidden_path(&self) -> Option<(usize, usize)> {
        self.inner.forbidden_path()
    }

    #[pyo3(signature = (names=None))]
    fn to_dot(&self, names: Option<Vec<String>>) -> String {
        self.inner.to_dot(names.as_deref())
    }

    fn __repr__(&self) -> String {
        format!("SdForest(vertices={}, edges={:?})", self.inner.num_vertices(), self.inner.edges)
    }
}

/// Selected logistic regression with its predictor forest.
#[pyclass(frozen, module = "gems")]
pub struct GlmResult {
    #[pyo3(get)]
    selected: Vec<usize>,
    #[pyo3(get)]
    intercept: f64,
    /// Coefficient groups by predictor, empty when excluded.
    #[pyo3(get)]
    coefficients: Vec<Vec<f64>>,
    #[pyo3(get)]
    forest: Option<SdForest>,
    #[pyo3(get)]
    acceptance_rates: Vec<f64>,
    #[pyo3(get)]
    gic_trace: Vec<f64>,
}

#[pymethods]
impl GlmResult {
    fn __repr__(&self) -> String {
        format!("GlmResult(selected={:?})", self.selected)
    }
}

/// Gaussian graphical model selection on rows with `None` for missing cells.
#[pyfunction]
#[pyo3(signature = (rows, gamma=0.0, lambda_count=20, lambda_min_ratio=0.01, tol=1e-6, max_iter=100, strict=false))]
fn select_ggm(
    py: Python<'_>,
    rows: Vec<Vec<Option<f64>>>,
    gamma: f64,
    lambda_count: usize,
    lambda_min_ratio: f64,
    tol: f64,
    max_iter: usize,
    strict: bool,
) -> PyResult<GgmModel> {
    if !(tol > 0.0) {
        return Err(PyValueError::new_err("tol must be positive"));
    }
    let xo = ObservedMatrix::from_rows(&rows).map_err(py_err)?;
    let mut config = GgmConfig {
        gamma,
        grid: PenaltyGrid::Auto {
            count: lambda_count,
            min_ratio: lambda_min_ratio,
        },
        ..GgmConfig::default()
    };
    config.gems.tol_q = tol;
    config.gems.tol_g = tol;
    config.gems.max_iter = max_iter;
    config.gems.gic_policy = if strict { GicPolicy::Strict } else { GicPolicy::Warn };
    let res = py.detach(|| gems_ggm(&xo, &config)).map_err(py_err)?;
    Ok(GgmModel {
        edges: res.model.graph.edges().collect(),
        mu: res.model.params.mu.iter().copied().collect(),
        omega: matrix_to_rows(&res.model.params.omega),
        gic: res.gic,
        gic_trace: gic_trace(&res.trace),
        stop_reason: format!("{:?}", res.trace.stop_reason),
    })
}

/// Predictor selection for a binary response `y` on mixed rows.
#[pyfunction]
#[pyo3(signature = (rows, levels, y, m=30, seed=0, lambda_count=20, lambda_min_ratio=0.05, max_iter=20, mode="forest"))]
#[allow(clippy::too_many_arguments)]
fn select_glm(
    py: Python<'_>,
    rows: Vec<Vec<Option<f64>>>,
    levels: Vec<usize>,
    y: Vec<f64>,
    m: usize,
    seed: u64,
    lambda_count: usize,
    lambda_min_ratio: f64,
    max_iter: usize,
    mode: &str,
) -> PyResult<GlmResult> {
    let ds = mixed_from_rows(&rows, &levels).map_err(py_err)?;
    let mut config = GlmConfig {
        m,
        seed,
        ..GlmConfig::default()
    };
    config.ms.lambda_count = lambda_count;
    config.ms.lambda_min_ratio = lambda_min_ratio;
    config.ms.forest_mode = forest_mode(mode)?;
    config.gems.max_iter = max_iter;
    let res = py.detach(|| gems_glm(&ds, &y, &config)).map_err(py_err)?;
    Ok(GlmResult {
        selected: res.glm.selected(),
        intercept: res.glm.intercept,
        coefficients: res.glm.groups,
        forest: Some(SdForest { inner: res.forest }),
        acceptance_rates: res.acceptance,
        gic_trace: gic_trace(&res.trace),
    })
}

/// Mean/mode imputation followed by a BIC-tuned group lasso.
#[pyfunction]
#[pyo3(signature = (rows, levels, y, lambda_count=20, lambda_min_ratio=0.05))]
fn imputation_baseline(
    rows: Vec<Vec<Option<f64>>>,
    levels: Vec<usize>,
    y: Vec<f64>,
    lambda_count: usize,
    lambda_min_ratio: f64,
) -> PyResult<GlmResult> {
    let ds = mixed_from_rows(&rows, &levels).map_err(py_err)?;
    let opts = MsStepOptions {
        lambda_count,
        lambda_min_ratio,
        ..MsStepOptions::default()
    };
    let glm = core_imputation(&ds, &y, &opts).map_err(py_err)?;
    Ok(GlmResult {
        selected: glm.selected(),
        intercept: glm.intercept,
        coefficients: glm.groups,
        forest: None,
        acceptance_rates: Vec::new(),
        gic_trace: Vec::new(),
    })
}

/// Penalized maximum-weight forest from pairwise-complete mutual information.
#[pyfunction]
#[pyo3(signature = (rows, levels, penalty="bic", mode="forest"))]
fn learn_forest(rows: Vec<Vec<Option<f64>>>, levels: Vec<usize>, penalty: &str, mode: &str) -> PyResult<SdForest> {
    let ds = mixed_from_rows(&rows, &levels).map_err(py_err)?;
    let penalty = match penalty {
        "bic" => EdgePenalty::Bic,
        "none" => EdgePenalty::None,
        _ => return Err(PyValueError::new_err("penalty must be 'bic' or 'none'")),
    };
    let weights: Vec<_> = all_pair_weights_pairwise(&ds, penalty)
        .map_err(py_err)?
        .into_iter()
        .filter_map(Result::ok)
        .collect();
    let inner = learn_sd_forest(&ds.kinds(), &weights, forest_mode(mode)?).map_err(py_err)?;
    Ok(SdForest { inner })
}

/// Draws a masked Gaussian sample; returns `(rows, true_edges)`.
#[pyfunction]
#[pyo3(signature = (model, p, n, mechanism="mcar", rate=0.1, seed=0))]
fn simulate_ggm(
    model: &str,
    p: usize,
    n: usize,
    mechanism: &str,
    rate: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<Option<f64>>>, Vec<(usize, usize)>)> {
    let model: PrecisionModel = serde_json::from_value(serde_json::Value::String(model.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown precision model {model:?}")))?;
    let spec = match mechanism {
        "mcar" => MissingSpec::Mcar { rate },
        "bernoulli" => MissingSpec::Bernoulli { pi: rate },
        "mar" => MissingSpec::Mar { pi: rate },
        "nmar" => MissingSpec::Nmar { pi: rate },
        _ => return Err(PyValueError::new_err(format!("unknown mechanism {mechanism:?}"))),
    };
    let (omega, sigma) = gen_precision(model, p, seed).map_err(py_err)?;
    let x = sample_mvn(&DVector::zeros(p), &sigma, n, seed).map_err(py_err)?;
    let xo = apply_missing(&x, spec, seed).map_err(py_err)?;
    Ok(((0..xo.n()).map(|i| xo.row(i)).collect(), true_edges(&omega)))
}

/// Runs a benchmark described by a JSON string; returns the results as a
/// dictionary. With `out_dir`, records and summary are written there.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir=None, resume=false))]
fn run_experiment<'py>(
    py: Python<'py>,
    config_json: &str,
    out_dir: Option<std::path::PathBuf>,
    resume: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let config: ExperimentConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(format!("bad experiment config: {e}")))?;
    let res = py
        .detach(|| run_core_experiment(&config, out_dir.as_deref(), resume))
        .map_err(py_err)?;
    json_to_py(py, &res)
}

#[pyfunction]
#[pyo3(name = "mcc")]
fn mcc_py(tp: u64, fp: u64, fn_: u64, tn: u64) -> f64 {
    metrics::mcc(tp, fp, fn_, tn)
}

/// Confusion counts and rates of an estimated edge list against the truth.
#[pyfunction]
fn eval_structure<'py>(
    py: Python<'py>,
    estimated: Vec<(usize, usize)>,
    truth: Vec<(usize, usize)>,
    universe: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let r = metrics::eval_structure(&estimated, &truth, universe).map_err(py_err)?;
    json_to_py(py, &r)
}

/// `KL(N(mu1, sigma1) ‖ N(mu2, sigma2))`.
#[pyfunction]
fn kl_gaussian(mu1: Vec<f64>, sigma1: Vec<Vec<f64>>, mu2: Vec<f64>, sigma2: Vec<Vec<f64>>) -> PyResult<f64> {
    let s1 = matrix_from_rows(&sigma1).map_err(py_err)?;
    let s2 = matrix_from_rows(&sigma2).map_err(py_err)?;
    metrics::kl_gaussian(&DVector::from_vec(mu1), &s1, &DVector::from_vec(mu2), &s2).map_err(py_err)
}

/// Spectral norm of `a - b`.
#[pyfunction]
fn norm2_diff(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    let a = matrix_from_rows(&a).map_err(py_err)?;
    let b = matrix_from_rows(&b).map_err(py_err)?;
    metrics::norm2_diff(&a, &b).map_err(py_err)
}

#[pymodule]
fn gems(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<GgmModel>()?;
    m.add_class::<SdForest>()?;
    m.add_class::<GlmResult>()?;
    m.add_function(wrap_pyfunction!(select_ggm, m)?)?;
    m.add_function(wrap_pyfunction!(select_glm, m)?)?;
    m.add_function(wrap_pyfunction!(imputation_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(learn_forest, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_ggm, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(mcc_py, m)?)?;
    m.add_function(wrap_pyfunction!(eval_structure, m)?)?;
    m.add_function(wrap_pyfunction!(kl_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(norm2_diff, m)?)?;
    Ok(())
}
