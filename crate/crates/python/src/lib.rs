//! Python bindings: training, prediction, simulation, cross-validation and
//! the evaluation measures. Matrices cross the boundary as lists of rows.

use ndarray::{Array1, Array2};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pglmc::harness::{self, CvPlan};
use pglmc::synth::{self, Setting, SimSpec};
use pglmc::types::{Dataset, Label, LinearModel, Method, ModelFlag};
use pglmc::{classifier, io, metrics, Error, ErrorKind, TrainConfig};

create_exception!(pglmc_py, SolverError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e.kind() {
        ErrorKind::Solver => SolverError::new_err(e.to_string()),
        ErrorKind::Usage | ErrorKind::Data => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> PyResult<T> {
    s.parse()
        .map_err(|_| PyValueError::new_err(format!("unknown {what} '{s}'")))
}

pub fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!(
            "row {i} has {} values, expected {d}",
            rows[i].len()
        )));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// `(x, y, w_bayes, b_bayes)` as returned by `simulate`.
type Sample = (Vec<Vec<f64>>, Vec<Label>, Vec<f64>, f64);

fn rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.outer_iter().map(|r| r.to_vec()).collect()
}

fn dataset(x: Vec<Vec<f64>>, y: Vec<Label>) -> PyResult<Dataset> {
    Dataset::new(matrix(x)?, y).map_err(to_py)
}

/// A trained linear classifier `f(x) = w·x + b`.
#[pyclass(name = "Model", module = "pglmc_py", frozen)]
pub struct PyModel {
    inner: LinearModel,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }

    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.w.to_vec()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    /// Multiplier of the population-margin constraint.
    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.to_vec()
    }

    #[getter]
    fn support(&self) -> Vec<usize> {
        self.inner.support.clone()
    }

    #[getter]
    fn flags(&self) -> Vec<&'static str> {
        self.inner
            .flags
            .iter()
            .map(|f| match f {
                ModelFlag::EmptySupportSet => "empty_support_set",
            })
            .collect()
    }

    fn decision_function(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = matrix(x)?;
        Ok(classifier::score_matrix(&self.inner, x.view()).map_err(to_py)?.to_vec())
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Label>> {
        let x = matrix(x)?;
        Ok(classifier::predict_batch(&self.inner, x.view())
            .map_err(to_py)?
            .into_iter()
            .map(|p| p.label)
            .collect())
    }

    fn to_json(&self) -> PyResult<String> {
        io::model_to_json(&self.inner).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: io::model_from_json(s).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(method='{}', d={}, b={}, lambda_={})",
            self.method(),
            self.inner.w.len(),
            self.inner.b,
            self.inner.lambda
        )
    }
}

/// Trains a PGLMC (default) or SVM classifier on rows `x` with labels in {+1, -1}.
#[pyfunction]
#[pyo3(signature = (x, y, method = "pglmc", c0 = 1.0, c = 2.0, tol = None, max_iter = None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<Label>,
    method: &str,
    c0: f64,
    c: f64,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<PyModel> {
    let method: Method = parse(method, "method")?;
    let data = dataset(x, y)?;
    let mut config = TrainConfig::new(c0, c);
    if let Some(tol) = tol {
        config = config.with_tol(tol);
    }
    config.max_iter = max_iter;
    let inner = py
        .detach(|| classifier::train(method, &data, &config))
        .map_err(to_py)?;
    Ok(PyModel { inner })
}

fn sim_spec(setting: &str, d: usize, n_plus: usize, n_minus: usize, seed: u64) -> PyResult<SimSpec> {
    let setting: Setting = parse(setting, "setting")?;
    Ok(SimSpec::new(setting, d, n_plus, n_minus, seed))
}

/// Draws a training sample; returns `(x, y, w_bayes, b_bayes)`.
#[pyfunction]
#[pyo3(signature = (d, n_plus = 200, n_minus = 50, seed = 0, setting = "independent"))]
fn simulate(
    d: usize,
    n_plus: usize,
    n_minus: usize,
    seed: u64,
    setting: &str,
) -> PyResult<Sample> {
    let spec = sim_spec(setting, d, n_plus, n_minus, seed)?;
    let (data, bayes) = synth::generate(&spec).map_err(to_py)?;
    Ok((
        rows(&data.features().to_owned()),
        data.labels().to_vec(),
        bayes.w_bayes,
        bayes.b_bayes,
    ))
}

/// Draws a balanced test sample from the stream paired with `simulate`.
#[pyfunction]
#[pyo3(signature = (d, n_per_class, seed = 0, setting = "independent"))]
fn simulate_test(
    d: usize,
    n_per_class: usize,
    seed: u64,
    setting: &str,
) -> PyResult<(Vec<Vec<f64>>, Vec<Label>)> {
    let spec = sim_spec(setting, d, 1, 1, seed)?;
    let data = synth::generate_test(&spec, n_per_class).map_err(to_py)?;
    Ok((rows(&data.features().to_owned()), data.labels().to_vec()))
}

/// Replicated nested cross-validation. Returns a dict with `mean_ccr`,
/// `mean_mwe` and the full per-fold record as `results_json`.
#[pyfunction]
#[pyo3(signature = (
    x, y, seed, method = "pglmc", replications = 10, outer_folds = 5, inner_folds = 5,
    c0_grid = None, c_grid = None, standardize = false
))]
#[allow(clippy::too_many_arguments)]
fn cross_validate<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<Label>,
    seed: u64,
    method: &str,
    replications: usize,
    outer_folds: usize,
    inner_folds: usize,
    c0_grid: Option<Vec<f64>>,
    c_grid: Option<Vec<f64>>,
    standardize: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let method: Method = parse(method, "method")?;
    let data = dataset(x, y)?;
    let grid = match (c0_grid, c_grid) {
        (None, None) => harness::default_grid(method),
        (c0s, cs) => {
            let c0s = c0s.unwrap_or_else(|| classifier::DEFAULT_C0_GRID.to_vec());
            let cs = cs.unwrap_or_else(|| harness::DEFAULT_C_GRID.to_vec());
            harness::grid_from(method, &c0s, &cs)
        }
    };
    let mut plan = CvPlan::new(replications, seed, grid);
    plan.outer_folds = outer_folds;
    plan.inner_folds = inner_folds;
    plan.standardize = standardize;
    let result = py
        .detach(|| harness::run_cv_experiment(&data, &plan, method))
        .map_err(to_py)?;
    let json = serde_json::to_string(&result).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;

    let out = PyDict::new(py);
    out.set_item("mean_ccr", result.mean_ccr())?;
    out.set_item("mean_mwe", result.mean_mwe())?;
    out.set_item("failures", result.failures.len())?;
    out.set_item("results_json", json)?;
    Ok(out)
}

/// Correct classification rate.
#[pyfunction]
fn ccr(predictions: Vec<Label>, truth: Vec<Label>) -> PyResult<f64> {
    metrics::ccr(&predictions, &truth).map_err(to_py)
}

/// Mean within-group error.
#[pyfunction]
fn mwe(predictions: Vec<Label>, truth: Vec<Label>) -> PyResult<f64> {
    metrics::mwe(&predictions, &truth).map_err(to_py)
}

/// Angle in degrees between two directions.
#[pyfunction]
fn direction_angle(w: Vec<f64>, w_ref: Vec<f64>) -> PyResult<f64> {
    metrics::direction_angle(Array1::from(w).view(), Array1::from(w_ref).view()).map_err(to_py)
}

#[pymodule]
pub fn pglmc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_test, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(ccr, m)?)?;
    m.add_function(wrap_pyfunction!(mwe, m)?)?;
    m.add_function(wrap_pyfunction!(direction_angle, m)?)?;
    Ok(())
}
