//! Python module `pytrackfuse`.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use trackfuse::fusion::{self, FusionWeight, Strategy};
use trackfuse::sim::{run_scenario, Method, ScenarioConfig};
use trackfuse::validate::{run_suite, ValidateOptions};
use trackfuse::{Density, GaussianDensity, GaussianMixture};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(err("covariance must be a square list of lists"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn json_value<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Multivariate Gaussian `N(mean, cov)`.
#[pyclass(name = "Gaussian", module = "pytrackfuse", from_py_object)]
#[derive(Clone)]
pub struct PyGaussian {
    inner: GaussianDensity,
}

#[pymethods]
impl PyGaussian {
    #[new]
    fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = GaussianDensity::new(DVector::from_vec(mean), matrix(&cov)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().iter().copied().collect()
    }

    #[getter]
    fn cov(&self) -> Vec<Vec<f64>> {
        rows(self.inner.cov())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn pdf(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&DVector::from_vec(x)).map_err(err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serialises")
    }

    fn __repr__(&self) -> String {
        format!("Gaussian(mean={:?}, cov={:?})", self.mean(), self.cov())
    }
}

/// Weighted sum of Gaussians.
#[pyclass(name = "Mixture", module = "pytrackfuse", from_py_object)]
#[derive(Clone)]
pub struct PyMixture {
    inner: GaussianMixture,
}

#[pymethods]
impl PyMixture {
    #[new]
    fn new(weights: Vec<f64>, components: Vec<PyGaussian>) -> PyResult<Self> {
        let comps = components.into_iter().map(|g| g.inner).collect();
        Ok(Self {
            inner: GaussianMixture::new(weights, comps).map_err(err)?,
        })
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn components(&self) -> Vec<PyGaussian> {
        self.inner
            .components()
            .iter()
            .map(|g| PyGaussian { inner: g.clone() })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn pdf(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&DVector::from_vec(x)).map_err(err)
    }

    /// Single Gaussian with the mixture's mean and covariance.
    fn moment_match(&self) -> PyResult<PyGaussian> {
        Ok(PyGaussian {
            inner: trackfuse::gaussian::moment_match(&self.inner).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serialises")
    }

    fn __repr__(&self) -> String {
        format!("Mixture({} components)", self.inner.len())
    }
}

fn to_density(obj: &Bound<'_, PyAny>) -> PyResult<Density> {
    if let Ok(g) = obj.extract::<PyGaussian>() {
        return Ok(g.inner.into());
    }
    if let Ok(m) = obj.extract::<PyMixture>() {
        return Ok(m.inner.into());
    }
    Err(err("expected a Gaussian or a Mixture"))
}

fn from_density(py: Python<'_>, d: Density) -> PyResult<Py<PyAny>> {
    Ok(match d {
        Density::Gaussian(g) => Py::new(py, PyGaussian { inner: g })?.into_any(),
        Density::Mixture(m) => Py::new(py, PyMixture { inner: m })?.into_any(),
    })
}

/// Fuses two densities. Returns `(density, diagnostics)`.
#[pyfunction]
#[pyo3(signature = (a, b, strategy = "hmd", omega = 0.5))]
fn fuse<'py>(
    py: Python<'py>,
    a: &Bound<'py, PyAny>,
    b: &Bound<'py, PyAny>,
    strategy: &str,
    omega: f64,
) -> PyResult<(Py<PyAny>, Bound<'py, PyAny>)> {
    let st: Strategy = strategy.parse().map_err(err)?;
    let w = FusionWeight::new(omega).map_err(err)?;
    let r = fusion::fuse_pair(st, &to_density(a)?, &to_density(b)?, w).map_err(err)?;
    let diag = json_value(
        py,
        &serde_json::to_string(&r.diagnostics).expect("serialises"),
    )?;
    Ok((from_density(py, r.density)?, diag))
}

/// Normalising constant of the exact harmonic-mean pool.
#[pyfunction]
#[pyo3(signature = (a, b, omega = 0.5))]
fn hmd_norm_const(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>, omega: f64) -> PyResult<f64> {
    let w = FusionWeight::new(omega).map_err(err)?;
    fusion::hmd_norm_const(&to_density(a)?, &to_density(b)?, w).map_err(err)
}

/// Runs a scenario file and returns the JSON summary as a dict.
#[pyfunction]
#[pyo3(signature = (config, runs = None, seed = None, methods = None))]
fn simulate<'py>(
    py: Python<'py>,
    config: PathBuf,
    runs: Option<usize>,
    seed: Option<u64>,
    methods: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = ScenarioConfig::from_path(&config).map_err(err)?;
    if let Some(r) = runs {
        cfg.runs = r;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = methods {
        cfg.methods = m
            .iter()
            .map(|s| s.parse::<Method>())
            .collect::<Result<_, _>>()
            .map_err(err)?;
    }
    cfg.validate().map_err(err)?;
    let report = py.detach(|| run_scenario(&cfg)).map_err(err)?;
    json_value(py, &report.to_json(false))
}

/// Runs the property suite. Returns `[(name, passed, detail), ...]`.
#[pyfunction]
#[pyo3(signature = (trials = None, seed = 2024))]
fn validate(trials: Option<usize>, seed: u64) -> Vec<(String, bool, String)> {
    let opts = ValidateOptions {
        seed,
        trials,
        broken_division: false,
    };
    run_suite(&opts)
        .into_iter()
        .map(|o| (o.name.to_string(), o.passed, o.detail))
        .collect()
}

#[pymodule]
fn pytrackfuse(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGaussian>()?;
    m.add_class::<PyMixture>()?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(hmd_norm_const, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add(
        "STRATEGIES",
        Strategy::ALL.iter().map(|s| s.name()).collect::<Vec<_>>(),
    )?;
    Ok(())
}
