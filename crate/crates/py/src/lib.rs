//! Python bindings: model specs, the continuity march, the limit pipeline,
//! diagnostics rows, decay fitting, and the verification suites.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fanocollapse::diagnostics::{
    self, closeness_constant_monte_carlo, fit_decay, DecayModel, DiagnosticsRow,
};
use fanocollapse::harness::{self, HarnessError};
use fanocollapse::limit::build_limit_data;
use fanocollapse::mesh::build_mesh;
use fanocollapse::nalgebra::DMatrix;
use fanocollapse::path::{build_volume_form, march_resume, SolveOptions};
use fanocollapse::radial::{Model, ModelSpec};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn harness_err(e: HarnessError) -> PyErr {
    if e.exit_code() == 2 {
        value_err(e)
    } else {
        runtime_err(e)
    }
}

/// Fibration model: twisted surface or the product, with class data and
/// volume gauge.
#[pyclass(name = "ModelSpec", module = "fanocollapse_py")]
#[derive(Clone)]
struct PyModelSpec {
    inner: ModelSpec,
}

#[pymethods]
impl PyModelSpec {
    /// Twisted surface with fiber moment interval [b0, binf].
    #[staticmethod]
    #[pyo3(signature = (a, b0, binf, kappa, gauge=None))]
    fn hirzebruch(a: u32, b0: f64, binf: f64, kappa: f64, gauge: Option<f64>) -> PyResult<Self> {
        let mut inner = ModelSpec::hirzebruch(a, b0, binf, kappa);
        if let Some(g) = gauge {
            inner.omega_gauge = g;
        }
        inner.validate().map_err(value_err)?;
        Ok(PyModelSpec { inner })
    }

    /// Product of two spheres; the fiber interval is fixed at (0, 2).
    #[staticmethod]
    #[pyo3(signature = (kappa, gauge=None))]
    fn product(kappa: f64, gauge: Option<f64>) -> PyResult<Self> {
        let mut inner = ModelSpec::product(kappa);
        if let Some(g) = gauge {
            inner.omega_gauge = g;
        }
        inner.validate().map_err(value_err)?;
        Ok(PyModelSpec { inner })
    }

    #[getter]
    fn model(&self) -> &'static str {
        match self.inner.model {
            Model::Hirzebruch { .. } => "hirzebruch",
            Model::ProductP1xP1 => "product",
        }
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a()
    }

    #[getter]
    fn moment_interval(&self) -> (f64, f64) {
        (self.inner.b0, self.inner.binf)
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn gauge(&self) -> f64 {
        self.inner.omega_gauge
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelSpec({}, a={}, interval=({}, {}), kappa={}, gauge={})",
            self.model(),
            self.inner.a(),
            self.inner.b0,
            self.inner.binf,
            self.inner.kappa,
            self.inner.omega_gauge,
        )
    }
}

/// One solved slice of the continuity path.
#[pyclass(name = "PathSlice", module = "fanocollapse_py")]
struct PyPathSlice {
    #[pyo3(get)]
    t: f64,
    #[pyo3(get)]
    phi: Vec<f64>,
    #[pyo3(get)]
    phi_dot: Vec<f64>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    residual: f64,
}

#[pymethods]
impl PyPathSlice {
    fn __repr__(&self) -> String {
        format!(
            "PathSlice(t={}, n={}, residual={:.3e})",
            self.t,
            self.phi.len(),
            self.residual
        )
    }
}

/// Limit pipeline summary: the fiberwise data, the descended density, and
/// the base metric potential.
#[pyclass(name = "LimitData", module = "fanocollapse_py")]
struct PyLimitData {
    #[pyo3(get)]
    v0: f64,
    #[pyo3(get)]
    g_value: f64,
    #[pyo3(get)]
    g_pushforward: f64,
    #[pyo3(get)]
    g_fiber_spread: f64,
    #[pyo3(get)]
    rho: Vec<f64>,
    #[pyo3(get)]
    u_fiber: Vec<f64>,
    #[pyo3(get)]
    psi: Vec<f64>,
    #[pyo3(get)]
    omega_y_q: Vec<f64>,
    #[pyo3(get)]
    fiber_residual: f64,
    #[pyo3(get)]
    base_residual: f64,
}

#[pymethods]
impl PyLimitData {
    fn __repr__(&self) -> String {
        format!(
            "LimitData(G={:.6}, pushforward={:.6}, v0={:.6})",
            self.g_value, self.g_pushforward, self.v0
        )
    }
}

/// One diagnostics row of the estimate ladder.
#[pyclass(name = "DiagnosticsRow", module = "fanocollapse_py")]
struct PyDiagnosticsRow {
    row: DiagnosticsRow,
}

#[pymethods]
impl PyDiagnosticsRow {
    #[getter]
    fn t(&self) -> f64 {
        self.row.t
    }

    /// Every field as a dict keyed by the CSV header names.
    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new_bound(py);
        let names: Vec<&str> = DiagnosticsRow::CSV_HEADER.split(',').collect();
        let line = self.row.csv_line();
        for (name, value) in names.iter().zip(line.split(',')) {
            if *name == "newton_iters" {
                d.set_item(name, value.parse::<usize>().map_err(value_err)?)?;
            } else {
                d.set_item(name, value.parse::<f64>().map_err(value_err)?)?;
            }
        }
        Ok(d)
    }

    fn csv_line(&self) -> String {
        self.row.csv_line()
    }

    #[staticmethod]
    fn csv_header() -> &'static str {
        DiagnosticsRow::CSV_HEADER
    }

    fn __repr__(&self) -> String {
        format!(
            "DiagnosticsRow(t={}, global_c0_dist={:.3e})",
            self.row.t, self.row.global_c0_dist
        )
    }
}

fn march_states(
    spec: &ModelSpec,
    npoints: usize,
    schedule: &[f64],
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<(
    Arc<fanocollapse::mesh::Mesh>,
    fanocollapse::path::VolumeForm,
    Vec<fanocollapse::path::PathState>,
)> {
    let mesh = Arc::new(build_mesh(npoints, spec.a()).map_err(value_err)?);
    let omega = build_volume_form(spec, spec.omega_gauge, &mesh).map_err(value_err)?;
    let mut opts = SolveOptions::default();
    if let Some(t) = tol {
        opts.tol = t;
    }
    if let Some(m) = max_iter {
        opts.max_iter = m;
    }
    let mut states = Vec::new();
    march_resume(spec, &omega, &mesh, schedule, None, opts, &mut |s| {
        states.push(s.clone())
    })
    .map_err(runtime_err)?;
    Ok((mesh, omega, states))
}

/// March the continuity path over a strictly increasing schedule.
#[pyfunction]
#[pyo3(signature = (spec, npoints, schedule, tol=None, max_iter=None))]
fn march(
    spec: &PyModelSpec,
    npoints: usize,
    schedule: Vec<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<Vec<PyPathSlice>> {
    let (_, _, states) = march_states(&spec.inner, npoints, &schedule, tol, max_iter)?;
    Ok(states
        .into_iter()
        .map(|s| PyPathSlice {
            t: s.t,
            phi: s.phi,
            phi_dot: s.phi_dot,
            iterations: s.report.iterations,
            residual: s.report.residual_sup,
        })
        .collect())
}

/// Build the collapsed-limit data on the base.
#[pyfunction]
fn limit_data(spec: &PyModelSpec, npoints: usize) -> PyResult<PyLimitData> {
    let limit = build_limit_data(&spec.inner, npoints).map_err(runtime_err)?;
    Ok(PyLimitData {
        v0: limit.v0,
        g_value: limit.g.value,
        g_pushforward: limit.g.pushforward,
        g_fiber_spread: limit.g.fiber_spread,
        rho: limit.rho.clone(),
        u_fiber: limit.u_fiber.clone(),
        psi: limit.psi.clone(),
        omega_y_q: limit.omega_y.q().to_vec(),
        fiber_residual: limit.fiber_report.residual_sup,
        base_residual: limit.base_report.residual_sup,
    })
}

/// March and measure the full diagnostics ladder at every slice.
#[pyfunction]
#[pyo3(signature = (spec, npoints, schedule, tol=None, max_iter=None))]
fn diagnose(
    spec: &PyModelSpec,
    npoints: usize,
    schedule: Vec<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<Vec<PyDiagnosticsRow>> {
    let (_, omega, states) = march_states(&spec.inner, npoints, &schedule, tol, max_iter)?;
    let limit = build_limit_data(&spec.inner, npoints).map_err(runtime_err)?;
    states
        .iter()
        .map(|s| {
            diagnostics::measure(&spec.inner, &omega, s, &limit)
                .map(|row| PyDiagnosticsRow { row })
                .map_err(runtime_err)
        })
        .collect()
}

/// Fit a decaying series; returns (model, rate, constant, r2) where model is
/// "exponential" or "polynomial".
#[pyfunction]
fn fit_decay_series(series: Vec<(f64, f64)>) -> PyResult<(String, f64, f64, f64)> {
    let fit = fit_decay(&series).map_err(value_err)?;
    let model = match fit.model {
        DecayModel::Exponential => "exponential",
        DecayModel::Polynomial => "polynomial",
    };
    Ok((model.into(), fit.rate, fit.constant, fit.quality))
}

/// Hilbert-Schmidt distance from the identity after checking the
/// trace/determinant premises; rows must form a square symmetric matrix.
#[pyfunction]
fn matrix_closeness(rows: Vec<Vec<f64>>, eps: f64) -> PyResult<f64> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(value_err("matrix must be square"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let a = DMatrix::from_row_slice(n, n, &flat);
    diagnostics::matrix_closeness(&a, eps).map_err(value_err)
}

/// Empirical closeness constant over random admissible 2x2 samples.
#[pyfunction]
#[pyo3(signature = (samples=1000, eps=1e-4, seed=0x3f77))]
fn closeness_constant(samples: usize, eps: f64, seed: u64) -> PyResult<f64> {
    closeness_constant_monte_carlo(samples, eps, seed).map_err(value_err)
}

/// Run one verification suite; returns (name, passed, detail) per check.
#[pyfunction]
#[pyo3(signature = (suite, seed=0))]
fn verify(suite: &str, seed: u64) -> PyResult<Vec<(String, bool, String)>> {
    let checks = harness::cmd_verify(suite, seed).map_err(harness_err)?;
    Ok(checks
        .into_iter()
        .map(|c| (c.name, c.passed, c.detail))
        .collect())
}

/// Execute a run config end to end; returns (directory, slices, resumed_from).
#[pyfunction]
#[pyo3(signature = (config_path, out=None, seed=None))]
fn run(
    config_path: &str,
    out: Option<&str>,
    seed: Option<u64>,
) -> PyResult<(String, usize, Option<f64>)> {
    let out_path = out.map(PathBuf::from);
    let outputs = harness::cmd_run(
        &PathBuf::from(config_path),
        out_path.as_deref(),
        seed,
    )
    .map_err(harness_err)?;
    Ok((
        outputs.directory.display().to_string(),
        outputs.rows.len(),
        outputs.resumed_from,
    ))
}

#[pymodule]
fn fanocollapse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelSpec>()?;
    m.add_class::<PyPathSlice>()?;
    m.add_class::<PyLimitData>()?;
    m.add_class::<PyDiagnosticsRow>()?;
    m.add_function(wrap_pyfunction!(march, m)?)?;
    m.add_function(wrap_pyfunction!(limit_data, m)?)?;
    m.add_function(wrap_pyfunction!(diagnose, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay_series, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_closeness, m)?)?;
    m.add_function(wrap_pyfunction!(closeness_constant, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
