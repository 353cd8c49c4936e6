//! Python bindings: the phase-space map, protocol design, ensemble sampling
//! and config-driven runs.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use catcher_core::config::{Mode, RunConfig};
use catcher_core::ensemble::{push_forward, sample_ensemble, EnsembleSpec};
use catcher_core::{CatcherError, PhaseSpacePoint, StoppingProtocol};

fn to_py(e: CatcherError) -> PyErr {
    match e {
        CatcherError::Io(_) | CatcherError::Csv(_) | CatcherError::Leakage { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Wall trajectory `x_m(t) = d sqrt(t / t_f)`.
#[pyclass(name = "Protocol", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyProtocol(StoppingProtocol);

#[pymethods]
impl PyProtocol {
    #[new]
    fn new(d: f64, t_f: f64) -> PyResult<Self> {
        StoppingProtocol::new(d, t_f).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn with_boundary_velocity(d: f64, v_b: f64) -> PyResult<Self> {
        StoppingProtocol::with_boundary_velocity(d, v_b).map(Self).map_err(to_py)
    }

    #[getter]
    fn d(&self) -> f64 {
        self.0.d()
    }

    #[getter]
    fn t_f(&self) -> f64 {
        self.0.t_f()
    }

    #[getter]
    fn v_b(&self) -> f64 {
        self.0.v_b()
    }

    fn mirror_position(&self, t: f64) -> PyResult<f64> {
        self.0.mirror_position(t).map_err(to_py)
    }

    fn mirror_velocity(&self, t: f64) -> PyResult<f64> {
        self.0.mirror_velocity(t).map_err(to_py)
    }

    /// `(x, v)` in SI units to `(chi, nu)`.
    fn to_dimensionless(&self, x: f64, v: f64) -> (f64, f64) {
        let p = self.0.to_dimensionless(x, v);
        (p.chi, p.nu)
    }

    fn from_dimensionless(&self, chi: f64, nu: f64) -> (f64, f64) {
        self.0.from_dimensionless(PhaseSpacePoint { chi, nu })
    }

    fn __repr__(&self) -> String {
        format!("Protocol(d={}, t_f={})", self.0.d(), self.0.t_f())
    }
}

/// Final `(chi_f, nu_f, collided)` for a start at `(chi_s, nu_s)`.
#[pyfunction]
fn forward_map(chi_s: f64, nu_s: f64) -> PyResult<(f64, f64, bool)> {
    let r = catcher_core::forward_map(PhaseSpacePoint { chi: chi_s, nu: nu_s }).map_err(to_py)?;
    Ok((r.point.chi, r.point.nu, r.collided))
}

/// Start `(chi_s, nu_s)` that ends at `(chi_f, nu_f)`.
#[pyfunction]
fn inverse_map(chi_f: f64, nu_f: f64) -> PyResult<(f64, f64)> {
    let s = catcher_core::inverse_map(PhaseSpacePoint { chi: chi_f, nu: nu_f }).map_err(to_py)?;
    Ok((s.chi, s.nu))
}

/// Time-stepped bounce simulation: `(chi_f, nu_f, collided, bounces)`.
#[pyfunction]
#[pyo3(signature = (chi_s, nu_s, dt=1e-4))]
fn trajectory_oracle(chi_s: f64, nu_s: f64, dt: f64) -> PyResult<(f64, f64, bool, u32)> {
    let o = catcher_core::trajectory_oracle(PhaseSpacePoint { chi: chi_s, nu: nu_s }, dt).map_err(to_py)?;
    Ok((o.result.point.chi, o.result.point.nu, o.result.collided, o.bounces))
}

/// Smallest protocol with boundary velocity `v_b` that stops the worst-case
/// particle to within `v_f_target`.
#[pyfunction]
fn design_protocol(x_s_worst: f64, v_s_min: f64, v_f_target: f64, v_b: f64) -> PyResult<PyProtocol> {
    catcher_core::design_protocol(x_s_worst, v_s_min, v_f_target, v_b)
        .map(PyProtocol)
        .map_err(to_py)
}

/// Samples the truncated Gaussian (SI parameters) and maps every sample.
/// Returns the lists `(nu_s, nu_f, collided)`.
#[pyfunction]
#[pyo3(signature = (protocol, x0, dx, v0, dv, n, seed=20240101))]
fn sample_final_velocities(
    py: Python<'_>,
    protocol: PyProtocol,
    x0: f64,
    dx: f64,
    v0: f64,
    dv: f64,
    n: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let spec = EnsembleSpec::new(x0, dx, v0, dv).map_err(to_py)?;
    py.detach(|| {
        let samples = sample_ensemble(&spec, &protocol.0, n, seed)?;
        let mapped = push_forward(&samples)?;
        Ok((
            samples.iter().map(|s| s.nu).collect(),
            mapped.iter().map(|r| r.point.nu).collect(),
            mapped.iter().map(|r| r.collided).collect(),
        ))
    })
    .map_err(to_py)
}

/// Runs a config file in `mode` (map, ensemble, quantum or design), writing
/// CSV files into `out_dir`. Returns the result lines.
#[pyfunction]
#[pyo3(signature = (config, mode, out_dir, seed=None))]
fn run(py: Python<'_>, config: &str, mode: &str, out_dir: &str, seed: Option<u64>) -> PyResult<Vec<String>> {
    let cfg = RunConfig::from_file(Path::new(config)).map_err(to_py)?;
    let mode: Mode = mode.parse().map_err(to_py)?;
    py.detach(|| catcher_core::runner::run(&cfg, mode, Path::new(out_dir), seed))
        .map(|report| report.messages)
        .map_err(to_py)
}

#[pymodule]
fn catcher(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProtocol>()?;
    m.add_function(wrap_pyfunction!(forward_map, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_map, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(design_protocol, m)?)?;
    m.add_function(wrap_pyfunction!(sample_final_velocities, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
