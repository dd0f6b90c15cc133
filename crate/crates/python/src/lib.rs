//! Python bindings: pressure laws, the spectral and BMO helpers, the
//! Lagrangian solver and the config-driven runner.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use torus_stokes::analysis::bmo_seminorm as bmo;
use torus_stokes::cli::{parse_config, Overrides};
use torus_stokes::eulerian::{mollify as mollify_field, Kernel, MollifierSpec};
use torus_stokes::lagrangian::{run_lagrangian as run_lag, LagrangianConfig};
use torus_stokes::pressure;
use torus_stokes::{spectral, Error, ScalarField, TorusGrid};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::InvalidConfig(_) | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Grid holding `len` values in dimension `d`.
fn grid_for(len: usize, d: usize) -> Result<TorusGrid, Error> {
    let n = match d {
        1 => len,
        2 => (len as f64).sqrt().round() as usize,
        _ => return Err(Error::InvalidInput(format!("d must be 1 or 2, got {d}"))),
    };
    if n.pow(d as u32) != len {
        return Err(Error::InvalidInput(format!("{len} values do not fill a d={d} grid")));
    }
    TorusGrid::new(d, n)
}

fn field(values: Vec<f64>, d: usize) -> PyResult<ScalarField> {
    let g = grid_for(values.len(), d).map_err(to_py)?;
    ScalarField::new(g, values).map_err(to_py)
}

#[pyclass(name = "PressureLaw", module = "torus_stokes_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPressureLaw {
    inner: pressure::PressureLaw,
}

#[pymethods]
impl PyPressureLaw {
    #[staticmethod]
    fn linear() -> Self {
        Self { inner: pressure::PressureLaw::linear() }
    }

    #[staticmethod]
    fn gamma(gamma: f64) -> PyResult<Self> {
        Ok(Self { inner: pressure::PressureLaw::gamma(gamma).map_err(to_py)? })
    }

    #[staticmethod]
    fn van_der_waals(temperature: f64) -> PyResult<Self> {
        Ok(Self { inner: pressure::PressureLaw::van_der_waals(temperature).map_err(to_py)? })
    }

    #[staticmethod]
    fn virial(coeffs: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: pressure::PressureLaw::virial(coeffs).map_err(to_py)? })
    }

    #[staticmethod]
    fn oscillatory(q: f64) -> PyResult<Self> {
        Ok(Self { inner: pressure::PressureLaw::oscillatory(q).map_err(to_py)? })
    }

    #[staticmethod]
    fn bump() -> Self {
        Self { inner: pressure::PressureLaw::bump() }
    }

    #[staticmethod]
    fn atan() -> Self {
        Self { inner: pressure::PressureLaw::atan() }
    }

    /// Copy with reference density and potential constants replaced.
    fn with_constants(&self, rho_bar: f64, c1: f64, c2: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.clone().with_constants(rho_bar, c1, c2).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn p(&self, rho: f64) -> PyResult<f64> {
        self.inner.eval_p(rho).map_err(to_py)
    }

    #[pyo3(name = "P", signature = (rho, c = 1.0))]
    fn potential(&self, rho: f64, c: f64) -> PyResult<f64> {
        self.inner.eval_P(rho, c).map_err(to_py)
    }

    /// `(verdict, c_estimate)` of the admissibility check on `[0, rho_max]`.
    #[pyo3(signature = (rho_max, samples = 64))]
    fn check_condition_p(&self, py: Python<'_>, rho_max: f64, samples: usize) -> PyResult<(String, f64)> {
        let law = self.inner.clone();
        let rep = py.detach(move || law.check_condition_p(rho_max, samples)).map_err(to_py)?;
        Ok((rep.verdict.to_string(), rep.c_estimate))
    }

    fn find_r(&self, m: f64, rho0_max: f64) -> PyResult<f64> {
        self.inner.find_r(m, rho0_max).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("PressureLaw({})", self.inner.name)
    }
}

/// Wrap a point onto the unit torus.
#[pyfunction]
fn wrap(x: Vec<f64>) -> PyResult<Vec<f64>> {
    let d = x.len();
    if !(1..=2).contains(&d) {
        return Err(PyValueError::new_err("point must have 1 or 2 coordinates"));
    }
    let p = [x[0], if d == 2 { x[1] } else { 0.0 }];
    let w = torus_stokes::grid::wrap(p, d).map_err(to_py)?;
    Ok(w[..d].to_vec())
}

/// Zero-mean solution of `Δφ = rhs − mean(rhs)` and the discarded mean.
#[pyfunction]
#[pyo3(signature = (rhs, d = 1))]
fn solve_poisson(rhs: Vec<f64>, d: usize) -> PyResult<(Vec<f64>, f64)> {
    let (phi, mean) = spectral::solve_poisson(&field(rhs, d)?);
    Ok((phi.into_values(), mean))
}

#[pyfunction]
#[pyo3(signature = (values, delta, d = 1, kernel = "gaussian"))]
fn mollify(values: Vec<f64>, delta: f64, d: usize, kernel: &str) -> PyResult<Vec<f64>> {
    let kernel = match kernel {
        "gaussian" => Kernel::Gaussian,
        "bump" => Kernel::Bump,
        k => return Err(PyValueError::new_err(format!("unknown kernel {k:?}"))),
    };
    let out = mollify_field(&field(values, d)?, &MollifierSpec { delta, kernel }).map_err(to_py)?;
    Ok(out.into_values())
}

#[pyfunction]
#[pyo3(signature = (values, d = 1, max_level = None))]
fn bmo_seminorm(values: Vec<f64>, d: usize, max_level: Option<usize>) -> PyResult<f64> {
    let f = field(values, d)?;
    let level = max_level.unwrap_or(f.grid().levels() - 1);
    Ok(bmo(&f, level).map_err(to_py)?.seminorm)
}

/// Run the Lagrangian solver; returns a dict of times, eta, sigma and the
/// bounds `m`, `r`.
#[pyfunction]
#[pyo3(signature = (rho0, law, d = 1, tau = 0.05, t_final = 1.0, picard_tol = 1e-8))]
fn run_lagrangian<'py>(
    py: Python<'py>,
    rho0: Vec<f64>,
    law: &PyPressureLaw,
    d: usize,
    tau: f64,
    t_final: f64,
    picard_tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let rho0 = field(rho0, d)?;
    let cfg = LagrangianConfig {
        tau,
        t_final,
        picard_tol,
        ..Default::default()
    };
    let law = law.inner.clone();
    let (states, rep) = py.detach(move || run_lag(&rho0, &law, &cfg)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("times", states.iter().map(|s| s.time).collect::<Vec<_>>())?;
    out.set_item("eta", states.iter().map(|s| s.eta.values().to_vec()).collect::<Vec<_>>())?;
    out.set_item("sigma", states.iter().map(|s| s.sigma.values().to_vec()).collect::<Vec<_>>())?;
    out.set_item("m", rep.m)?;
    out.set_item("r", rep.r)?;
    out.set_item("max_conservation_defect", rep.max_conservation_defect)?;
    Ok(out)
}

/// Run a configuration file; returns `(exit_code, manifest_path)`.
#[pyfunction]
#[pyo3(signature = (path, out = None))]
fn run_config(py: Python<'_>, path: PathBuf, out: Option<PathBuf>) -> PyResult<(i32, String)> {
    let overrides = Overrides {
        out,
        ..Default::default()
    };
    let cfg = parse_config(&path, &overrides).map_err(to_py)?;
    let res = py.detach(move || torus_stokes::cli::run(&cfg)).map_err(to_py)?;
    Ok((res.exit_code, res.manifest.display().to_string()))
}

#[pymodule]
fn torus_stokes_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPressureLaw>()?;
    m.add_function(wrap_pyfunction!(wrap, m)?)?;
    m.add_function(wrap_pyfunction!(solve_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(mollify, m)?)?;
    m.add_function(wrap_pyfunction!(bmo_seminorm, m)?)?;
    m.add_function(wrap_pyfunction!(run_lagrangian, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
