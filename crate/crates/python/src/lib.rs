use std::collections::BTreeMap;

use nalgebra::DVector;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use topeq_core::bounded_solver::{bounded_linear, bounded_nonlinear, LinearOptions, NonlinearOptions};
use topeq_core::conjugacy::{self, Fault, SolutionSample};
use topeq_core::dichotomy::alpha_rejection_scan;
use topeq_core::{
    make_scenario, verify_gdd, ConjugacyEngine, Dichotomy, Error, Perturbation, Sampler, Scenario, Tolerances, Window,
};

create_exception!(topeq, TopeqError, PyException);
create_exception!(topeq, NumericalError, TopeqError);
create_exception!(topeq, RejectedError, TopeqError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::CertificateRejected { .. } | Error::NotApplicable(_) => RejectedError::new_err(e.to_string()),
        e if e.is_numerical() => NumericalError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Serializes through the `json` module so reports come back as dicts.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| TopeqError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn vector(v: Vec<f64>, dim: usize) -> PyResult<DVector<f64>> {
    if v.len() != dim {
        return Err(PyValueError::new_err(format!("expected {dim} entries, got {}", v.len())));
    }
    Ok(DVector::from_vec(v))
}

fn window(w: (i64, i64)) -> PyResult<Window> {
    Window::new(w.0, w.1).map_err(py_err)
}

/// A built-in scenario: linear system, certificate and the perturbation pair.
#[pyclass(name = "Scenario", module = "topeq")]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (name, window, params=None))]
    fn new(name: &str, window: (i64, i64), params: Option<BTreeMap<String, f64>>) -> PyResult<Self> {
        let w = self::window(window)?;
        let inner = make_scenario(name, &params.unwrap_or_default(), w).map_err(py_err)?;
        Ok(PyScenario { inner })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.sys.dim()
    }

    #[getter]
    fn window(&self) -> (i64, i64) {
        let w = self.inner.sys.window();
        (w.n_min, w.n_max)
    }

    fn certificate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.cert)
    }

    /// Row-major `A_n`.
    fn coeff(&self, n: i64) -> PyResult<Vec<Vec<f64>>> {
        let a = self.inner.sys.coeff(n).map_err(py_err)?;
        Ok(a.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    #[pyo3(signature = (tol=1e-9))]
    fn verify_gdd<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &verify_gdd(&self.inner.sys, &self.inner.cert, tol).map_err(py_err)?)
    }

    fn alpha_rejection_scan<'py>(&self, py: Python<'py>, alphas: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let w = self.inner.sys.window();
        to_py(py, &alpha_rejection_scan(&self.inner.cert, w, &alphas).map_err(py_err)?)
    }

    /// Bounded solution of `z_{n+1} = A_n z_n + q_n` for a forcing given on
    /// the window, one row per index.
    fn bounded_linear<'py>(&self, py: Python<'py>, forcing: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
        let dich = self.certified()?;
        let w = dich.window();
        if forcing.len() != w.len() {
            return Err(PyValueError::new_err(format!("forcing needs {} rows, got {}", w.len(), forcing.len())));
        }
        let d = self.dim();
        let q: Vec<DVector<f64>> = forcing.into_iter().map(|row| vector(row, d)).collect::<PyResult<_>>()?;
        let sol = bounded_linear(&dich, &|n| q[w.pos(n)].clone(), &LinearOptions::default()).map_err(py_err)?;
        to_py(py, &sol)
    }

    /// Bounded solution for `q(n, z) = amplitude · sin(z) + offset`.
    #[pyo3(signature = (amplitude, offset, eps=1e-9))]
    fn bounded_sine<'py>(&self, py: Python<'py>, amplitude: f64, offset: f64, eps: f64) -> PyResult<Bound<'py, PyAny>> {
        let dich = self.certified()?;
        let q = |_: i64, z: &DVector<f64>| z.map(|v| amplitude * v.sin() + offset);
        let big_q = |_: i64| amplitude.abs() + offset.abs();
        let r = |_: i64| amplitude.abs();
        let opts = NonlinearOptions { eps, ..Default::default() };
        to_py(py, &bounded_nonlinear(&dich, &q, &big_q, &r, &opts).map_err(py_err)?)
    }

    fn gronwall_bound(&self, k: i64, n: i64, delta: f64) -> PyResult<f64> {
        conjugacy::gronwall_bound(&self.inner.sys, &self.inner.f, k, n, delta).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let (a, b) = self.window();
        format!("Scenario({:?}, window=({a}, {b}), param={})", self.inner.name, self.inner.param)
    }
}

impl PyScenario {
    fn certified(&self) -> PyResult<Dichotomy> {
        Dichotomy::certify(self.inner.sys.clone(), self.inner.cert.clone(), 1e-9).map_err(py_err)
    }
}

/// The maps `H`, `L`, `χ`, `ϑ` between the `f`- and `g`-perturbed systems.
#[pyclass(name = "Engine", module = "topeq")]
struct PyEngine {
    inner: ConjugacyEngine,
}

#[pymethods]
impl PyEngine {
    #[new]
    #[pyo3(signature = (scenario, eps=1e-9, identical=false, fault=None))]
    fn new(scenario: &PyScenario, eps: f64, identical: bool, fault: Option<(i64, f64)>) -> PyResult<Self> {
        let s = &scenario.inner;
        let dich = scenario.certified()?;
        let g = if identical { s.f.clone() } else { s.g.clone() };
        let mut inner = ConjugacyEngine::new(dich, s.f.clone(), g, eps).map_err(py_err)?;
        if let Some((n, offset)) = fault {
            inner = inner.with_fault(Fault { n, offset });
        }
        Ok(PyEngine { inner })
    }

    /// Engine with both perturbations zero.
    #[staticmethod]
    fn unperturbed(scenario: &PyScenario) -> PyResult<Self> {
        let d = scenario.dim();
        let inner =
            ConjugacyEngine::with_default_eps(scenario.certified()?, Perturbation::zero(d), Perturbation::zero(d))
                .map_err(py_err)?;
        Ok(PyEngine { inner })
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta()
    }

    #[getter]
    fn tail_budget(&self) -> f64 {
        self.inner.tail_budget()
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps()
    }

    fn h(&self, n: i64, xi: Vec<f64>) -> PyResult<Vec<f64>> {
        let xi = vector(xi, self.inner.sys().dim())?;
        Ok(self.inner.h_map(n, &xi).map_err(py_err)?.as_slice().to_vec())
    }

    fn l(&self, n: i64, nu: Vec<f64>) -> PyResult<Vec<f64>> {
        let nu = vector(nu, self.inner.sys().dim())?;
        Ok(self.inner.l_map(n, &nu).map_err(py_err)?.as_slice().to_vec())
    }

    fn chi(&self, n: i64, m: i64, xi: Vec<f64>) -> PyResult<Vec<f64>> {
        let xi = vector(xi, self.inner.sys().dim())?;
        Ok(self.inner.chi(n, m, &xi).map_err(py_err)?.as_slice().to_vec())
    }

    fn vartheta(&self, n: i64, m: i64, nu: Vec<f64>) -> PyResult<Vec<f64>> {
        let nu = vector(nu, self.inner.sys().dim())?;
        Ok(self.inner.vartheta(n, m, &nu).map_err(py_err)?.as_slice().to_vec())
    }

    fn gamma(&self, n: i64, ell: i64) -> PyResult<f64> {
        conjugacy::gamma(&self.inner, n, ell).map_err(py_err)
    }

    /// Seeded equivalence and flow-identity checks on the window interior.
    #[pyo3(signature = (seed=0, points=20, solutions=3, span=5, flow_samples=10, round_trip=1e-6, residual=1e-8))]
    #[allow(clippy::too_many_arguments)]
    fn verify<'py>(
        &self,
        py: Python<'py>,
        seed: u64,
        points: usize,
        solutions: usize,
        span: i64,
        flow_samples: usize,
        round_trip: f64,
        residual: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let inner = self.inner.dichotomy().window().interior();
        let d = self.inner.sys().dim();
        let mut sampler = Sampler::new(seed);
        let pts = sampler.points(points, inner, d, 1.0);
        let sols: Vec<SolutionSample> = sampler.solutions(solutions, inner, d, 1.0, span);
        let flows = sampler.flow_samples(flow_samples, inner, d, 1.0, 5);
        let tol = Tolerances { round_trip, residual };
        let mut rep = conjugacy::verify_equivalence(&self.inner, &sols, &pts, tol).map_err(py_err)?;
        rep.extend(conjugacy::verify_flow_identity(&self.inner, &flows, round_trip).map_err(py_err)?);
        to_py(py, &serde_json::json!({"passed": rep.passed(), "summary": rep.summary(), "records": rep.records}))
    }
}

/// Constants of the Hölder estimate; raises `RejectedError` outside its regime.
#[pyfunction]
fn holder_params<'py>(
    py: Python<'py>,
    k: f64,
    big_f: f64,
    big_g: f64,
    alpha: f64,
    m: f64,
    r: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &conjugacy::holder_params(k, big_f, big_g, alpha, m, r).map_err(py_err)?)
}

#[pymodule]
fn topeq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(holder_params, m)?)?;
    m.add("TopeqError", m.py().get_type::<TopeqError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add("RejectedError", m.py().get_type::<RejectedError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
