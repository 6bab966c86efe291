//! Python bindings. Configurations cross the boundary as JSON-compatible
//! dicts; results come back as dicts built from the same serialisation.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use cogstab::analysis;
use cogstab::config::{NetworkConfig, Scenario, SymmetricConfig};
use cogstab::experiments::{self, Battery};
use cogstab::optimizer::{self, GridSpec};
use cogstab::sim::{self, SimConfig, SimMode};

create_exception!(pycogstab, CogstabError, PyException);
create_exception!(pycogstab, InfeasiblePrimaryError, CogstabError);
create_exception!(pycogstab, UnstableError, CogstabError);

fn err(e: cogstab::Error) -> PyErr {
    let msg = e.to_string();
    match e {
        cogstab::Error::InfeasiblePrimary { .. } => InfeasiblePrimaryError::new_err(msg),
        cogstab::Error::Unstable { .. } => UnstableError::new_err(msg),
        cogstab::Error::Domain(_) | cogstab::Error::Config(_) => PyValueError::new_err(msg),
        cogstab::Error::TooLarge { .. } => CogstabError::new_err(msg),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| CogstabError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    experiments::parse_json(&text, "argument").map_err(|e| PyValueError::new_err(e.to_string()))
}

fn mode(name: &str) -> PyResult<SimMode> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown mode {name:?}")))
}

/// Symmetric network: every secondary shares the same parameters.
#[pyclass(name = "SymmetricConfig", from_py_object)]
#[derive(Clone)]
struct PySymmetric {
    inner: SymmetricConfig,
}

#[pymethods]
impl PySymmetric {
    /// Builds a configuration from a dict of physical parameters.
    #[new]
    fn new(params: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner: SymmetricConfig = from_py(params)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    /// Builds a configuration from normalised quantities (`mu_p_max`, `a`,
    /// `secondary_noise`, `interference`, `pd`, ...). Unset keys take
    /// their defaults.
    #[staticmethod]
    #[pyo3(signature = (**kwargs))]
    fn scenario(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let s: Scenario = match kwargs {
            Some(k) => from_py(k.as_any())?,
            None => Scenario::default(),
        };
        Ok(Self { inner: s.build().map_err(err)? })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    /// Returns a copy with one named parameter changed (`N`, `q`, `Pe`,
    /// `Pf`, `P0`, `P0_dBW`, `a`, `beta`, `Pd`, `Pd-SNR`, `mu_p_max`).
    fn with_param(&self, name: &str, value: f64) -> PyResult<Self> {
        let mut c = self.inner.clone();
        c.set_param(name, value).map_err(err)?;
        Ok(Self { inner: c })
    }

    fn to_network(&self) -> PyNetwork {
        PyNetwork { inner: self.inner.to_network() }
    }

    #[getter]
    fn n_secondary(&self) -> usize {
        self.inner.n_secondary
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q
    }

    #[getter]
    fn p0(&self) -> f64 {
        self.inner.p0
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a()
    }

    fn __repr__(&self) -> String {
        format!("SymmetricConfig(n_secondary={}, q={}, p0={}, pe={}, pf={})", self.inner.n_secondary, self.inner.q, self.inner.p0, self.inner.pe, self.inner.pf)
    }
}

/// Arbitrary (asymmetric) network.
#[pyclass(name = "NetworkConfig", from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: NetworkConfig,
}

#[pymethods]
impl PyNetwork {
    #[new]
    fn new(params: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner: NetworkConfig = from_py(params)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn n_secondary(&self) -> usize {
        self.inner.n()
    }
}

/// Primary service rate with no secondary interference.
#[pyfunction]
fn mu_p_max(cfg: &PySymmetric) -> f64 {
    analysis::mu_p_max_symmetric(&cfg.inner)
}

/// Primary service rate with sensing errors.
#[pyfunction]
fn mu_p(cfg: &PySymmetric) -> f64 {
    analysis::mu_p_imperfect_symmetric(&cfg.inner)
}

/// Primary service rate of an asymmetric network with sensing errors.
#[pyfunction]
fn mu_p_network(net: &PyNetwork) -> PyResult<f64> {
    analysis::mu_p_imperfect_general(&net.inner).map_err(err)
}

/// Per-node secondary throughput at primary load `lambda_p`.
#[pyfunction]
#[pyo3(signature = (cfg, lambda_p, mode = "no_relay_imperfect_sensing"))]
fn secondary_rate(cfg: &PySymmetric, lambda_p: f64, mode: &str) -> PyResult<f64> {
    let m = self::mode(mode)?;
    experiments::analytic_metric(&cfg.inner, m, lambda_p, "secondary_rate").map_err(err)
}

#[pyfunction]
fn optimal_q(cfg: &PySymmetric) -> PyResult<f64> {
    analysis::optimal_q_perfect(&cfg.inner).map_err(err)
}

/// Limits on `a`, `q` and `P0` that keep the primary stable.
#[pyfunction]
fn protection_constraints<'py>(py: Python<'py>, cfg: &PySymmetric, lambda_p: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &analysis::protection_constraints(&cfg.inner, lambda_p).map_err(err)?)
}

#[pyfunction]
fn relay_success_prob(cfg: &PySymmetric) -> PyResult<f64> {
    analysis::relay_success_prob(&cfg.inner).map_err(err)
}

/// Maximum stable primary load when secondaries relay.
#[pyfunction]
fn lambda_p_max_relay(cfg: &PySymmetric) -> PyResult<f64> {
    analysis::lambda_p_max_relay(&cfg.inner).map_err(err)
}

#[pyfunction]
fn relay_benefits<'py>(py: Python<'py>, cfg: &PySymmetric, lambda_p: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &analysis::relay_benefit_conditions(&cfg.inner, lambda_p).map_err(err)?)
}

#[pyfunction]
fn relay_asymmetric<'py>(py: Python<'py>, net: &PyNetwork) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &analysis::relay_asymmetric(&net.inner).map_err(err)?)
}

/// Full closed-form report as a dict.
#[pyfunction]
#[pyo3(signature = (cfg, lambda_p, with_relay = false))]
fn analyze<'py>(py: Python<'py>, cfg: &PySymmetric, lambda_p: f64, with_relay: bool) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &analysis::analyze_symmetric(&cfg.inner, lambda_p, with_relay).map_err(err)?)
}

/// Slot simulation; returns the result dict. Runs without holding the GIL.
#[pyfunction]
#[pyo3(signature = (network, lambda_p, n_slots, seed = 1, mode = "no_relay_imperfect_sensing", replications = 1, jobs = 1))]
fn simulate<'py>(
    py: Python<'py>,
    network: &Bound<'py, PyAny>,
    lambda_p: f64,
    n_slots: u64,
    seed: u64,
    mode: &str,
    replications: u32,
    jobs: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let net = if let Ok(s) = network.cast::<PySymmetric>() {
        s.borrow().inner.to_network()
    } else {
        network.cast::<PyNetwork>()?.borrow().inner.clone()
    };
    let cfg = SimConfig::new(net, lambda_p, n_slots, seed, self::mode(mode)?);
    let r = py.detach(|| sim::simulate(&cfg, replications, jobs)).map_err(err)?;
    to_py(py, &r)
}

/// Grid search for the `(q, P0)` maximising the secondary sum throughput.
#[pyfunction]
#[pyo3(signature = (cfg, lambda_p, q_points = 200, p0_points = 200))]
fn maximize_sum_throughput<'py>(
    py: Python<'py>,
    cfg: &PySymmetric,
    lambda_p: f64,
    q_points: usize,
    p0_points: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let grid = GridSpec { q_points, p0_points, ..GridSpec::default() };
    let c = cfg.inner.clone();
    let o = py.detach(|| optimizer::maximize_sum_throughput(&c, lambda_p, grid)).map_err(err)?;
    to_py(py, &o)
}

/// Runs a validation battery ("standard" or "extended").
#[pyfunction]
#[pyo3(signature = (battery = "standard", seed = 1, jobs = 1))]
fn validate<'py>(py: Python<'py>, battery: &str, seed: u64, jobs: usize) -> PyResult<Bound<'py, PyAny>> {
    let b: Battery = battery.parse().map_err(PyValueError::new_err)?;
    let report = py.detach(|| experiments::run_battery(b, seed, jobs));
    to_py(py, &report)
}

#[pymodule]
fn pycogstab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("CogstabError", m.py().get_type::<CogstabError>())?;
    m.add("InfeasiblePrimaryError", m.py().get_type::<InfeasiblePrimaryError>())?;
    m.add("UnstableError", m.py().get_type::<UnstableError>())?;
    m.add_class::<PySymmetric>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(mu_p_max, m)?)?;
    m.add_function(wrap_pyfunction!(mu_p, m)?)?;
    m.add_function(wrap_pyfunction!(mu_p_network, m)?)?;
    m.add_function(wrap_pyfunction!(secondary_rate, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_q, m)?)?;
    m.add_function(wrap_pyfunction!(protection_constraints, m)?)?;
    m.add_function(wrap_pyfunction!(relay_success_prob, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_p_max_relay, m)?)?;
    m.add_function(wrap_pyfunction!(relay_benefits, m)?)?;
    m.add_function(wrap_pyfunction!(relay_asymmetric, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(maximize_sum_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
