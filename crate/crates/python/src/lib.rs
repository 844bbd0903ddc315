use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dopplerfg::bounds::bounds_sweep;
use dopplerfg::channel::PriorSpec;
use dopplerfg::codec::bundled_code;
use dopplerfg::harness::{self, Backend, ExperimentConfig, Scenario, Setup};
use dopplerfg::rng::{Role, StreamKey};

fn err(e: dopplerfg::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Carrier phase θ, frequency offset ω and its rate ε.
#[pyclass(name = "ChannelParams", from_py_object)]
#[derive(Clone, Copy)]
struct PyChannelParams {
    #[pyo3(get, set)]
    theta: f64,
    #[pyo3(get, set)]
    omega: f64,
    #[pyo3(get, set)]
    epsilon: f64,
}

impl From<dopplerfg::channel::ChannelParams> for PyChannelParams {
    fn from(p: dopplerfg::channel::ChannelParams) -> Self {
        Self {
            theta: p.theta,
            omega: p.omega,
            epsilon: p.epsilon,
        }
    }
}

#[pymethods]
impl PyChannelParams {
    #[new]
    fn new(theta: f64, omega: f64, epsilon: f64) -> Self {
        Self {
            theta,
            omega,
            epsilon,
        }
    }

    /// Unwrapped phase θ + ωk + εk².
    fn phase(&self, k: usize) -> f64 {
        dopplerfg::channel::ChannelParams::new(self.theta, self.omega, self.epsilon)
            .unwrapped_phase(k)
    }

    fn __repr__(&self) -> String {
        format!(
            "ChannelParams(theta={}, omega={}, epsilon={})",
            self.theta, self.omega, self.epsilon
        )
    }
}

/// Experiment configuration keyed by the flat `section.name` keys.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (scenario = "mse"))]
    fn new(scenario: &str) -> PyResult<Self> {
        let s: Scenario = scenario.parse().map_err(err)?;
        Ok(Self {
            inner: ExperimentConfig::for_scenario(s),
        })
    }

    #[staticmethod]
    fn keys() -> Vec<&'static str> {
        harness::KEYS.to_vec()
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let text = value.str()?.to_string();
        let text = match text.as_str() {
            "True" => "true".to_string(),
            "False" => "false".to_string(),
            _ => text,
        };
        self.inner.set(key, &text).map_err(err)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner
            .get(key)
            .ok_or_else(|| PyValueError::new_err(format!("unknown key {key}")))
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }
}

/// Runs the configured scenario and returns its rows as dicts.
#[pyfunction]
fn run<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config.inner.clone();
    let rows = py.detach(|| harness::run(&cfg)).map_err(err)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("scenario", &r.scenario)?;
            d.set_item("snr_db", r.snr_db)?;
            d.set_item("param", r.param)?;
            d.set_item("index", r.index)?;
            d.set_item("metric", &r.metric)?;
            d.set_item("value", r.value)?;
            d.set_item("n_trials", r.n_trials)?;
            d.set_item("std_error", r.std_error)?;
            d.set_item("fingerprint", &r.fingerprint)?;
            d.set_item("seed", r.seed)?;
            Ok(d)
        })
        .collect()
}

/// Runs the configured scenario and returns the CSV text.
#[pyfunction]
fn run_csv(py: Python<'_>, config: &PyConfig) -> PyResult<String> {
    let cfg = config.inner.clone();
    let rows = py.detach(|| harness::run(&cfg)).map_err(err)?;
    Ok(harness::csv_string(&rows, &cfg))
}

/// JCRB and WBCRB diagonals (θ, ω, ε) at one SNR.
#[pyfunction]
#[pyo3(signature = (snr_db, frame_len = 534, omega_max = 0.01, epsilon_max = 1e-5, h = 1.0))]
fn bounds<'py>(
    py: Python<'py>,
    snr_db: f64,
    frame_len: usize,
    omega_max: f64,
    epsilon_max: f64,
    h: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let prior = PriorSpec::new(omega_max, epsilon_max).map_err(err)?;
    let r = bounds_sweep(&[snr_db], frame_len, &prior, h)
        .map_err(err)?
        .remove(0);
    let d = PyDict::new(py);
    d.set_item("jcrb", r.jcrb_diag().to_vec())?;
    d.set_item("wbcrb", r.wbcrb_diag().to_vec())?;
    d.set_item("warnings", r.warnings)?;
    Ok(d)
}

/// Simulates burst `burst` of `config` at `snr_db` for one node and runs the
/// configured estimator once. Returns (truth, estimate).
#[pyfunction]
#[pyo3(signature = (config, snr_db, burst = 0))]
fn estimate(
    py: Python<'_>,
    config: &PyConfig,
    snr_db: f64,
    burst: u64,
) -> PyResult<(PyChannelParams, PyChannelParams)> {
    let cfg = config.inner.clone();
    py.detach(|| {
        let setup = Setup::new(&cfg)?;
        let backend = Backend::new(&cfg, &setup)?;
        let b = harness::simulate_burst(&cfg, &setup, snr_db, burst, 1)?;
        let mut rng = StreamKey::new(cfg.seed, burst, 0, Role::Estimator).rng();
        let est = backend.estimate_once(
            &b.observations[0],
            &b.truth[0],
            &setup.semi_data_aided_incoming(),
            setup.preamble.len(),
            &mut rng,
        )?;
        Ok((b.truth[0].into(), est.into()))
    })
    .map_err(err)
}

/// Belief-propagation decoding with the bundled (3,6) code. `llrs` are
/// log P(0)/P(1) per coded bit. Returns (info bits as bytes, converged,
/// iterations).
#[pyfunction]
#[pyo3(signature = (llrs, max_iters = 50))]
fn decode(llrs: Vec<f64>, max_iters: usize) -> PyResult<(Vec<u8>, bool, usize)> {
    let code = bundled_code();
    if llrs.len() != code.n() {
        return Err(PyValueError::new_err(format!(
            "expected {} LLRs, got {}",
            code.n(),
            llrs.len()
        )));
    }
    let b = code.decode(&llrs, max_iters);
    Ok((
        code.extract_info(&b.hard_decision()),
        b.converged,
        b.iterations,
    ))
}

/// Encodes `info` (252 bits) with the bundled code; the codeword is bytes.
#[pyfunction]
fn encode(info: Vec<u8>) -> PyResult<Vec<u8>> {
    bundled_code().encode(&info).map_err(err)
}

/// Least-squares θ + ωk + εk² fit of unwrapped phases starting at index 0.
#[pyfunction]
fn quadratic_fit(phases: Vec<f64>) -> PyResult<PyChannelParams> {
    let f = dopplerfg::fit::quadratic_fit(&phases, 0).map_err(err)?;
    Ok(PyChannelParams::new(
        f.theta_hat,
        f.omega_hat,
        f.epsilon_hat,
    ))
}

#[pymodule]
#[pyo3(name = "dopplerfg")]
fn dopplerfg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChannelParams>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_csv, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_fit, m)?)?;
    Ok(())
}
