//! Python bindings: build scenarios, run simulations, and query the
//! closed-form cost model from Python.
//!
//! The module mirrors the library surface: `Scenario` wraps a validated
//! config (presets included), `run()` executes it and returns a `RunResult`
//! with the audited metrics, the rendered trace and the summary text.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use manetsim::analytics::render_analytic_table;
use manetsim::experiment::{sweep as run_sweep, SweepParams};
use manetsim::runner::{run_scenario, RunOutput};
use manetsim::scenario::{preset, IdsMode, ScenarioSpec, PRESET_NAMES};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(name: &str) -> PyResult<IdsMode> {
    match name {
        "none" => Ok(IdsMode::None),
        "watchdog" => Ok(IdsMode::Watchdog),
        "selective" => Ok(IdsMode::Selective),
        other => Err(value_err(format!("unknown ids mode '{other}'"))),
    }
}

/// A simulation scenario (config schema v1).
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    spec: ScenarioSpec,
}

#[pymethods]
impl Scenario {
    /// Load a shipped preset by name.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        preset(name)
            .map(|spec| Self { spec })
            .ok_or_else(|| value_err(format!("unknown preset '{name}'")))
    }

    /// Parse a TOML config.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ScenarioSpec::from_toml(text)
            .map(|spec| Self { spec })
            .map_err(value_err)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.spec.to_toml().map_err(value_err)
    }

    /// One diagnostic string per violated rule; empty means runnable.
    fn validate(&self) -> Vec<String> {
        self.spec.validate().iter().map(|d| d.to_string()).collect()
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.spec.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.spec.seed = seed;
    }

    #[getter]
    fn ids_mode(&self) -> &'static str {
        self.spec.ids.mode.label()
    }

    #[setter]
    fn set_ids_mode(&mut self, mode: &str) -> PyResult<()> {
        self.spec.ids.mode = parse_mode(mode)?;
        Ok(())
    }

    #[getter]
    fn baseline_loss(&self) -> f64 {
        self.spec.medium.baseline_loss
    }

    #[setter]
    fn set_baseline_loss(&mut self, loss: f64) {
        self.spec.medium.baseline_loss = loss;
    }

    #[getter]
    fn cluster_size(&self) -> u64 {
        self.spec.ids.cluster_size
    }

    #[setter]
    fn set_cluster_size(&mut self, l: u64) {
        self.spec.ids.cluster_size = l;
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name='{}', seed={}, ids_mode='{}')",
            self.spec.name,
            self.spec.seed,
            self.spec.ids.mode.label()
        )
    }
}

/// One raised alarm.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Alarm {
    #[pyo3(get)]
    accused: u32,
    #[pyo3(get)]
    loss_percent: f64,
    #[pyo3(get)]
    detection_time: f64,
    #[pyo3(get)]
    scheme: String,
}

#[pymethods]
impl Alarm {
    fn __repr__(&self) -> String {
        format!(
            "Alarm(accused={}, loss_percent={:.2}, detection_time={:.2}, scheme='{}')",
            self.accused, self.loss_percent, self.detection_time, self.scheme
        )
    }
}

/// Audited metrics plus rendered outputs of one run.
#[pyclass]
struct RunResult {
    output: RunOutput,
}

#[pymethods]
impl RunResult {
    #[getter]
    fn scheme(&self) -> String {
        self.output.metrics.scheme.clone()
    }

    #[getter]
    fn sent(&self) -> u64 {
        self.output.metrics.sent
    }

    #[getter]
    fn delivered(&self) -> u64 {
        self.output.metrics.delivered
    }

    #[getter]
    fn dropped_adversary(&self) -> u64 {
        self.output.metrics.dropped_adversary
    }

    #[getter]
    fn dropped_baseline(&self) -> u64 {
        self.output.metrics.dropped_baseline
    }

    #[getter]
    fn in_flight(&self) -> u64 {
        self.output.metrics.in_flight
    }

    #[getter]
    fn pdr(&self) -> Option<f64> {
        self.output.metrics.pdr()
    }

    #[getter]
    fn listen_events(&self) -> u64 {
        self.output.metrics.listen_events
    }

    #[getter]
    fn detection_time(&self) -> Option<f64> {
        self.output.metrics.detection_time
    }

    #[getter]
    fn stalled(&self) -> bool {
        self.output.metrics.stalled
    }

    #[getter]
    fn alarms(&self) -> Vec<Alarm> {
        self.output
            .metrics
            .alarms
            .iter()
            .map(|a| Alarm {
                accused: a.accused.0,
                loss_percent: a.loss_percent,
                detection_time: a.detection_time,
                scheme: a.scheme.label().to_string(),
            })
            .collect()
    }

    #[getter]
    fn trace(&self) -> String {
        self.output.trace_text.clone()
    }

    #[getter]
    fn summary(&self) -> String {
        self.output.summary_text.clone()
    }

    /// Write trace.txt, metrics.csv and summary.txt into `directory`.
    fn write_outputs(&self, directory: &str) -> PyResult<()> {
        self.output
            .write_to_dir(std::path::Path::new(directory))
            .map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(scheme='{}', sent={}, delivered={}, listen_events={})",
            self.output.metrics.scheme,
            self.output.metrics.sent,
            self.output.metrics.delivered,
            self.output.metrics.listen_events
        )
    }
}

/// Run a scenario to quiescence.
#[pyfunction]
fn run(scenario: &Scenario) -> PyResult<RunResult> {
    run_scenario(&scenario.spec)
        .map(|output| RunResult { output })
        .map_err(value_err)
}

/// Shipped preset names.
#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    PRESET_NAMES.to_vec()
}

/// Watchdog cost model: n - 2.
#[pyfunction]
fn watchdog_listens(n: u64) -> PyResult<i64> {
    manetsim::analytics::watchdog_listens(n).map_err(value_err)
}

/// Published selective cost formula l*(n/l - 2) + 2*(l - 2).
#[pyfunction]
fn selective_listens_published_formula(n: u64, l: u64) -> PyResult<i64> {
    manetsim::analytics::selective_listens_published_formula(n, l).map_err(value_err)
}

/// Descriptive fit 3*(n/l) + 2*(l - 2) - 6 for the published table.
#[pyfunction]
fn selective_listens_table_fit(n: u64, l: u64) -> PyResult<i64> {
    manetsim::analytics::selective_listens_table_fit(n, l).map_err(value_err)
}

/// The rendered cost-model comparison table.
#[pyfunction]
#[pyo3(signature = (explain = false))]
fn analytic_table(explain: bool) -> String {
    render_analytic_table(explain)
}

/// Run a sweep and return the CSV text.
#[pyfunction]
fn sweep(
    n_values: Vec<u32>,
    l_values: Vec<u64>,
    seeds: Vec<u64>,
    schemes: Vec<String>,
) -> PyResult<String> {
    let schemes = schemes
        .iter()
        .map(|s| parse_mode(s))
        .collect::<PyResult<Vec<_>>>()?;
    let params = SweepParams {
        n_values,
        l_values,
        seeds,
        schemes,
    };
    let out = run_sweep(&params).map_err(value_err)?;
    if !out.failures.is_empty() {
        return Err(value_err(format!("sweep cells failed: {:?}", out.failures)));
    }
    Ok(out.csv)
}

#[pymodule]
fn manetsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<RunResult>()?;
    m.add_class::<Alarm>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(watchdog_listens, m)?)?;
    m.add_function(wrap_pyfunction!(selective_listens_published_formula, m)?)?;
    m.add_function(wrap_pyfunction!(selective_listens_table_fit, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_table, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
