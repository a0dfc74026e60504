//! Python bindings: simulation state, metrics, the heuristic controller and the
//! config-driven batch runner.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use shepherd_core::baselines::{P2PConfig, P2PController};
use shepherd_core::episode::{self, Controller, EpisodeSpec};
use shepherd_core::harness::batch::{run_batch, BatchSummary};
use shepherd_core::harness::config::ExperimentConfig;
use shepherd_core::metrics::{self, EpisodeMetrics};
use shepherd_core::rl::weights::PolicyWeights;
use shepherd_core::sim::{self, NoiseStreams};
use shepherd_core::{Error, Vec2};

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Dimension { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_vecs(points: Vec<(f64, f64)>) -> Vec<Vec2> {
    points.into_iter().map(|(x, y)| Vec2::new(x, y)).collect()
}

fn to_tuples(points: &[Vec2]) -> Vec<(f64, f64)> {
    points.iter().map(|p| (p.x, p.y)).collect()
}

/// Physical and numerical model parameters.
#[pyclass(name = "SimParams", from_py_object)]
#[derive(Clone)]
struct PySimParams {
    inner: sim::SimParams,
}

#[pymethods]
impl PySimParams {
    #[new]
    #[pyo3(signature = (n_herders = 1, n_targets = 1, training = false))]
    fn new(n_herders: usize, n_targets: usize, training: bool) -> Self {
        let inner = if training {
            sim::SimParams::training(n_herders, n_targets)
        } else {
            sim::SimParams::nominal(n_herders, n_targets)
        };
        Self { inner }
    }

    #[getter]
    fn n_herders(&self) -> usize {
        self.inner.n_herders
    }

    #[getter]
    fn n_targets(&self) -> usize {
        self.inner.n_targets
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn rho_g(&self) -> f64 {
        self.inner.rho_g
    }

    #[getter]
    fn v_max(&self) -> f64 {
        self.inner.v_max
    }

    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let p = &self.inner;
        let d = PyDict::new(py);
        d.set_item("zeta", p.zeta)?;
        d.set_item("diffusion", p.diffusion)?;
        d.set_item("lambda", p.lambda)?;
        d.set_item("beta", p.beta)?;
        d.set_item("r_c", p.r_c)?;
        d.set_item("v_max", p.v_max)?;
        d.set_item("rho_0", p.rho_0)?;
        d.set_item("rho_g", p.rho_g)?;
        d.set_item("dt", p.dt)?;
        d.set_item("n_herders", p.n_herders)?;
        d.set_item("n_targets", p.n_targets)?;
        Ok(d)
    }

    /// Copy with some fields replaced, e.g. `p.replace(lambda_=20.0)`.
    #[pyo3(signature = (**kwargs))]
    fn replace(&self, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut p = self.inner.clone();
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                match key.trim_end_matches('_') {
                    "zeta" => p.zeta = v.extract()?,
                    "diffusion" => p.diffusion = v.extract()?,
                    "lambda" => p.lambda = v.extract()?,
                    "beta" => p.beta = v.extract()?,
                    "r_c" => p.r_c = v.extract()?,
                    "v_max" => p.v_max = v.extract()?,
                    "rho_0" => p.rho_0 = v.extract()?,
                    "rho_g" => p.rho_g = v.extract()?,
                    "dt" => p.dt = v.extract()?,
                    other => return Err(PyValueError::new_err(format!("unknown parameter `{other}`"))),
                }
            }
        }
        p.validate().map_err(err)?;
        Ok(Self { inner: p })
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// A stepping simulation: seeded initial condition plus per-target noise streams.
#[pyclass(name = "World")]
struct PyWorld {
    params: sim::SimParams,
    state: sim::WorldState,
    noise: NoiseStreams,
}

#[pymethods]
impl PyWorld {
    #[new]
    fn new(params: &PySimParams, seed: u64) -> PyResult<Self> {
        let params = params.inner.clone();
        params.validate().map_err(err)?;
        let state = sim::init_episode(&params, seed);
        let noise = NoiseStreams::new(seed, params.n_targets);
        Ok(Self { params, state, noise })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.state.time
    }

    #[getter]
    fn herders(&self) -> Vec<(f64, f64)> {
        to_tuples(&self.state.herder_pos)
    }

    #[getter]
    fn targets(&self) -> Vec<(f64, f64)> {
        to_tuples(&self.state.target_pos)
    }

    #[getter]
    fn target_velocities(&self) -> Vec<(f64, f64)> {
        to_tuples(&self.state.target_vel)
    }

    fn set_positions(&mut self, herders: Vec<(f64, f64)>, targets: Vec<(f64, f64)>) -> PyResult<()> {
        let state = sim::WorldState::new(to_vecs(herders), to_vecs(targets));
        state.check_shape(&self.params).map_err(err)?;
        self.state = state;
        Ok(())
    }

    /// Advance one step with the given herder velocities (clamped to the speed box).
    fn step(&mut self, controls: Vec<(f64, f64)>) -> PyResult<()> {
        let controls: Vec<Vec2> = to_vecs(controls).into_iter().map(|u| u.clamp_box(self.params.v_max)).collect();
        if controls.len() != self.params.n_herders {
            return Err(err(Error::Dimension {
                expected: self.params.n_herders,
                got: controls.len(),
            }));
        }
        self.state = sim::advance(&self.state, &controls, &self.params, &mut self.noise).map_err(err)?;
        Ok(())
    }

    /// Heuristic (sector selection + behind-target driving) controls for the current state.
    fn heuristic_controls(&self) -> PyResult<Vec<(f64, f64)>> {
        let mut c = P2PController::new(P2PConfig::default());
        let d = c.decide(&self.state, &self.params).map_err(err)?;
        Ok(to_tuples(&d.controls))
    }

    fn containment(&self) -> f64 {
        metrics::containment_fraction(&self.state, self.params.rho_g)
    }
}

#[pyfunction]
fn long_range_force(target: (f64, f64), herders: Vec<(f64, f64)>, lambda_: f64) -> PyResult<(f64, f64)> {
    let f = sim::long_range_force(Vec2::new(target.0, target.1), &to_vecs(herders), lambda_).map_err(err)?;
    Ok((f.x, f.y))
}

#[pyfunction]
#[pyo3(signature = (chi, dt, chi_star = metrics::CHI_STAR))]
fn gathering_time(chi: Vec<f64>, dt: f64, chi_star: f64) -> PyResult<Option<f64>> {
    metrics::gathering_time(&chi, chi_star, dt).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (chi, dt, t_contain, t_max, chi_star = metrics::CHI_STAR))]
fn settling_time(chi: Vec<f64>, dt: f64, t_contain: f64, t_max: f64, chi_star: f64) -> PyResult<Option<f64>> {
    metrics::settling_time(&chi, chi_star, t_contain, t_max, dt).map_err(err)
}

fn metrics_dict<'py>(py: Python<'py>, m: &EpisodeMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("success", m.success)?;
    d.set_item("gathering_time", m.gathering_time)?;
    d.set_item("settling_time", m.settling_time)?;
    d.set_item("path_length_final", m.path_length_final)?;
    d.set_item("path_length_gathering", m.path_length_gathering)?;
    d.set_item("coop_final", m.coop_final)?;
    d.set_item("coop_gathering", m.coop_gathering)?;
    d.set_item("final_time", m.final_time)?;
    d.set_item("chi", m.chi_series.clone())?;
    Ok(d)
}

/// One seeded episode under the heuristic controller; returns its metrics.
#[pyfunction]
#[pyo3(signature = (params, seed, t_max = EpisodeSpec::T_MAX_SELECTION))]
fn run_heuristic_episode<'py>(py: Python<'py>, params: &PySimParams, seed: u64, t_max: f64) -> PyResult<Bound<'py, PyDict>> {
    let spec = EpisodeSpec {
        t_max,
        reward: episode::RewardKind::None,
        ..EpisodeSpec::selection()
    };
    let mut c = P2PController::new(P2PConfig::default());
    let log = py
        .detach(|| episode::run_episode(&mut c, &params.inner, seed, &spec))
        .map_err(err)?;
    let m = EpisodeMetrics::from_log(&log, &spec.metric_spec()).map_err(err)?;
    metrics_dict(py, &m)
}

/// Flat `key = value` experiment configuration.
#[pyclass(name = "Config")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::parse(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::load(&path).map_err(err)?,
        })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(err)
    }

    fn get(&self, key: &str) -> String {
        self.inner.get(key).to_string()
    }

    fn serialize(&self) -> String {
        self.inner.serialize()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }
}

fn summary_dict<'py>(py: Python<'py>, s: &BatchSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("label", &s.label)?;
    d.set_item("episodes", s.rows.len())?;
    d.set_item("success_rate", s.success_rate())?;
    d.set_item("gathering_rate", s.gathering_rate())?;
    d.set_item("median_t_s", s.median(|r| r.t_s))?;
    d.set_item("median_d_f", s.median(|r| r.d_f))?;
    d.set_item("median_track_frac", s.median(|r| r.track_frac))?;
    Ok(d)
}

/// Runs the configured evaluation batch (writes CSVs under `output_dir`) and returns one
/// summary dict per evaluated stack.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config.inner.clone();
    let summaries = py.detach(|| run_batch(&cfg)).map_err(err)?;
    summaries.iter().map(|s| summary_dict(py, s)).collect()
}

/// Entry names stored in a weight file.
#[pyfunction]
fn weight_entries(path: PathBuf) -> PyResult<Vec<String>> {
    let w = PolicyWeights::load(&path).map_err(err)?;
    Ok(w.names().map(str::to_string).collect())
}

#[pymodule]
fn shepherd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimParams>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(long_range_force, m)?)?;
    m.add_function(wrap_pyfunction!(gathering_time, m)?)?;
    m.add_function(wrap_pyfunction!(settling_time, m)?)?;
    m.add_function(wrap_pyfunction!(run_heuristic_episode, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(weight_entries, m)?)?;
    m.add("CHI_STAR", metrics::CHI_STAR)?;
    Ok(())
}
