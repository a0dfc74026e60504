//! Experiment orchestration: configuration, batch evaluation, training runs and plot export.

pub mod batch;
pub mod config;
pub mod plots;
pub mod train;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines::{CohesionParams, P2PConfig, P2PController};
use crate::control::hierarchy::{DrivingPolicy, HierarchicalController, SelectionPolicy};
use crate::episode::{Controller, EpisodeSpec, RewardKind, TargetDynamics};
use crate::error::{Error, Result};
use crate::extensions::SigmoidGoal;
use crate::rl::derive_seed;
use crate::rl::policy::{CategoricalActor, GaussianActor};
use crate::rl::weights::PolicyWeights;
use crate::sim::SimParams;

pub use batch::{run_batch, BatchSummary, EpisodeRow};
pub use config::{ExperimentConfig, Scenario};
pub use plots::export_plots;
pub use train::{train, TrainReport};

pub const CODE_VERSION: &str = concat!("shepherd-core ", env!("CARGO_PKG_VERSION"));

/// Environment variable naming the root directory for relative output paths.
pub const OUT_ENV: &str = "SHEPHERD_OUT";

/// Resolve a configured output path against `$SHEPHERD_OUT` when it is relative.
pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// Provenance lines written at the top of every CSV.
pub fn provenance(cfg: &ExperimentConfig) -> String {
    format!("# config_hash={}\n# code_version={}\n", cfg.hash(), CODE_VERSION)
}

/// Nominal simulation parameters with the configured overrides applied.
pub fn sim_params(cfg: &ExperimentConfig) -> Result<SimParams> {
    let (n0, m0) = cfg.scenario().population();
    let n = cfg.auto::<usize>("sim.n_herders")?.unwrap_or(n0);
    let m = cfg.auto::<usize>("sim.n_targets")?.unwrap_or(m0);
    let p = SimParams {
        diffusion: cfg.float("sim.diffusion"),
        zeta: cfg.float("sim.zeta"),
        lambda: cfg.float("sim.lambda"),
        beta: cfg.float("sim.beta"),
        r_c: cfg.float("sim.r_c"),
        v_max: cfg.float("sim.v_max"),
        rho_0: cfg.float("sim.rho_0"),
        rho_g: cfg.float("sim.rho_g"),
        dt: cfg.float("sim.dt"),
        strict: cfg.flag("sim.strict"),
        ..SimParams::nominal(n, m)
    };
    p.validate()?;
    Ok(p)
}

/// Per-episode parameters: nominal, or with (D, ζ, λ) scaled by independent Gaussian
/// factors `1 + magnitude·z` when robustness testing is on.
pub fn episode_params(cfg: &ExperimentConfig, base: &SimParams, seed: u64) -> SimParams {
    if !cfg.flag("robustness.enabled") {
        return base.clone();
    }
    let mag = cfg.float("robustness.magnitude");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x0b05, 0));
    let mut factor = || {
        let z: f64 = rng.sample(StandardNormal);
        (1.0 + mag * z).max(0.01)
    };
    SimParams {
        diffusion: base.diffusion * factor(),
        zeta: base.zeta * factor(),
        lambda: base.lambda * factor(),
        ..base.clone()
    }
}

pub fn sigmoid_goal(cfg: &ExperimentConfig, params: &SimParams) -> Result<SigmoidGoal> {
    SigmoidGoal::with_ratio(params.v_max, cfg.float("goal.speed_ratio"))
}

pub fn episode_spec(cfg: &ExperimentConfig, params: &SimParams) -> Result<EpisodeSpec> {
    let scenario = cfg.scenario();
    let mut spec = if params.n_targets == 1 {
        EpisodeSpec::driving()
    } else {
        EpisodeSpec::selection()
    };
    spec.reward = RewardKind::None;
    spec.t_contain = cfg.float("episode.t_contain");
    spec.chi_star = cfg.float("episode.chi_star");
    if scenario == Scenario::Scale5v50 {
        spec.t_max = 300.0;
    }
    if cfg.get("dynamics") == "cohesive" {
        spec.dynamics = TargetDynamics::Cohesive(CohesionParams {
            gain: cfg.float("cohesion.gain"),
            init_radius: cfg.float("cohesion.init_radius"),
        });
    }
    if scenario == Scenario::Track || cfg.get("goal.trajectory") == "sigmoid" {
        let goal = sigmoid_goal(cfg, params)?;
        spec.t_max = (goal.duration() + cfg.float("goal.hold")).ceil();
        spec.early_stop = false;
        spec.goal = Some(goal);
    }
    if let Some(t) = cfg.auto::<f64>("episode.t_max")? {
        spec.t_max = t;
    }
    Ok(spec)
}

pub fn p2p_config(cfg: &ExperimentConfig) -> P2PConfig {
    P2PConfig {
        standoff: cfg.float("p2p.standoff"),
        gain: cfg.float("p2p.gain"),
        detour_radius: cfg.float("p2p.detour_radius"),
    }
}

fn load_weights(cfg: &ExperimentConfig, key: &str) -> Result<PolicyWeights> {
    let path = PathBuf::from(cfg.get(key));
    PolicyWeights::load(&path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read weights `{}` ({key}): {io}", path.display())),
        other => other,
    })
}

/// Driving actor stored by the PPO trainer.
pub fn gaussian_from(w: &PolicyWeights) -> Result<GaussianActor> {
    Ok(GaussianActor {
        net: w.net("actor")?.clone(),
        log_std: w.vector("log_std")?.to_vec(),
    })
}

/// Divisor for selection observations of the given algorithm.
pub fn selection_scale(algorithm: &str, params: &SimParams) -> Option<f64> {
    (algorithm == "mappo").then_some(params.rho_0)
}

/// The learned hierarchical stack described by the configuration.
pub fn learned_controller(cfg: &ExperimentConfig, params: &SimParams) -> Result<HierarchicalController> {
    let driving = match cfg.get("policy.driving") {
        "ppo" => DrivingPolicy::Ppo(gaussian_from(&load_weights(cfg, "weights.driving")?)?),
        "dqn" => DrivingPolicy::Dqn(load_weights(cfg, "weights.driving")?.net("q")?.clone()),
        _ => DrivingPolicy::Heuristic(p2p_config(cfg)),
    };
    let algorithm = cfg.get("policy.selection");
    let selection = if params.n_targets == 1 {
        None
    } else {
        Some(match algorithm {
            "mappo" => SelectionPolicy::Mappo(CategoricalActor {
                net: load_weights(cfg, "weights.selection")?.net("actor")?.clone(),
            }),
            "dqn" => SelectionPolicy::Dqn(load_weights(cfg, "weights.selection")?.net("q")?.clone()),
            _ => SelectionPolicy::P2P,
        })
    };
    let mut c = HierarchicalController::new(driving, selection);
    if !cfg.flag("selection.evaluation") {
        c = c.with_n_w(cfg.int("selection.n_w") as usize);
    }
    if let Some(scale) = selection_scale(algorithm, params) {
        c = c.with_obs_scale(scale);
    }
    let default_budget = match cfg.scenario() {
        Scenario::Scale5v50 => Some((1, 5)),
        _ => None,
    };
    let n_obs = cfg.auto::<usize>("sensing.n_obs")?;
    let m_obs = cfg.auto::<usize>("sensing.m_obs")?;
    let budget = match (n_obs, m_obs, default_budget) {
        (Some(n), Some(m), _) => Some((n, m)),
        (None, None, d) => d,
        (n, m, d) => {
            let (dn, dm) = d.unwrap_or((params.n_herders - 1, params.n_targets));
            Some((n.unwrap_or(dn), m.unwrap_or(dm)))
        }
    };
    if let Some((n, m)) = budget {
        c = c.with_sensing(n, m);
    }
    Ok(c)
}

/// Controller prototype cloned for every episode.
#[derive(Debug, Clone)]
pub enum ControllerProto {
    Learned(HierarchicalController),
    Heuristic(P2PController),
}

impl ControllerProto {
    pub fn instantiate(&self) -> Box<dyn Controller + Send> {
        match self {
            Self::Learned(c) => Box::new(c.clone()),
            Self::Heuristic(c) => Box::new(c.clone()),
        }
    }
}

pub fn controller_proto(cfg: &ExperimentConfig, params: &SimParams, heuristic: bool) -> Result<ControllerProto> {
    if heuristic {
        Ok(ControllerProto::Heuristic(P2PController::new(p2p_config(cfg))))
    } else {
        learned_controller(cfg, params).map(ControllerProto::Learned)
    }
}
