//! Training environments: the single-pair driving task and the multi-herder
//! target-selection task (driving delegated to a frozen Gaussian actor).

use crate::control::obs::{decode_discrete_action, ppo_obs_from, selection_obs_into};
use crate::control::reward::{driving_reward, selection_reward, RewardGains};
use crate::error::{Error, Result};
use crate::episode::EpisodeSpec;
use crate::metrics::containment_fraction;
use crate::rl::policy::GaussianActor;
use crate::sim::{self, NoiseStreams, SimParams, WorldState};
use crate::vec2::Vec2;

/// Result of one environment transition. `obs` is row-major `n_agents × obs_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminal: bool,
    pub truncated: bool,
}

impl EnvStep {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Env {
    type Action: Clone;

    fn obs_dim(&self) -> usize;

    fn n_agents(&self) -> usize {
        1
    }

    /// Starts a new episode; returns the first observation of every agent.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;

    fn step(&mut self, actions: &[Self::Action]) -> Result<EnvStep>;
}

/// Tracks the episode clock and the containment-based stopping rule.
#[derive(Debug, Clone)]
struct Clock {
    k: usize,
    k_max: usize,
    k_contain: usize,
    run_start: Option<usize>,
    chi_star: f64,
}

impl Clock {
    fn new(params: &SimParams, t_max: f64, t_contain: f64, chi_star: f64) -> Self {
        Self {
            k: 0,
            k_max: (t_max / params.dt).round() as usize,
            k_contain: (t_contain / params.dt).round() as usize,
            run_start: None,
            chi_star,
        }
    }

    fn restart(&mut self, chi0: f64) {
        self.k = 0;
        self.run_start = None;
        self.observe(chi0);
    }

    fn observe(&mut self, chi: f64) {
        if chi >= self.chi_star {
            self.run_start.get_or_insert(self.k);
        } else {
            self.run_start = None;
        }
    }

    /// Advance one step and report `(terminal, truncated)` for the new state.
    fn tick(&mut self, chi: f64) -> (bool, bool) {
        self.k += 1;
        self.observe(chi);
        let terminal = self.run_start.is_some_and(|k0| self.k - k0 >= self.k_contain);
        (terminal, !terminal && self.k >= self.k_max)
    }
}

/// Observation encoding for the driving task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrivingObs {
    /// `[T, H]` in metres.
    Absolute,
    /// `[T, T − H] / ρ_0`.
    Normalized,
}

/// One herder, one target.
#[derive(Debug, Clone)]
pub struct DrivingEnv {
    params: SimParams,
    gains: RewardGains,
    obs_kind: DrivingObs,
    clock: Clock,
    state: WorldState,
    noise: NoiseStreams,
}

impl DrivingEnv {
    pub fn new(params: SimParams, gains: RewardGains, obs_kind: DrivingObs, spec: &EpisodeSpec) -> Result<Self> {
        params.validate()?;
        if params.n_herders != 1 || params.n_targets != 1 {
            return Err(Error::Params("driving env needs exactly one herder and one target".into()));
        }
        let clock = Clock::new(&params, spec.t_max, spec.t_contain, spec.chi_star);
        let state = WorldState::new(vec![Vec2::ZERO], vec![Vec2::ZERO]);
        Ok(Self {
            params,
            gains,
            obs_kind,
            clock,
            state,
            noise: NoiseStreams::new(0, 1),
        })
    }

    /// Training defaults: coarse step, no short-range repulsion, 60 s horizon.
    pub fn training(gains: RewardGains, obs_kind: DrivingObs) -> Self {
        Self::new(SimParams::training(1, 1), gains, obs_kind, &EpisodeSpec::driving()).expect("valid defaults")
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    fn observe(&self) -> Vec<f64> {
        let (t, h) = (self.state.target_pos[0], self.state.herder_pos[0]);
        match self.obs_kind {
            DrivingObs::Absolute => vec![t.x, t.y, h.x, h.y],
            DrivingObs::Normalized => ppo_obs_from(t, h, self.params.rho_0).to_vec(),
        }
    }

    fn start(&mut self, seed: u64) -> Vec<f64> {
        self.state = sim::init_episode(&self.params, seed);
        self.noise = NoiseStreams::new(seed, 1);
        self.clock.restart(containment_fraction(&self.state, self.params.rho_g));
        self.observe()
    }

    /// Apply a (box-clamped) velocity for one step.
    pub fn step_control(&mut self, u: Vec2) -> Result<EnvStep> {
        let u = u.clamp_box(self.params.v_max);
        let reward = driving_reward(self.state.target_pos[0], self.state.herder_pos[0], u, &self.gains, self.params.rho_g);
        self.state = sim::advance(&self.state, &[u], &self.params, &mut self.noise)?;
        let (terminal, truncated) = self.clock.tick(containment_fraction(&self.state, self.params.rho_g));
        Ok(EnvStep {
            obs: self.observe(),
            rewards: vec![reward],
            terminal,
            truncated,
        })
    }
}

/// Driving task with the 25-way velocity grid.
#[derive(Debug, Clone)]
pub struct DiscreteDriving(pub DrivingEnv);

impl Env for DiscreteDriving {
    type Action = usize;

    fn obs_dim(&self) -> usize {
        4
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(self.0.start(seed))
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        let u = decode_discrete_action(actions[0], self.0.params.v_max)?;
        self.0.step_control(u)
    }
}

/// Driving task with continuous actions in `v_max` units, clamped to `[-1, 1]²`.
#[derive(Debug, Clone)]
pub struct ContinuousDriving(pub DrivingEnv);

impl Env for ContinuousDriving {
    type Action = Vec<f64>;

    fn obs_dim(&self) -> usize {
        4
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(self.0.start(seed))
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<EnvStep> {
        let a = &actions[0];
        let v = self.0.params.v_max;
        self.0.step_control(Vec2::new(a[0].clamp(-1.0, 1.0) * v, a[1].clamp(-1.0, 1.0) * v))
    }
}

/// Multi-herder target selection. Each agent picks a target index; the frozen driving actor
/// steers toward it for `n_w` simulation steps, during which the global selection reward
/// is accumulated.
#[derive(Debug, Clone)]
pub struct SelectionEnv {
    params: SimParams,
    driver: GaussianActor,
    n_w: usize,
    k_t: f64,
    scale: Option<f64>,
    clock: Clock,
    state: WorldState,
    noise: NoiseStreams,
    selections: Vec<usize>,
    obs_buf: Vec<f64>,
}

impl SelectionEnv {
    pub fn new(
        params: SimParams,
        driver: GaussianActor,
        n_w: usize,
        k_t: f64,
        scale: Option<f64>,
        spec: &EpisodeSpec,
    ) -> Result<Self> {
        params.validate()?;
        if n_w == 0 {
            return Err(Error::Argument("selection period n_w must be >= 1".into()));
        }
        let clock = Clock::new(&params, spec.t_max, spec.t_contain, spec.chi_star);
        let n = params.n_herders;
        Ok(Self {
            driver,
            n_w,
            k_t,
            scale,
            clock,
            state: WorldState::new(vec![Vec2::ZERO; n], vec![Vec2::ZERO; params.n_targets]),
            noise: NoiseStreams::new(0, params.n_targets),
            selections: vec![0; n],
            obs_buf: Vec::new(),
            params,
        })
    }

    /// Training defaults for `N` herders and `M` targets with normalised observations.
    pub fn training(n: usize, m: usize, driver: GaussianActor, n_w: usize, k_t: f64) -> Result<Self> {
        let params = SimParams::training(n, m);
        let scale = Some(params.rho_0);
        Self::new(params, driver, n_w, k_t, scale, &EpisodeSpec::selection())
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    fn observe(&mut self) -> Vec<f64> {
        self.obs_buf.clear();
        for j in 0..self.params.n_herders {
            selection_obs_into(&self.state, j, self.scale, &mut self.obs_buf);
        }
        self.obs_buf.clone()
    }
}

impl Env for SelectionEnv {
    type Action = usize;

    fn obs_dim(&self) -> usize {
        2 * (self.params.n_herders + self.params.n_targets)
    }

    fn n_agents(&self) -> usize {
        self.params.n_herders
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.state = sim::init_episode(&self.params, seed);
        self.noise = NoiseStreams::new(seed, self.params.n_targets);
        self.clock.restart(containment_fraction(&self.state, self.params.rho_g));
        Ok(self.observe())
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        let m = self.params.n_targets;
        if actions.len() != self.params.n_herders {
            return Err(Error::Dimension {
                expected: self.params.n_herders,
                got: actions.len(),
            });
        }
        if let Some(&bad) = actions.iter().find(|&&a| a >= m) {
            return Err(Error::Argument(format!("target index {bad} outside 0..{m}")));
        }
        self.selections.copy_from_slice(actions);
        let mut reward = 0.0;
        let (mut terminal, mut truncated) = (false, false);
        let mut controls = vec![Vec2::ZERO; self.params.n_herders];
        for _ in 0..self.n_w {
            for (j, u) in controls.iter_mut().enumerate() {
                let t = self.state.target_pos[self.selections[j]];
                let h = self.state.herder_pos[j];
                *u = self.driver.mean_control(&ppo_obs_from(t, h, self.params.rho_0), self.params.v_max);
            }
            reward += selection_reward(&self.state, self.k_t, self.params.rho_g);
            self.state = sim::advance(&self.state, &controls, &self.params, &mut self.noise)?;
            (terminal, truncated) = self.clock.tick(containment_fraction(&self.state, self.params.rho_g));
            if terminal || truncated {
                break;
            }
        }
        Ok(EnvStep {
            obs: self.observe(),
            rewards: vec![reward; self.params.n_herders],
            terminal,
            truncated,
        })
    }
}
