//! Closed-loop episodes: the controller interface, the step-by-step trajectory log and
//! the episode runner with containment-based termination.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, CohesionParams};
use crate::control::reward::{driving_reward, selection_reward, RewardGains};
use crate::error::{Error, Result};
use crate::extensions::SigmoidGoal;
use crate::metrics::{containment_fraction, MetricSpec, CHI_STAR};
use crate::sim::{self, NoiseStreams, SimParams, WorldState};
use crate::vec2::Vec2;

/// What a controller outputs at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub controls: Vec<Vec2>,
    /// Target pursued by each herder; `None` when idle.
    pub selections: Vec<Option<usize>>,
}

/// Anything that maps a world snapshot to herder velocities.
pub trait Controller {
    /// Called once before the first step of each episode.
    fn reset(&mut self) {}

    fn decide(&mut self, state: &WorldState, params: &SimParams) -> Result<Decision>;
}

/// One logged step: the state at `t_k` and what was applied from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub state: WorldState,
    pub controls: Vec<Vec2>,
    pub selections: Vec<Option<usize>>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub rho_g: f64,
    pub records: Vec<StepRecord>,
}

impl TrajectoryLog {
    pub fn n_herders(&self) -> usize {
        self.records.first().map(|r| r.state.n_herders()).unwrap_or(0)
    }

    pub fn n_targets(&self) -> usize {
        self.records.first().map(|r| r.state.n_targets()).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.records.last().map(|r| r.state.time).unwrap_or(0.0)
    }

    pub fn chi_series(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| containment_fraction(&r.state, self.rho_g))
            .collect()
    }

    pub fn selection_table(&self) -> Vec<Vec<Option<usize>>> {
        self.records.iter().map(|r| r.selections.clone()).collect()
    }

    /// CSV header for this log's population.
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["time".to_string(), "goal_x".into(), "goal_y".into()];
        for i in 0..self.n_targets() {
            for c in ["x", "y", "vx", "vy"] {
                cols.push(format!("t{i}_{c}"));
            }
        }
        for j in 0..self.n_herders() {
            for c in ["x", "y", "ux", "uy", "sel", "reward"] {
                cols.push(format!("h{j}_{c}"));
            }
        }
        cols.join(",")
    }

    /// One row per step; floats carry 9 significant digits, idle selections are `-1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        let mut row = String::new();
        for r in &self.records {
            row.clear();
            let s = &r.state;
            push_num(&mut row, s.time);
            push_num(&mut row, s.goal_center.x);
            push_num(&mut row, s.goal_center.y);
            for (p, v) in s.target_pos.iter().zip(&s.target_vel) {
                for x in [p.x, p.y, v.x, v.y] {
                    push_num(&mut row, x);
                }
            }
            for j in 0..s.n_herders() {
                let h = s.herder_pos[j];
                let u = r.controls[j];
                for x in [h.x, h.y, u.x, u.y] {
                    push_num(&mut row, x);
                }
                row.push(',');
                match r.selections[j] {
                    Some(i) => write!(row, "{i}").unwrap(),
                    None => row.push_str("-1"),
                }
                push_num(&mut row, r.rewards[j]);
            }
            writeln!(w, "{}", &row[1..])?;
        }
        Ok(())
    }
}

/// Fixed 9-significant-digit float rendering shared by every CSV writer.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.8e}")
    }
}

fn push_num(row: &mut String, x: f64) {
    row.push(',');
    row.push_str(&fmt_num(x));
}

/// Per-herder reward logged alongside each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RewardKind {
    None,
    /// Driving reward of each herder w.r.t. its selected target.
    Driving(RewardGains),
    /// Global selection reward delivered to every herder.
    Selection { k_t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TargetDynamics {
    Nominal,
    Cohesive(CohesionParams),
}

/// Horizon, termination rule and environment variant for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub t_max: f64,
    pub t_contain: f64,
    pub chi_star: f64,
    /// Stop once containment has held for `t_contain`.
    pub early_stop: bool,
    pub reward: RewardKind,
    pub dynamics: TargetDynamics,
    pub goal: Option<SigmoidGoal>,
}

impl EpisodeSpec {
    pub const T_CONTAIN: f64 = 10.0;
    pub const T_MAX_DRIVING: f64 = 60.0;
    pub const T_MAX_SELECTION: f64 = 150.0;

    pub fn driving() -> Self {
        Self {
            t_max: Self::T_MAX_DRIVING,
            t_contain: Self::T_CONTAIN,
            chi_star: CHI_STAR,
            early_stop: true,
            reward: RewardKind::Driving(RewardGains::PPO),
            dynamics: TargetDynamics::Nominal,
            goal: None,
        }
    }

    pub fn selection() -> Self {
        Self {
            t_max: Self::T_MAX_SELECTION,
            reward: RewardKind::Selection { k_t: RewardGains::PPO.k_t },
            ..Self::driving()
        }
    }

    pub fn metric_spec(&self) -> MetricSpec {
        MetricSpec {
            chi_star: self.chi_star,
            t_contain: self.t_contain,
            t_max: self.t_max,
        }
    }
}

/// Initial state for an episode under the given spec.
pub fn initial_state(params: &SimParams, seed: u64, spec: &EpisodeSpec) -> WorldState {
    let mut state = match spec.dynamics {
        TargetDynamics::Nominal => sim::init_episode(params, seed),
        TargetDynamics::Cohesive(_) => baselines::init_cohesive(params, seed),
    };
    if let Some(goal) = &spec.goal {
        state.goal_center = goal.position(0.0);
    }
    state
}

/// Advance the world one step under the spec's target dynamics and goal motion.
pub fn advance(
    state: &WorldState,
    controls: &[Vec2],
    params: &SimParams,
    spec: &EpisodeSpec,
    noise: &mut NoiseStreams,
) -> Result<WorldState> {
    let mut next = match spec.dynamics {
        TargetDynamics::Nominal => sim::advance(state, controls, params, noise)?,
        TargetDynamics::Cohesive(c) => baselines::cohesive_advance(state, controls, params, &c, noise)?,
    };
    if let Some(goal) = &spec.goal {
        next.goal_center = goal.position(next.time);
    }
    Ok(next)
}

fn step_rewards(state: &WorldState, decision: &Decision, params: &SimParams, kind: &RewardKind) -> Vec<f64> {
    let n = state.n_herders();
    match kind {
        RewardKind::None => vec![0.0; n],
        RewardKind::Driving(gains) => (0..n)
            .map(|j| {
                let target = decision.selections[j].unwrap_or(0);
                driving_reward(
                    state.target_pos[target] - state.goal_center,
                    state.herder_pos[j] - state.goal_center,
                    decision.controls[j],
                    gains,
                    params.rho_g,
                )
            })
            .collect(),
        RewardKind::Selection { k_t } => vec![selection_reward(state, *k_t, params.rho_g); n],
    }
}

/// Run one closed-loop episode from the seeded initial condition.
pub fn run_episode<C: Controller + ?Sized>(
    controller: &mut C,
    params: &SimParams,
    seed: u64,
    spec: &EpisodeSpec,
) -> Result<TrajectoryLog> {
    params.validate()?;
    let state = initial_state(params, seed, spec);
    run_episode_from(controller, params, state, seed, spec)
}

/// Same as [`run_episode`] from an explicit initial state.
pub fn run_episode_from<C: Controller + ?Sized>(
    controller: &mut C,
    params: &SimParams,
    mut state: WorldState,
    seed: u64,
    spec: &EpisodeSpec,
) -> Result<TrajectoryLog> {
    state.check_shape(params)?;
    controller.reset();
    let mut noise = NoiseStreams::new(seed, params.n_targets);
    let dt = params.dt;
    let k_max = (spec.t_max / dt).round() as usize;
    let k_contain = (spec.t_contain / dt).round() as usize;
    let mut records = Vec::with_capacity(k_max.min(20_000) + 1);
    let mut run_start: Option<usize> = None;

    for k in 0..=k_max {
        state.time = k as f64 * dt;
        let chi = containment_fraction(&state, params.rho_g);
        let mut decision = controller.decide(&state, params)?;
        if decision.controls.len() != params.n_herders || decision.selections.len() != params.n_herders {
            return Err(Error::Dimension {
                expected: params.n_herders,
                got: decision.controls.len(),
            });
        }
        for u in decision.controls.iter_mut() {
            *u = u.clamp_box(params.v_max);
        }
        let rewards = step_rewards(&state, &decision, params, &spec.reward);

        if chi >= spec.chi_star {
            run_start.get_or_insert(k);
        } else {
            run_start = None;
        }
        let contained = run_start.is_some_and(|k0| k - k0 >= k_contain);
        let done = k == k_max || (spec.early_stop && contained);
        if done {
            // nothing is applied after the final snapshot
            decision.controls.iter_mut().for_each(|u| *u = Vec2::ZERO);
        }
        let next = if done {
            None
        } else {
            Some(advance(&state, &decision.controls, params, spec, &mut noise)?)
        };
        records.push(StepRecord {
            state: state.clone(),
            controls: decision.controls,
            selections: decision.selections,
            rewards,
        });
        match next {
            Some(s) => state = s,
            None => break,
        }
    }
    Ok(TrajectoryLog {
        dt,
        rho_g: params.rho_g,
        records,
    })
}

/// Controller that never moves any herder.
#[derive(Debug, Default, Clone)]
pub struct ZeroController;

impl Controller for ZeroController {
    fn decide(&mut self, state: &WorldState, _params: &SimParams) -> Result<Decision> {
        Ok(Decision {
            controls: vec![Vec2::ZERO; state.n_herders()],
            selections: vec![None; state.n_herders()],
        })
    }
}
