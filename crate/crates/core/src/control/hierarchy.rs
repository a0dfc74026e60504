//! Two-layer controller: a selection layer assigns each herder a target, a driving layer
//! turns (herder, target) into a velocity. All observations are built in the goal frame.

use crate::baselines::{p2p_drive, p2p_select, P2PConfig};
use crate::control::obs::{decode_discrete_action, driving_obs_dqn, driving_obs_ppo, selection_obs};
use crate::episode::{Controller, Decision};
use crate::error::{Error, Result};
use crate::extensions::{goal_frame_transform, topological_filter};
use crate::rl::net::DenseNet;
use crate::rl::policy::{argmax, CategoricalActor, GaussianActor};
use crate::sim::{SimParams, WorldState};
use crate::vec2::Vec2;

#[derive(Debug, Clone)]
pub enum DrivingPolicy {
    /// Gaussian actor queried at its mean.
    Ppo(GaussianActor),
    /// Q-network over the 25-action grid.
    Dqn(DenseNet),
    Heuristic(P2PConfig),
}

impl DrivingPolicy {
    fn control(&self, state: &WorldState, herder: usize, target: usize, params: &SimParams) -> Result<Vec2> {
        Ok(match self {
            Self::Ppo(actor) => {
                let m = actor.mean(&driving_obs_ppo(state, herder, target, params.rho_0))?;
                Vec2::new(m[0], m[1]).clamp_box(1.0) * params.v_max
            }
            Self::Dqn(q) => {
                let values = q.forward(&driving_obs_dqn(state, herder, target))?;
                decode_discrete_action(argmax(&values), params.v_max)?
            }
            Self::Heuristic(cfg) => p2p_drive(
                state.herder_pos[herder],
                state.target_pos[target],
                Vec2::ZERO,
                cfg,
                params.v_max,
            ),
        })
    }
}

#[derive(Debug, Clone)]
pub enum SelectionPolicy {
    /// Shared categorical actor; deployment takes the arg-max.
    Mappo(CategoricalActor),
    /// Shared Q-network.
    Dqn(DenseNet),
    P2P,
}

#[derive(Debug, Clone)]
pub struct HierarchicalController {
    pub driving: Option<DrivingPolicy>,
    pub selection: Option<SelectionPolicy>,
    /// Steps between selection queries.
    pub n_w: usize,
    /// Query the selection layer every step.
    pub evaluation: bool,
    /// Topological sensing budget `(other herders, targets)` for the selection layer.
    pub sensing: Option<(usize, usize)>,
    /// Divisor applied to selection observations.
    pub obs_scale: Option<f64>,
    current: Vec<Option<usize>>,
    k: usize,
}

impl HierarchicalController {
    pub const DEFAULT_N_W: usize = 10;

    pub fn new(driving: DrivingPolicy, selection: Option<SelectionPolicy>) -> Self {
        Self {
            driving: Some(driving),
            selection,
            n_w: Self::DEFAULT_N_W,
            evaluation: true,
            sensing: None,
            obs_scale: None,
            current: Vec::new(),
            k: 0,
        }
    }

    /// Controller with nothing loaded; every decision fails until policies are set.
    pub fn unloaded() -> Self {
        Self {
            driving: None,
            selection: None,
            ..Self::new(DrivingPolicy::Heuristic(P2PConfig::default()), None)
        }
    }

    pub fn with_n_w(mut self, n_w: usize) -> Self {
        self.n_w = n_w;
        self.evaluation = false;
        self
    }

    pub fn with_sensing(mut self, n_obs: usize, m_obs: usize) -> Self {
        self.sensing = Some((n_obs, m_obs));
        self
    }

    pub fn with_obs_scale(mut self, scale: f64) -> Self {
        self.obs_scale = Some(scale);
        self
    }

    pub fn selections(&self) -> &[Option<usize>] {
        &self.current
    }

    fn select(&self, local: &WorldState, params: &SimParams) -> Result<Vec<Option<usize>>> {
        let n = local.n_herders();
        let m = local.n_targets();
        if m == 1 {
            return Ok(vec![Some(0); n]);
        }
        let policy = self
            .selection
            .as_ref()
            .ok_or_else(|| Error::State("no selection policy loaded".into()))?;
        if let SelectionPolicy::P2P = policy {
            return Ok(p2p_select(local, params.rho_g));
        }
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let (view, map) = match self.sensing {
                Some((n_obs, m_obs)) => {
                    let v = topological_filter(local, j, n_obs, m_obs)?;
                    (v.state, Some(v.targets))
                }
                None => (local.clone(), None),
            };
            let obs = selection_obs(&view, if map.is_some() { 0 } else { j }, self.obs_scale);
            let choice = match policy {
                SelectionPolicy::Mappo(actor) => actor.greedy(&obs)?,
                SelectionPolicy::Dqn(q) => argmax(&q.forward(&obs)?),
                SelectionPolicy::P2P => unreachable!(),
            };
            let full = match &map {
                Some(targets) => targets[choice],
                None => choice,
            };
            if full >= m {
                return Err(Error::State(format!("selection {full} outside 0..{m}")));
            }
            out.push(Some(full));
        }
        Ok(out)
    }
}

impl Controller for HierarchicalController {
    fn reset(&mut self) {
        self.current.clear();
        self.k = 0;
    }

    fn decide(&mut self, state: &WorldState, params: &SimParams) -> Result<Decision> {
        let driving = self
            .driving
            .as_ref()
            .ok_or_else(|| Error::State("no driving policy loaded".into()))?;
        if self.n_w == 0 {
            return Err(Error::Params("selection period n_w must be >= 1".into()));
        }
        let local = goal_frame_transform(state, state.goal_center);
        let query = self.evaluation || self.k % self.n_w == 0 || self.current.len() != state.n_herders();
        if query {
            self.current = self.select(&local, params)?;
        }
        self.k += 1;
        let mut controls = Vec::with_capacity(state.n_herders());
        for (j, sel) in self.current.iter().enumerate() {
            controls.push(match sel {
                Some(i) => driving.control(&local, j, *i, params)?,
                None => Vec2::ZERO,
            });
        }
        Ok(Decision {
            controls,
            selections: self.current.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unloaded_is_a_state_error() {
        let mut c = HierarchicalController::unloaded();
        let p = SimParams::nominal(1, 1);
        let s = crate::sim::init_episode(&p, 0);
        assert!(matches!(c.decide(&s, &p), Err(Error::State(_))));
    }

    #[test]
    fn single_target_bypasses_selection() {
        let mut c = HierarchicalController::new(DrivingPolicy::Heuristic(P2PConfig::default()), None);
        let p = SimParams::nominal(1, 1);
        let s = crate::sim::init_episode(&p, 0);
        assert_eq!(c.decide(&s, &p).unwrap().selections, vec![Some(0)]);
    }

    #[test]
    fn stored_selection_reused_between_queries() {
        let mut c = HierarchicalController::new(DrivingPolicy::Heuristic(P2PConfig::default()), Some(SelectionPolicy::P2P))
            .with_n_w(5);
        let p = SimParams::nominal(1, 3);
        let mut s = WorldState::new(
            vec![Vec2::new(20.0, 0.0)],
            vec![Vec2::new(15.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(8.0, 0.0)],
        );
        assert_eq!(c.decide(&s, &p).unwrap().selections, vec![Some(0)]);
        s.target_pos[1] = Vec2::new(22.0, 0.0);
        for _ in 1..5 {
            assert_eq!(c.decide(&s, &p).unwrap().selections, vec![Some(0)]);
        }
        assert_eq!(c.decide(&s, &p).unwrap().selections, vec![Some(1)]);
    }

    #[test]
    fn goal_frame_makes_policy_translation_invariant() {
        let mut c = HierarchicalController::new(DrivingPolicy::Ppo(GaussianActor::driving_default(2)), None);
        let p = SimParams::nominal(1, 1);
        let s = crate::sim::init_episode(&p, 4);
        let mut moved = s.clone();
        let shift = Vec2::new(3.0, -7.0);
        moved.goal_center = shift;
        moved.herder_pos[0] += shift;
        moved.target_pos[0] += shift;
        let a = c.decide(&s, &p).unwrap().controls;
        let b = c.decide(&moved, &p).unwrap().controls;
        assert!((a[0] - b[0]).norm() < 1e-12);
    }
}
