//! Hand-designed comparison controller and the cohesive-target variant of the dynamics.
//!
//! The heuristic partitions the plane into angular sectors about the goal, one per herder,
//! anchored to the herders' current bearings. Each herder chases the outside target in its
//! sector that is farthest from the goal and drives it from behind at a fixed standoff.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::episode::{Controller, Decision};
use crate::error::{Error, Result};
use crate::extensions::goal_frame_transform;
use crate::sim::{self, NoiseStreams, SimParams, WorldState};
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P2PConfig {
    /// Distance kept behind the driven target, away from the goal.
    pub standoff: f64,
    /// Proportional gain toward the driving point (1/s).
    pub gain: f64,
    /// Radius of the circle used to get around a target approached from the goal side.
    pub detour_radius: f64,
}

impl Default for P2PConfig {
    fn default() -> Self {
        Self {
            standoff: 1.0,
            gain: 10.0,
            detour_radius: 3.0,
        }
    }
}

impl P2PConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.standoff > 0.0) || !(self.gain > 0.0) || !(self.detour_radius > 0.0) {
            return Err(Error::Params("P2P standoff, gain and detour radius must be > 0".into()));
        }
        Ok(())
    }
}

fn angular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Per-herder target choice; `None` when no target is left outside the goal.
pub fn p2p_select(state: &WorldState, rho_g: f64) -> Vec<Option<usize>> {
    let g = state.goal_center;
    let outside: Vec<usize> = (0..state.n_targets())
        .filter(|&i| !state.in_goal(state.target_pos[i], rho_g))
        .collect();
    let bearings: Vec<f64> = state.herder_pos.iter().map(|&h| (h - g).angle()).collect();
    let radius = |i: usize| state.target_pos[i].dist(g);

    let n = state.n_herders();
    let mut choice: Vec<Option<usize>> = vec![None; n];
    for &i in &outside {
        let theta = (state.target_pos[i] - g).angle();
        let owner = (0..n)
            .min_by(|&a, &b| angular_gap(theta, bearings[a]).total_cmp(&angular_gap(theta, bearings[b])))
            .expect("at least one herder");
        if choice[owner].is_none_or(|c| radius(i) > radius(c)) {
            choice[owner] = Some(i);
        }
    }
    let mut claimed: Vec<bool> = vec![false; state.n_targets()];
    for c in choice.iter().flatten() {
        claimed[*c] = true;
    }
    for slot in choice.iter_mut().filter(|c| c.is_none()) {
        let spare = outside
            .iter()
            .copied()
            .filter(|&i| !claimed[i])
            .max_by(|&a, &b| radius(a).total_cmp(&radius(b)).then(b.cmp(&a)));
        if let Some(i) = spare {
            claimed[i] = true;
            *slot = Some(i);
        }
    }
    choice
}

/// Proportional velocity toward the point `standoff` behind the target (seen from the
/// goal), clamped to the control box. Zero when the target sits on the goal center.
pub fn behind_target_drive(herder: Vec2, target: Vec2, goal: Vec2, standoff: f64, gain: f64, v_max: f64) -> Vec2 {
    match (target - goal).unit() {
        Some(e) => ((target + e * standoff - herder) * gain).clamp_box(v_max),
        None => Vec2::ZERO,
    }
}

/// Driving command including the detour: a herder on the goal side of its target first
/// circles around it instead of pushing it outward.
pub fn p2p_drive(herder: Vec2, target: Vec2, goal: Vec2, cfg: &P2PConfig, v_max: f64) -> Vec2 {
    let Some(e) = (target - goal).unit() else {
        return Vec2::ZERO;
    };
    let p = herder - target;
    let along = p.dot(e);
    if along >= 0.0 {
        return behind_target_drive(herder, target, goal, cfg.standoff, cfg.gain, v_max);
    }
    let side = if e.perp().dot(p) >= 0.0 { 1.0 } else { -1.0 };
    let waypoint = target + (e.perp() * side + e * 0.5) * cfg.detour_radius;
    ((waypoint - herder) * cfg.gain).clamp_box(v_max)
}

/// Full heuristic stack: sector-based selection every step plus behind-target driving.
#[derive(Debug, Clone, Default)]
pub struct P2PController {
    pub config: P2PConfig,
}

impl P2PController {
    pub fn new(config: P2PConfig) -> Self {
        Self { config }
    }
}

impl Controller for P2PController {
    fn decide(&mut self, state: &WorldState, params: &SimParams) -> Result<Decision> {
        let local = goal_frame_transform(state, state.goal_center);
        let selections = p2p_select(&local, params.rho_g);
        let controls = selections
            .iter()
            .enumerate()
            .map(|(j, sel)| match sel {
                Some(i) => p2p_drive(local.herder_pos[j], local.target_pos[*i], Vec2::ZERO, &self.config, params.v_max),
                None => Vec2::ZERO,
            })
            .collect();
        Ok(Decision { controls, selections })
    }
}

/// Linear attraction of every target toward the targets' center of mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohesionParams {
    pub gain: f64,
    pub init_radius: f64,
}

impl Default for CohesionParams {
    fn default() -> Self {
        Self {
            gain: 1.0,
            init_radius: 2.0,
        }
    }
}

fn cohesion_forces(state: &WorldState, c: &CohesionParams) -> Vec<Vec2> {
    let m = state.n_targets();
    if m == 0 || c.gain == 0.0 {
        return vec![Vec2::ZERO; m];
    }
    let com = state.target_pos.iter().fold(Vec2::ZERO, |a, &p| a + p) / m as f64;
    state.target_pos.iter().map(|&p| (com - p) * c.gain).collect()
}

/// Target update with the cohesion term added to the nominal acceleration.
pub fn cohesive_target_step(
    state: &WorldState,
    params: &SimParams,
    c: &CohesionParams,
    noise: &mut NoiseStreams,
) -> Result<WorldState> {
    cohesive_advance(state, &vec![Vec2::ZERO; state.n_herders()], params, c, noise)
}

/// Synchronous step of herders and cohesive targets.
pub fn cohesive_advance(
    state: &WorldState,
    controls: &[Vec2],
    params: &SimParams,
    c: &CohesionParams,
    noise: &mut NoiseStreams,
) -> Result<WorldState> {
    let mut accel = sim::target_forces(state, params)?;
    for (a, f) in accel.iter_mut().zip(cohesion_forces(state, c)) {
        *a += f;
    }
    let mut next = sim::step_herders(state, controls, params)?;
    sim::integrate_targets(&mut next, state, &accel, params, noise)?;
    Ok(next)
}

/// Targets in a disk of radius 2 around a random center, herders as in the nominal case.
pub fn init_cohesive(params: &SimParams, seed: u64) -> WorldState {
    init_cohesive_with(params, seed, CohesionParams::default().init_radius)
}

pub fn init_cohesive_with(params: &SimParams, seed: u64, radius: f64) -> WorldState {
    let mut state = sim::init_episode(params, seed);
    let mut rng = sim::placement_rng(seed, params.n_agents());
    let center = sim::sample_disk(&mut rng, (params.rho_0 - radius).max(0.0));
    for (i, p) in state.target_pos.iter_mut().enumerate() {
        *p = center + sim::sample_disk(&mut sim::placement_rng(seed, i), radius);
    }
    state
}
