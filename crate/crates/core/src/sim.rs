//! Herder/target dynamics.
//!
//! Targets are second-order Langevin particles repelled by herders (inverse-square
//! long-range force) and by any agent inside the safety radius. Herders are single
//! integrators with a box-bounded velocity input. Integration is explicit
//! Euler–Maruyama with one counter-based noise stream per target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// Distances below this are floored in force denominators (non-strict mode).
pub const MIN_DISTANCE: f64 = 1e-6;

/// Physical constants of the herder/target model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Damping coefficient ζ (1/s).
    pub zeta: f64,
    /// Noise strength D.
    pub diffusion: f64,
    /// Herder → target repulsion strength λ.
    pub lambda: f64,
    /// Short-range repulsion strength β.
    pub beta: f64,
    /// Safety radius r_c (m).
    pub r_c: f64,
    /// Per-component herder speed bound v_H (m/s).
    pub v_max: f64,
    /// Radius of the initial placement disk ρ_0 (m).
    pub rho_0: f64,
    /// Goal radius ρ_G (m).
    pub rho_g: f64,
    /// Integration step Δt (s).
    pub dt: f64,
    pub n_herders: usize,
    pub n_targets: usize,
    /// Error out on coincident agents instead of flooring the distance.
    #[serde(default)]
    pub strict: bool,
}

impl SimParams {
    pub const NOMINAL_DT: f64 = 0.01;
    pub const TRAIN_DT: f64 = 0.05;

    /// Nominal validation model.
    pub fn nominal(n_herders: usize, n_targets: usize) -> Self {
        Self {
            zeta: 4.0,
            diffusion: 3.0,
            lambda: 40.0,
            beta: 40.0,
            r_c: 0.1,
            v_max: 12.0,
            rho_0: 25.0,
            rho_g: 5.0,
            dt: Self::NOMINAL_DT,
            n_herders,
            n_targets,
            strict: false,
        }
    }

    /// Training model: coarse step and no short-range repulsion.
    pub fn training(n_herders: usize, n_targets: usize) -> Self {
        Self {
            dt: Self::TRAIN_DT,
            beta: 0.0,
            ..Self::nominal(n_herders, n_targets)
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_herders + self.n_targets
    }

    pub fn validate(&self) -> Result<()> {
        let strengths = [
            ("zeta", self.zeta),
            ("diffusion", self.diffusion),
            ("lambda", self.lambda),
            ("beta", self.beta),
        ];
        for (name, v) in strengths {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Params(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.dt > 0.0) {
            return Err(Error::Params(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.r_c > 0.0) {
            return Err(Error::Params(format!("r_c must be > 0, got {}", self.r_c)));
        }
        if !(self.v_max > 0.0) {
            return Err(Error::Params(format!("v_max must be > 0, got {}", self.v_max)));
        }
        if !(self.rho_g > 0.0 && self.rho_g < self.rho_0) {
            return Err(Error::Params(format!(
                "need 0 < rho_G < rho_0, got rho_G={} rho_0={}",
                self.rho_g, self.rho_0
            )));
        }
        if self.n_targets == 0 {
            return Err(Error::Params("at least one target is required".into()));
        }
        Ok(())
    }
}

/// Snapshot of every agent plus the goal geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub herder_pos: Vec<Vec2>,
    pub target_pos: Vec<Vec2>,
    pub target_vel: Vec<Vec2>,
    pub goal_center: Vec2,
    pub time: f64,
}

impl WorldState {
    /// State with the given positions, resting targets and the goal at the origin.
    pub fn new(herder_pos: Vec<Vec2>, target_pos: Vec<Vec2>) -> Self {
        let m = target_pos.len();
        Self {
            herder_pos,
            target_pos,
            target_vel: vec![Vec2::ZERO; m],
            goal_center: Vec2::ZERO,
            time: 0.0,
        }
    }

    pub fn n_herders(&self) -> usize {
        self.herder_pos.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_pos.len()
    }

    /// Targets first, then herders.
    pub fn all_positions(&self) -> Vec<Vec2> {
        let mut all = Vec::with_capacity(self.n_targets() + self.n_herders());
        all.extend_from_slice(&self.target_pos);
        all.extend_from_slice(&self.herder_pos);
        all
    }

    pub fn is_finite(&self) -> bool {
        self.herder_pos.iter().all(|p| p.is_finite())
            && self.target_pos.iter().all(|p| p.is_finite())
            && self.target_vel.iter().all(|p| p.is_finite())
            && self.goal_center.is_finite()
            && self.time.is_finite()
    }

    /// Closed-disk goal membership.
    pub fn in_goal(&self, p: Vec2, rho_g: f64) -> bool {
        (p - self.goal_center).norm() <= rho_g
    }

    pub fn check_shape(&self, params: &SimParams) -> Result<()> {
        if self.herder_pos.len() != params.n_herders {
            return Err(Error::Dimension {
                expected: params.n_herders,
                got: self.herder_pos.len(),
            });
        }
        if self.target_pos.len() != params.n_targets || self.target_vel.len() != params.n_targets {
            return Err(Error::Dimension {
                expected: params.n_targets,
                got: self.target_pos.len(),
            });
        }
        Ok(())
    }
}

/// Herder → target repulsion `λ Σ_j (T − H_j)/‖T − H_j‖³`, pointing away from every herder.
pub fn long_range_force(target: Vec2, herders: &[Vec2], lambda: f64) -> Result<Vec2> {
    let mut f = Vec2::ZERO;
    for (j, &h) in herders.iter().enumerate() {
        let d = target - h;
        let r = d.norm();
        if r == 0.0 {
            return Err(Error::Singular { a: usize::MAX, b: j });
        }
        f += d / (r * r * r);
    }
    Ok(f * lambda)
}

fn long_range_force_floored(target: Vec2, herders: &[Vec2], lambda: f64) -> Vec2 {
    let mut f = Vec2::ZERO;
    for &h in herders {
        let d = target - h;
        let r = d.norm().max(MIN_DISTANCE);
        f += d / (r * r * r);
    }
    f * lambda
}

/// Short-range repulsion on agent `index` from every other agent within `r_c`.
pub fn short_range_force(index: usize, positions: &[Vec2], beta: f64, r_c: f64) -> Result<Vec2> {
    if index >= positions.len() {
        return Err(Error::Argument(format!(
            "agent index {index} out of range for {} agents",
            positions.len()
        )));
    }
    let xi = positions[index];
    let mut f = Vec2::ZERO;
    for (j, &xj) in positions.iter().enumerate() {
        if j == index {
            continue;
        }
        let d = xi - xj;
        let r = d.norm();
        if r > r_c {
            continue;
        }
        if r == 0.0 {
            return Err(Error::Singular { a: index, b: j });
        }
        f += d / (r * r * r);
    }
    Ok(f * beta)
}

/// Short-range forces on all agents at once.
fn short_range_forces(positions: &[Vec2], beta: f64, r_c: f64, strict: bool) -> Result<Vec<Vec2>> {
    let n = positions.len();
    let mut out = vec![Vec2::ZERO; n];
    if beta == 0.0 {
        return Ok(out);
    }
    let rc2 = r_c * r_c;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = positions[i] - positions[j];
            let r2 = d.norm_sq();
            if r2 > rc2 {
                continue;
            }
            let mut r = r2.sqrt();
            if r < MIN_DISTANCE {
                if strict && r == 0.0 {
                    return Err(Error::Singular { a: i, b: j });
                }
                r = MIN_DISTANCE;
            }
            let f = d * (beta / (r * r * r));
            out[i] += f;
            out[j] -= f;
        }
    }
    Ok(out)
}

/// Per-target Gaussian streams. Each target owns an independent ChaCha stream keyed by the
/// episode seed, so results do not depend on evaluation order.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    streams: Vec<ChaCha8Rng>,
}

impl NoiseStreams {
    pub fn new(seed: u64, n_targets: usize) -> Self {
        let streams = (0..n_targets)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        Self { streams }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    #[inline]
    pub fn normal2(&mut self, target: usize) -> Vec2 {
        let rng = &mut self.streams[target];
        Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }
}

fn blowup(kind: &'static str, index: usize, time: f64) -> Error {
    Error::Blowup { kind, index, time }
}

/// Euler–Maruyama update of all targets; herders are left untouched.
pub fn step_targets(state: &WorldState, params: &SimParams, noise: &mut NoiseStreams) -> Result<WorldState> {
    let mut next = state.clone();
    let accel = target_forces(state, params)?;
    integrate_targets(&mut next, state, &accel, params, noise)?;
    next.time = state.time + params.dt;
    Ok(next)
}

/// Deterministic part of the target acceleration (repulsion only, no damping or noise).
pub fn target_forces(state: &WorldState, params: &SimParams) -> Result<Vec<Vec2>> {
    let m = state.n_targets();
    let short = if params.beta > 0.0 {
        short_range_forces(&state.all_positions(), params.beta, params.r_c, params.strict)?
    } else {
        Vec::new()
    };
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let t = state.target_pos[i];
        let mut f = if params.strict {
            long_range_force(t, &state.herder_pos, params.lambda).map_err(|_| {
                let j = state
                    .herder_pos
                    .iter()
                    .position(|&h| h == t)
                    .unwrap_or(0);
                Error::Singular { a: i, b: m + j }
            })?
        } else {
            long_range_force_floored(t, &state.herder_pos, params.lambda)
        };
        if let Some(s) = short.get(i) {
            f += *s;
        }
        out.push(f);
    }
    Ok(out)
}

pub(crate) fn integrate_targets(
    next: &mut WorldState,
    state: &WorldState,
    accel: &[Vec2],
    params: &SimParams,
    noise: &mut NoiseStreams,
) -> Result<()> {
    let dt = params.dt;
    let kick = params.diffusion * dt.sqrt();
    for i in 0..state.n_targets() {
        let v = state.target_vel[i];
        let mut v_new = v + (accel[i] - v * params.zeta) * dt;
        if kick != 0.0 {
            v_new += noise.normal2(i) * kick;
        }
        let x_new = state.target_pos[i] + v_new * dt;
        if !(v_new.is_finite() && x_new.is_finite()) {
            return Err(blowup("target", i, state.time));
        }
        next.target_vel[i] = v_new;
        next.target_pos[i] = x_new;
    }
    Ok(())
}

/// Single-integrator herder update `H ← H + dt (f_short(H) + u)`. Targets are left untouched.
pub fn step_herders(state: &WorldState, controls: &[Vec2], params: &SimParams) -> Result<WorldState> {
    let mut next = state.clone();
    integrate_herders(&mut next, state, controls, params)?;
    next.time = state.time + params.dt;
    Ok(next)
}

fn integrate_herders(next: &mut WorldState, state: &WorldState, controls: &[Vec2], params: &SimParams) -> Result<()> {
    let n = state.n_herders();
    if controls.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: controls.len(),
        });
    }
    let bound = params.v_max * (1.0 + 1e-12);
    if let Some(j) = controls
        .iter()
        .position(|u| !(u.x.abs() <= bound && u.y.abs() <= bound))
    {
        return Err(Error::Argument(format!(
            "control {j} = ({}, {}) outside the box [-{v}, {v}]^2",
            controls[j].x,
            controls[j].y,
            v = params.v_max
        )));
    }
    let short = if params.beta > 0.0 {
        short_range_forces(&state.all_positions(), params.beta, params.r_c, params.strict)?
    } else {
        Vec::new()
    };
    let m = state.n_targets();
    for j in 0..n {
        let mut vel = controls[j];
        if let Some(s) = short.get(m + j) {
            vel += *s;
        }
        let h = state.herder_pos[j] + vel * params.dt;
        if !h.is_finite() {
            return Err(blowup("herder", j, state.time));
        }
        next.herder_pos[j] = h;
    }
    Ok(())
}

/// One synchronous step of the coupled system: every force is evaluated on `state`.
pub fn advance(
    state: &WorldState,
    controls: &[Vec2],
    params: &SimParams,
    noise: &mut NoiseStreams,
) -> Result<WorldState> {
    let mut next = state.clone();
    let accel = target_forces(state, params)?;
    integrate_herders(&mut next, state, controls, params)?;
    integrate_targets(&mut next, state, &accel, params, noise)?;
    next.time = state.time + params.dt;
    Ok(next)
}

/// Uniform sample from the disk of the given radius.
pub fn sample_disk<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> Vec2 {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    Vec2::new(r * theta.cos(), r * theta.sin())
}

/// Placement stream for agent `agent` (targets first, then herders).
pub(crate) fn placement_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_9a7e_u64);
    rng.set_stream(agent as u64);
    rng
}

/// Initial state: every agent i.i.d. uniform over the disk of radius ρ_0, targets at rest.
pub fn init_episode(params: &SimParams, seed: u64) -> WorldState {
    let m = params.n_targets;
    let target_pos = (0..m)
        .map(|i| sample_disk(&mut placement_rng(seed, i), params.rho_0))
        .collect();
    let herder_pos = (0..params.n_herders)
        .map(|j| sample_disk(&mut placement_rng(seed, m + j), params.rho_0))
        .collect();
    WorldState::new(herder_pos, target_pos)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: Vec2, b: Vec2, tol: f64) {
        assert!((a - b).norm() <= tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn long_range_examples() {
        let f = long_range_force(Vec2::new(1.0, 0.0), &[Vec2::ZERO], 40.0).unwrap();
        assert_close(f, Vec2::new(40.0, 0.0), 1e-12);
        let f = long_range_force(Vec2::new(0.0, 2.0), &[Vec2::ZERO], 40.0).unwrap();
        assert_close(f, Vec2::new(0.0, 10.0), 1e-12);
        let f = long_range_force(Vec2::ZERO, &[Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)], 7.0).unwrap();
        assert_close(f, Vec2::ZERO, 0.0);
    }

    #[test]
    fn long_range_coincident_is_singular() {
        let err = long_range_force(Vec2::new(2.0, 2.0), &[Vec2::new(2.0, 2.0)], 40.0).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn short_range_examples() {
        let far = [Vec2::ZERO, Vec2::new(0.2, 0.0)];
        assert_eq!(short_range_force(0, &far, 40.0, 0.1).unwrap(), Vec2::ZERO);
        let near = [Vec2::ZERO, Vec2::new(0.05, 0.0)];
        assert_close(short_range_force(0, &near, 40.0, 0.1).unwrap(), Vec2::new(-16000.0, 0.0), 1e-8);
        assert_eq!(short_range_force(0, &[Vec2::new(3.0, 1.0)], 40.0, 0.1).unwrap(), Vec2::ZERO);
        assert!(matches!(
            short_range_force(0, &[Vec2::ZERO, Vec2::ZERO], 40.0, 0.1),
            Err(Error::Singular { a: 0, b: 1 })
        ));
    }

    fn quiet(n: usize, m: usize) -> SimParams {
        SimParams {
            diffusion: 0.0,
            lambda: 0.0,
            beta: 0.0,
            ..SimParams::nominal(n, m)
        }
    }

    #[test]
    fn pure_damping_step() {
        let p = quiet(0, 1);
        let mut s = WorldState::new(vec![], vec![Vec2::ZERO]);
        s.target_vel[0] = Vec2::new(1.0, 0.0);
        let mut noise = NoiseStreams::new(0, 1);
        let next = step_targets(&s, &p, &mut noise).unwrap();
        assert_close(next.target_vel[0], Vec2::new(0.96, 0.0), 1e-15);
        assert_close(next.target_pos[0], Vec2::new(0.0096, 0.0), 1e-15);
        assert!((next.time - 0.01).abs() < 1e-15);
    }

    #[test]
    fn herder_behind_pushes_target_away() {
        let p = SimParams {
            diffusion: 0.0,
            ..SimParams::nominal(1, 1)
        };
        let s = WorldState::new(vec![Vec2::new(-2.0, 0.0)], vec![Vec2::ZERO]);
        let mut noise = NoiseStreams::new(0, 1);
        let next = step_targets(&s, &p, &mut noise).unwrap();
        let f = long_range_force(s.target_pos[0], &s.herder_pos, p.lambda).unwrap();
        assert!(next.target_vel[0].x > 0.0);
        assert!(next.target_vel[0].dot(f) > 0.0);
        assert_eq!(next.herder_pos, s.herder_pos);
    }

    #[test]
    fn herder_free_motion_and_contract() {
        let p = quiet(1, 1);
        let s = WorldState::new(vec![Vec2::ZERO], vec![Vec2::new(10.0, 10.0)]);
        let next = step_herders(&s, &[Vec2::new(12.0, 0.0)], &p).unwrap();
        assert_close(next.herder_pos[0], Vec2::new(0.12, 0.0), 1e-15);
        assert_eq!(next.target_pos, s.target_pos);
        assert!(matches!(
            step_herders(&s, &[Vec2::new(12.5, 0.0)], &p),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn herder_pushed_along_separation() {
        let p = SimParams::nominal(2, 1);
        let s = WorldState::new(
            vec![Vec2::ZERO, Vec2::new(0.03, 0.04)],
            vec![Vec2::new(10.0, 0.0)],
        );
        let next = step_herders(&s, &[Vec2::ZERO; 2], &p).unwrap();
        let disp = next.herder_pos[0] - s.herder_pos[0];
        let sep = (s.herder_pos[0] - s.herder_pos[1]).unit().unwrap();
        assert!(disp.norm() > 0.0);
        assert!((disp.unit().unwrap() - sep).norm() < 1e-12);
    }

    #[test]
    fn init_is_seeded_and_inside_disk() {
        let p = SimParams::nominal(2, 5);
        let a = init_episode(&p, 42);
        let b = init_episode(&p, 42);
        assert_eq!(a, b);
        assert_eq!(a.n_herders() + a.n_targets(), 7);
        assert!(a.all_positions().iter().all(|x| x.norm() <= p.rho_0));
        assert!(a.target_vel.iter().all(|v| *v == Vec2::ZERO));
        assert_ne!(a, init_episode(&p, 43));
    }

    #[test]
    fn params_validation() {
        assert!(SimParams::nominal(2, 5).validate().is_ok());
        let bad = SimParams {
            rho_g: 30.0,
            ..SimParams::nominal(1, 1)
        };
        assert!(bad.validate().is_err());
        let bad = SimParams {
            dt: 0.0,
            ..SimParams::nominal(1, 1)
        };
        assert!(bad.validate().is_err());
        let bad = SimParams {
            lambda: -1.0,
            ..SimParams::nominal(1, 1)
        };
        assert!(bad.validate().is_err());
    }
}
