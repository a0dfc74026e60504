use crate::error::{arg, Result};
use crate::sim::WorldState;
use crate::vec2::Vec2;

/// Size of the 5×5 discrete velocity grid.
pub const N_DISCRETE_ACTIONS: usize = 25;
const BINS_PER_AXIS: usize = 5;
const BIN_FRACTIONS: [f64; BINS_PER_AXIS] = [-1.0, -0.5, 0.0, 0.5, 1.0];

/// `[T_x, T_y, H_x, H_y]` in absolute coordinates.
pub fn driving_obs_dqn(state: &WorldState, herder: usize, target: usize) -> [f64; 4] {
    let t = state.target_pos[target];
    let h = state.herder_pos[herder];
    [t.x, t.y, h.x, h.y]
}

/// `[T, T − H] / ρ_0`.
pub fn driving_obs_ppo(state: &WorldState, herder: usize, target: usize, rho_0: f64) -> [f64; 4] {
    ppo_obs_from(state.target_pos[target], state.herder_pos[herder], rho_0)
}

#[inline]
pub(crate) fn ppo_obs_from(t: Vec2, h: Vec2, rho_0: f64) -> [f64; 4] {
    let r = t - h;
    [t.x / rho_0, t.y / rho_0, r.x / rho_0, r.y / rho_0]
}

/// Row-major decode of a grid index: `vx` bin = `index / 5`, `vy` bin = `index % 5`.
pub fn decode_discrete_action(index: usize, v_max: f64) -> Result<Vec2> {
    if index >= N_DISCRETE_ACTIONS {
        return arg(format!("action index {index} outside 0..{N_DISCRETE_ACTIONS}"));
    }
    Ok(Vec2::new(
        BIN_FRACTIONS[index / BINS_PER_AXIS] * v_max,
        BIN_FRACTIONS[index % BINS_PER_AXIS] * v_max,
    ))
}

/// Inverse of [`decode_discrete_action`] for velocities on the grid.
pub fn encode_discrete_action(u: Vec2, v_max: f64) -> Option<usize> {
    let bin = |c: f64| {
        BIN_FRACTIONS
            .iter()
            .position(|&f| (f * v_max - c).abs() <= 1e-9 * v_max.max(1.0))
    };
    Some(bin(u.x)? * BINS_PER_AXIS + bin(u.y)?)
}

/// Ego-centric layout: own position, the other herders in index order, then every target.
/// Coordinates are divided by `scale` when given.
pub fn selection_obs(state: &WorldState, herder: usize, scale: Option<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * (state.n_herders() + state.n_targets()));
    selection_obs_into(state, herder, scale, &mut out);
    out
}

pub(crate) fn selection_obs_into(state: &WorldState, herder: usize, scale: Option<f64>, out: &mut Vec<f64>) {
    let k = scale.map(|s| 1.0 / s).unwrap_or(1.0);
    let mut push = |p: Vec2| {
        out.push(p.x * k);
        out.push(p.y * k);
    };
    push(state.herder_pos[herder]);
    for (j, &h) in state.herder_pos.iter().enumerate() {
        if j != herder {
            push(h);
        }
    }
    for &t in &state.target_pos {
        push(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dqn_layout() {
        let s = WorldState::new(vec![Vec2::new(1.0, 2.0)], vec![Vec2::new(3.0, 4.0)]);
        assert_eq!(driving_obs_dqn(&s, 0, 0), [3.0, 4.0, 1.0, 2.0]);
        let z = WorldState::new(vec![Vec2::ZERO], vec![Vec2::ZERO]);
        assert_eq!(driving_obs_dqn(&z, 0, 0), [0.0; 4]);
    }

    #[test]
    fn ppo_layout_and_homogeneity() {
        let s = WorldState::new(vec![Vec2::ZERO], vec![Vec2::new(25.0, 0.0)]);
        assert_eq!(driving_obs_ppo(&s, 0, 0, 25.0), [1.0, 0.0, 1.0, 0.0]);
        let same = WorldState::new(vec![Vec2::new(3.0, -1.0)], vec![Vec2::new(3.0, -1.0)]);
        let o = driving_obs_ppo(&same, 0, 0, 25.0);
        assert_eq!(&o[2..], &[0.0, 0.0]);
        let a = WorldState::new(vec![Vec2::new(-4.0, 7.0)], vec![Vec2::new(11.0, 2.5)]);
        let c = 3.7;
        let b = WorldState::new(vec![Vec2::new(-4.0, 7.0) * c], vec![Vec2::new(11.0, 2.5) * c]);
        let (oa, ob) = (driving_obs_ppo(&a, 0, 0, 25.0), driving_obs_ppo(&b, 0, 0, 25.0 * c));
        for (x, y) in oa.iter().zip(ob) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_grid() {
        assert_eq!(decode_discrete_action(12, 12.0).unwrap(), Vec2::ZERO);
        assert_eq!(decode_discrete_action(0, 12.0).unwrap(), Vec2::new(-12.0, -12.0));
        assert_eq!(decode_discrete_action(24, 12.0).unwrap(), Vec2::new(12.0, 12.0));
        assert_eq!(decode_discrete_action(7, 12.0).unwrap(), Vec2::new(-6.0, 0.0));
        assert!(decode_discrete_action(25, 12.0).is_err());
        let mut seen = std::collections::HashSet::new();
        for i in 0..N_DISCRETE_ACTIONS {
            let u = decode_discrete_action(i, 12.0).unwrap();
            assert_eq!(encode_discrete_action(u, 12.0), Some(i));
            assert!(seen.insert((u.x.to_bits(), u.y.to_bits())));
        }
    }

    #[test]
    fn selection_layout() {
        let herders = vec![Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0)];
        let targets: Vec<_> = (0..5).map(|i| Vec2::new(10.0 + i as f64, -(i as f64))).collect();
        let s = WorldState::new(herders, targets.clone());
        let o0 = selection_obs(&s, 0, None);
        let o1 = selection_obs(&s, 1, None);
        assert_eq!(o0.len(), 14);
        assert_eq!(&o0[..4], &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(&o1[..4], &[2.0, 2.0, 1.0, 1.0]);
        assert_eq!(&o0[4..], &o1[4..]);

        let mut perm = targets.clone();
        perm.swap(0, 3);
        let p = WorldState::new(s.herder_pos.clone(), perm);
        let op = selection_obs(&p, 0, None);
        assert_eq!(&op[..4], &o0[..4]);
        assert_eq!(&op[4..6], &o0[10..12]);
        assert_eq!(&op[10..12], &o0[4..6]);
        assert_eq!(&op[6..10], &o0[6..10]);

        let scaled = selection_obs(&s, 0, Some(25.0));
        assert!((scaled[4] - 10.0 / 25.0).abs() < 1e-15);
    }
}
