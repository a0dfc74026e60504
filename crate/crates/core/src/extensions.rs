//! Limited topological sensing and moving-goal support.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::sim::WorldState;
use crate::vec2::Vec2;

/// What one herder perceives: itself, its nearest herders and its nearest targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalView {
    /// Reduced world; herder 0 is the ego herder.
    pub state: WorldState,
    /// Full-world index of each herder in the view.
    pub herders: Vec<usize>,
    /// Full-world index of each target in the view.
    pub targets: Vec<usize>,
}

impl LocalView {
    /// Full-world index of a target chosen inside the view.
    pub fn resolve_target(&self, local: usize) -> Option<usize> {
        self.targets.get(local).copied()
    }
}

/// Indices of `points` sorted by distance from `from` (ties by index), first `k` kept.
fn nearest(from: Vec2, points: &[Vec2], skip: Option<usize>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).filter(|&i| Some(i) != skip).collect();
    idx.sort_by(|&a, &b| {
        from.dist(points[a])
            .total_cmp(&from.dist(points[b]))
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

pub fn topological_filter(state: &WorldState, herder: usize, n_obs: usize, m_obs: usize) -> Result<LocalView> {
    let n = state.n_herders();
    let m = state.n_targets();
    if herder >= n {
        return arg(format!("herder {herder} outside 0..{n}"));
    }
    if n_obs + 1 > n || m_obs > m {
        return arg(format!(
            "sensing budget ({n_obs}, {m_obs}) exceeds the {} other herders and {m} targets",
            n - 1
        ));
    }
    let ego = state.herder_pos[herder];
    let mut herders = vec![herder];
    herders.extend(nearest(ego, &state.herder_pos, Some(herder), n_obs));
    let targets = nearest(ego, &state.target_pos, None, m_obs);
    let mut view = WorldState::new(
        herders.iter().map(|&j| state.herder_pos[j]).collect(),
        targets.iter().map(|&i| state.target_pos[i]).collect(),
    );
    view.target_vel = targets.iter().map(|&i| state.target_vel[i]).collect();
    view.goal_center = state.goal_center;
    view.time = state.time;
    Ok(LocalView {
        state: view,
        herders,
        targets,
    })
}

/// Shift every position by `−goal`; the goal becomes the origin.
pub fn goal_frame_transform(state: &WorldState, goal: Vec2) -> WorldState {
    let mut out = state.clone();
    out.herder_pos.iter_mut().for_each(|p| *p -= goal);
    out.target_pos.iter_mut().for_each(|p| *p -= goal);
    out.goal_center = state.goal_center - goal;
    out
}

pub fn goal_frame_inverse(state: &WorldState, goal: Vec2) -> WorldState {
    goal_frame_transform(state, -goal)
}

/// A goal that glides along an S-shaped path at constant speed, then stays at the end.
///
/// The path follows `start → end` along its chord while the lateral coordinate follows a
/// normalised logistic in the chord parameter. It is tabulated as a fine polyline and
/// traversed at constant arc-length speed, so the goal speed never exceeds `speed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidGoal {
    pub start: Vec2,
    pub end: Vec2,
    pub speed: f64,
    pub steepness: f64,
    points: Vec<Vec2>,
    arc: Vec<f64>,
}

impl SigmoidGoal {
    const SAMPLES: usize = 4000;
    pub const DEFAULT_START: Vec2 = Vec2 { x: -13.0, y: -13.0 };
    pub const DEFAULT_END: Vec2 = Vec2 { x: 13.0, y: 13.0 };
    pub const DEFAULT_STEEPNESS: f64 = 8.0;

    pub fn new(start: Vec2, end: Vec2, speed: f64, steepness: f64) -> Result<Self> {
        if !(speed > 0.0) || !(steepness > 0.0) {
            return arg("goal speed and steepness must be > 0");
        }
        let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
        let (lo, hi) = (logistic(-steepness / 2.0), logistic(steepness / 2.0));
        let shape = |s: f64| (logistic(steepness * (s - 0.5)) - lo) / (hi - lo);
        let d = end - start;
        let points: Vec<Vec2> = (0..=Self::SAMPLES)
            .map(|k| {
                let s = k as f64 / Self::SAMPLES as f64;
                Vec2::new(start.x + d.x * s, start.y + d.y * shape(s))
            })
            .collect();
        let mut arc = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        arc.push(0.0);
        for w in points.windows(2) {
            acc += w[0].dist(w[1]);
            arc.push(acc);
        }
        Ok(Self {
            start,
            end,
            speed,
            steepness,
            points,
            arc,
        })
    }

    /// Default path with the goal moving at `v_max / speed_ratio`.
    pub fn with_ratio(v_max: f64, speed_ratio: f64) -> Result<Self> {
        Self::new(Self::DEFAULT_START, Self::DEFAULT_END, v_max / speed_ratio, Self::DEFAULT_STEEPNESS)
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    /// Time needed to reach the end.
    pub fn duration(&self) -> f64 {
        self.length() / self.speed
    }

    pub fn position(&self, t: f64) -> Vec2 {
        let s = (self.speed * t.max(0.0)).min(self.length());
        let k = self.arc.partition_point(|&a| a <= s).clamp(1, self.arc.len() - 1);
        let (a0, a1) = (self.arc[k - 1], self.arc[k]);
        let w = if a1 > a0 { (s - a0) / (a1 - a0) } else { 0.0 };
        self.points[k - 1] + (self.points[k] - self.points[k - 1]) * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> WorldState {
        WorldState::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(4.0, 0.0), Vec2::new(-1.0, 0.0)],
            vec![Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.5), Vec2::new(0.0, 1.0), Vec2::new(9.0, 9.0)],
        )
    }

    #[test]
    fn full_budget_covers_everyone() {
        let s = WorldState::new(
            vec![Vec2::new(1.0, 1.0), Vec2::new(-3.0, 2.0)],
            (0..5).map(|i| Vec2::new(i as f64, -(i as f64))).collect(),
        );
        let v = topological_filter(&s, 1, 1, 5).unwrap();
        assert_eq!(v.herders, vec![1, 0]);
        let mut t = v.targets.clone();
        t.sort();
        assert_eq!(t, vec![0, 1, 2, 3, 4]);
        assert_eq!(v.state.n_targets(), 5);
    }

    #[test]
    fn nearest_with_index_tie_break() {
        let v = topological_filter(&world(), 0, 1, 2).unwrap();
        assert_eq!(v.herders, vec![0, 2]);
        // targets 0 and 2 are both at distance 1; index 0 wins the first slot
        assert_eq!(v.targets, vec![0, 2]);
        assert_eq!(v.resolve_target(1), Some(2));
        assert!(topological_filter(&world(), 0, 3, 1).is_err());
        assert!(topological_filter(&world(), 0, 1, 5).is_err());
    }

    #[test]
    fn goal_frame_round_trip() {
        let mut s = world();
        s.goal_center = Vec2::new(3.0, 4.0);
        s.target_pos[0] = Vec2::new(3.0, 4.0);
        let g = goal_frame_transform(&s, s.goal_center);
        assert_eq!(g.target_pos[0], Vec2::ZERO);
        assert_eq!(g.goal_center, Vec2::ZERO);
        assert_eq!(g.target_vel, s.target_vel);
        let back = goal_frame_inverse(&g, s.goal_center);
        for (a, b) in back.all_positions().iter().zip(s.all_positions()) {
            assert!((*a - b).norm() < 1e-12);
        }
        assert_eq!(goal_frame_transform(&world(), Vec2::ZERO), world());
    }

    #[test]
    fn sigmoid_path_endpoints_and_speed() {
        let g = SigmoidGoal::with_ratio(12.0, 50.0).unwrap();
        assert_eq!(g.position(0.0), g.start);
        assert!((g.position(1e9) - g.end).norm() < 1e-12);
        let h = 1e-3;
        let mut max_speed: f64 = 0.0;
        let mut t = 0.0;
        while t < g.duration() + 1.0 {
            max_speed = max_speed.max(g.position(t + h).dist(g.position(t)) / h);
            t += 0.05;
        }
        assert!(max_speed <= 12.0 / 50.0 * (1.0 + 1e-9), "{max_speed}");
        assert!(max_speed > 0.99 * 12.0 / 50.0);
    }
}
