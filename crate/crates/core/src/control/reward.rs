use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::WorldState;
use crate::vec2::Vec2;

/// Reward gains: approach, steering, control effort, herder-in-goal penalty, selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardGains {
    pub k_a: f64,
    pub k_s: f64,
    pub k_c: f64,
    pub k_h: f64,
    pub k_t: f64,
}

impl RewardGains {
    pub const DQN: RewardGains = RewardGains {
        k_a: 0.5,
        k_s: 1.0,
        k_c: 0.1,
        k_h: 5.0,
        k_t: 1.0,
    };

    pub const PPO: RewardGains = RewardGains {
        k_a: 0.05,
        k_s: 0.1,
        k_c: 0.001,
        k_h: 5.0,
        k_t: 0.01,
    };

    /// Rejects negative gains; returns a warning when the driving hierarchy
    /// `k_s > k_a > k_c` does not hold.
    pub fn validate(&self) -> Result<Option<String>> {
        for (name, v) in [("k_a", self.k_a), ("k_s", self.k_s), ("k_c", self.k_c), ("k_h", self.k_h), ("k_t", self.k_t)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Params(format!("reward gain {name} must be >= 0, got {v}")));
            }
        }
        if self.k_s > self.k_a && self.k_a > self.k_c {
            Ok(None)
        } else {
            Ok(Some(format!(
                "driving gains break k_s > k_a > k_c (k_s={}, k_a={}, k_c={})",
                self.k_s, self.k_a, self.k_c
            )))
        }
    }
}

/// The four driving-reward terms, each already signed (all ≤ 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivingTerms {
    pub approach: f64,
    pub steering: f64,
    pub effort: f64,
    pub herder_in_goal: f64,
}

impl DrivingTerms {
    pub fn total(&self) -> f64 {
        self.approach + self.steering + self.effort + self.herder_in_goal
    }
}

/// Driving reward terms for goal-centred target `t` and herder `h` under control `u`.
pub fn driving_terms(t: Vec2, h: Vec2, u: Vec2, gains: &RewardGains, rho_g: f64) -> DrivingTerms {
    let t_dist = t.norm();
    DrivingTerms {
        approach: -gains.k_a * (t - h).norm(),
        steering: if t_dist > rho_g { -gains.k_s * (t_dist - rho_g) } else { 0.0 },
        effort: -gains.k_c * u.norm(),
        herder_in_goal: if h.norm() <= rho_g { -gains.k_h } else { 0.0 },
    }
}

/// Driving reward for goal-centred positions.
#[inline]
pub fn driving_reward(t: Vec2, h: Vec2, u: Vec2, gains: &RewardGains, rho_g: f64) -> f64 {
    driving_terms(t, h, u, gains, rho_g).total()
}

/// Driving reward of `herder` w.r.t. `target` in `state`.
pub fn driving_reward_in(state: &WorldState, herder: usize, target: usize, u: Vec2, gains: &RewardGains, rho_g: f64) -> f64 {
    let c = state.goal_center;
    driving_reward(state.target_pos[target] - c, state.herder_pos[herder] - c, u, gains, rho_g)
}

/// Global selection reward: `−k_t Σ_i (‖T_i − C‖ − ρ_G)` over targets outside the goal.
pub fn selection_reward(state: &WorldState, k_t: f64, rho_g: f64) -> f64 {
    let excess: f64 = state
        .target_pos
        .iter()
        .map(|&t| (t - state.goal_center).norm() - rho_g)
        .filter(|&e| e > 0.0)
        .sum();
    -k_t * excess
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: RewardGains = RewardGains::PPO;

    #[test]
    fn driving_examples() {
        let r = driving_reward(Vec2::ZERO, Vec2::ZERO, Vec2::ZERO, &G, 5.0);
        assert!((r - -5.0).abs() < 1e-12);
        let r = driving_reward(Vec2::new(10.0, 0.0), Vec2::new(6.0, 0.0), Vec2::ZERO, &G, 5.0);
        assert!((r - -0.7).abs() < 1e-12);
        let r = driving_reward(Vec2::new(1.0, 0.0), Vec2::new(7.0, 0.0), Vec2::ZERO, &G, 5.0);
        assert!((r - -0.3).abs() < 1e-12);
    }

    #[test]
    fn joint_translation_only_moves_goal_terms() {
        let (t, h, u) = (Vec2::new(8.0, 3.0), Vec2::new(9.5, 4.0), Vec2::new(2.0, -1.0));
        let shift = Vec2::new(-7.0, -3.5);
        let a = driving_terms(t, h, u, &G, 5.0);
        let b = driving_terms(t + shift, h + shift, u, &G, 5.0);
        assert!((a.approach - b.approach).abs() < 1e-12);
        assert_eq!(a.effort, b.effort);
        assert_ne!(a.steering, b.steering);
        assert_ne!(a.herder_in_goal, b.herder_in_goal);
    }

    #[test]
    fn selection_examples() {
        let inside = WorldState::new(vec![], vec![Vec2::new(1.0, 0.0); 5]);
        assert_eq!(selection_reward(&inside, 0.01, 5.0), 0.0);
        let one = WorldState::new(vec![], vec![Vec2::new(0.0, 8.0), Vec2::ZERO]);
        assert!((selection_reward(&one, 0.01, 5.0) - -0.03).abs() < 1e-12);
        let five = WorldState::new(vec![], vec![Vec2::new(6.0, 8.0); 5]);
        assert!((selection_reward(&five, 1.0, 5.0) - -25.0).abs() < 1e-12);
    }

    #[test]
    fn gain_hierarchy() {
        assert_eq!(RewardGains::PPO.validate().unwrap(), None);
        assert_eq!(RewardGains::DQN.validate().unwrap(), None);
        let flat = RewardGains { k_a: 1.0, ..RewardGains::PPO };
        assert!(flat.validate().unwrap().is_some());
        let neg = RewardGains { k_c: -1.0, ..RewardGains::PPO };
        assert!(neg.validate().is_err());
    }
}
