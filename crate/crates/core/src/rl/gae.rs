/// How a rollout step ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepEnd {
    /// Next step continues the same episode.
    Continue,
    /// Episode ended in a terminal state (no bootstrap).
    Terminal,
    /// Episode was cut by the time limit; bootstrap from the given value.
    Truncated(f64),
}

/// Generalised advantage estimation for one uninterrupted segment, bootstrapping from
/// `bootstrap` after the last step. Returns `(advantages, returns)`.
pub fn gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let ends = vec![StepEnd::Continue; rewards.len()];
    gae_with_ends(rewards, values, &ends, bootstrap, gamma, lambda)
}

/// GAE over a rollout that may span episode boundaries. `bootstrap` is the value of the
/// state following the last step when that step is [`StepEnd::Continue`].
pub fn gae_with_ends(
    rewards: &[f64],
    values: &[f64],
    ends: &[StepEnd],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n, "rewards and values must have equal length");
    assert_eq!(ends.len(), n);
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = match ends[t] {
            StepEnd::Continue => (if t + 1 < n { values[t + 1] } else { bootstrap }, 1.0),
            StepEnd::Terminal => (0.0, 0.0),
            StepEnd::Truncated(v) => (v, 0.0),
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * carry * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// `A_t = Σ_l (γλ)^l δ_{t+l}` by direct summation.
    fn oracle(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
        let n = rewards.len();
        let v = |t: usize| if t < n { values[t] } else { bootstrap };
        let delta: Vec<f64> = (0..n).map(|t| rewards[t] + gamma * v(t + 1) - v(t)).collect();
        (0..n)
            .map(|t| (t..n).map(|k| (gamma * lambda).powi((k - t) as i32) * delta[k]).sum())
            .collect()
    }

    #[test]
    fn zeros_give_zero_advantages() {
        let (a, r) = gae(&[0.0; 6], &[0.0; 6], 0.0, 0.98, 0.95);
        assert!(a.iter().chain(&r).all(|&x| x == 0.0));
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let rewards = [1.0, -2.0, 0.5];
        let values = [0.3, 0.1, -0.4];
        let (a, _) = gae(&rewards, &values, 2.0, 0.9, 0.0);
        let want = [1.0 + 0.9 * 0.1 - 0.3, -2.0 + 0.9 * -0.4 - 0.1, 0.5 + 0.9 * 2.0 + 0.4];
        for (x, y) in a.iter().zip(want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.random_range(1..60);
            let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..1.0)).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let boot = rng.random_range(-5.0..5.0);
            let (a, r) = gae(&rewards, &values, boot, 0.98, 0.95);
            let want = oracle(&rewards, &values, boot, 0.98, 0.95);
            for t in 0..n {
                assert!((a[t] - want[t]).abs() < 1e-10);
                assert!((r[t] - a[t] - values[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn boundaries_split_segments() {
        let rewards = [1.0, 2.0, 3.0, 4.0];
        let values = [0.5, 0.25, -1.0, 2.0];
        let ends = [StepEnd::Continue, StepEnd::Terminal, StepEnd::Truncated(7.0), StepEnd::Continue];
        let (a, _) = gae_with_ends(&rewards, &values, &ends, 3.0, 0.9, 0.8);
        let first = oracle(&rewards[..2], &values[..2], 0.0, 0.9, 0.8);
        let second = oracle(&rewards[2..3], &values[2..3], 7.0, 0.9, 0.8);
        let third = oracle(&rewards[3..], &values[3..], 3.0, 0.9, 0.8);
        let want: Vec<f64> = first.into_iter().chain(second).chain(third).collect();
        for (x, y) in a.iter().zip(want) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
