//! Episode evaluation quantities: containment fraction, gathering and settling
//! times, mean herder path length and the cooperation index.
//!
//! Integrals are left Riemann sums at the logging step.

use serde::{Deserialize, Serialize};

use crate::episode::TrajectoryLog;
use crate::error::{arg, Result};
use crate::sim::WorldState;

/// Default containment threshold χ*.
pub const CHI_STAR: f64 = 0.99;

/// Fraction of targets inside the (closed) goal disk.
pub fn containment_fraction(state: &WorldState, rho_g: f64) -> f64 {
    let m = state.n_targets();
    if m == 0 {
        return 1.0;
    }
    let inside = state
        .target_pos
        .iter()
        .filter(|&&t| state.in_goal(t, rho_g))
        .count();
    inside as f64 / m as f64
}

fn check_series(chi: &[f64], chi_star: f64) -> Result<()> {
    if chi.is_empty() {
        return arg("empty containment series");
    }
    if !(chi_star > 0.0 && chi_star <= 1.0) {
        return arg(format!("chi_star must lie in (0, 1], got {chi_star}"));
    }
    Ok(())
}

/// First time the series reaches `chi_star`, regardless of later dips.
pub fn gathering_time(chi: &[f64], chi_star: f64, dt: f64) -> Result<Option<f64>> {
    check_series(chi, chi_star)?;
    Ok(chi.iter().position(|&c| c >= chi_star).map(|k| k as f64 * dt))
}

/// First time `t` such that every sample in `[t, min(t + t_contain, t_max)]` is at least
/// `chi_star`. Windows reaching past the end of the series (but not past `t_max`) cannot be
/// verified and do not count.
pub fn settling_time(chi: &[f64], chi_star: f64, t_contain: f64, t_max: f64, dt: f64) -> Result<Option<f64>> {
    check_series(chi, chi_star)?;
    let n = chi.len();
    let k_contain = (t_contain / dt).round() as usize;
    let k_max = (t_max / dt).round() as usize;
    // run[k]: length of the unbroken run of samples >= chi_star starting at k
    let mut run = vec![0usize; n + 1];
    for k in (0..n).rev() {
        run[k] = if chi[k] >= chi_star { run[k + 1] + 1 } else { 0 };
    }
    for k in 0..n {
        if k > k_max {
            break;
        }
        if run[k] == 0 {
            continue;
        }
        let end = (k + k_contain).min(k_max);
        if end >= n {
            continue;
        }
        if run[k] > end - k {
            return Ok(Some(k as f64 * dt));
        }
    }
    Ok(None)
}

/// Mean distance travelled per herder over every logged step ending no later than `upto_t`.
pub fn path_length(log: &TrajectoryLog, upto_t: f64) -> f64 {
    let n = log.n_herders();
    if n == 0 {
        return 0.0;
    }
    let eps = 1e-9 * log.dt.max(1e-12);
    let mut total = 0.0;
    for pair in log.records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.state.time > upto_t + eps {
            break;
        }
        total += a
            .state
            .herder_pos
            .iter()
            .zip(&b.state.herder_pos)
            .map(|(p, q)| p.dist(*q))
            .sum::<f64>();
    }
    total / n as f64
}

/// Time average of `(|S| − 1)/(N − 1)` over samples with time ≤ `upto_t`, where `S` is the set
/// of distinct pursued targets. Idle herders (`None`) pursue nothing; a step with no pursued
/// target contributes 0.
pub fn cooperation_index(selections: &[Vec<Option<usize>>], dt: f64, upto_t: f64) -> Result<f64> {
    let n = selections.first().map(Vec::len).unwrap_or(0);
    if n < 2 {
        return arg(format!("cooperation index needs at least two herders, got {n}"));
    }
    if selections.iter().any(|s| s.len() != n) {
        return arg("ragged selection table");
    }
    let last = ((upto_t / dt) + 1e-9).floor() as usize;
    let upto = (last + 1).min(selections.len());
    if upto == 0 {
        return arg("no samples before upto_t");
    }
    let mut seen: Vec<usize> = Vec::with_capacity(n);
    let mut acc = 0.0;
    for step in &selections[..upto] {
        seen.clear();
        for s in step.iter().flatten() {
            if !seen.contains(s) {
                seen.push(*s);
            }
        }
        acc += seen.len().saturating_sub(1) as f64 / (n - 1) as f64;
    }
    Ok(acc / upto as f64)
}

/// Summary of one evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub chi_series: Vec<f64>,
    pub gathering_time: Option<f64>,
    pub settling_time: Option<f64>,
    pub path_length_final: f64,
    /// Undefined (`None`) when targets were never gathered.
    pub path_length_gathering: Option<f64>,
    /// Undefined for a single herder.
    pub coop_final: Option<f64>,
    pub coop_gathering: Option<f64>,
    pub success: bool,
    pub final_time: f64,
}

/// Threshold and horizon used to score a log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSpec {
    pub chi_star: f64,
    pub t_contain: f64,
    pub t_max: f64,
}

impl EpisodeMetrics {
    pub fn from_log(log: &TrajectoryLog, spec: &MetricSpec) -> Result<Self> {
        let chi = log.chi_series();
        let dt = log.dt;
        let t_g = gathering_time(&chi, spec.chi_star, dt)?;
        let t_s = settling_time(&chi, spec.chi_star, spec.t_contain, spec.t_max, dt)?;
        let final_time = log.final_time();
        let d_f = path_length(log, final_time);
        let d_g = t_g.map(|t| path_length(log, t));
        let (psi_f, psi_g) = if log.n_herders() >= 2 {
            let sel = log.selection_table();
            let psi_f = cooperation_index(&sel, dt, final_time)?;
            let psi_g = match t_g {
                Some(t) => Some(cooperation_index(&sel, dt, t)?),
                None => None,
            };
            (Some(psi_f), psi_g)
        } else {
            (None, None)
        };
        Ok(Self {
            chi_series: chi,
            gathering_time: t_g,
            settling_time: t_s,
            path_length_final: d_f,
            path_length_gathering: d_g,
            coop_final: psi_f,
            coop_gathering: psi_g,
            success: t_s.is_some(),
            final_time,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::StepRecord;
    use crate::vec2::Vec2;

    /// Direct transcription of the settling-time definition.
    fn settling_oracle(chi: &[f64], chi_star: f64, k_contain: usize, k_max: usize) -> Option<usize> {
        (0..chi.len()).find(|&k| {
            let end = (k + k_contain).min(k_max);
            end >= k && end < chi.len() && (k..=end).all(|j| chi[j] >= chi_star)
        })
    }

    #[test]
    fn containment_examples() {
        let inside = Vec2::new(1.0, 1.0);
        let outside = Vec2::new(10.0, 0.0);
        let s = WorldState::new(vec![], vec![inside, inside, outside, outside, outside]);
        assert_eq!(containment_fraction(&s, 5.0), 0.4);
        let s = WorldState::new(vec![], vec![inside; 5]);
        assert_eq!(containment_fraction(&s, 5.0), 1.0);
        let s = WorldState::new(vec![], vec![outside; 5]);
        assert_eq!(containment_fraction(&s, 5.0), 0.0);
        // boundary is inside
        let s = WorldState::new(vec![], vec![Vec2::new(5.0, 0.0)]);
        assert_eq!(containment_fraction(&s, 5.0), 1.0);
    }

    #[test]
    fn gathering_examples() {
        assert_eq!(gathering_time(&[0.0, 0.8, 1.0, 1.0], 0.99, 1.0).unwrap(), Some(2.0));
        assert_eq!(gathering_time(&[0.0, 0.8, 0.98], 0.99, 1.0).unwrap(), None);
        assert_eq!(gathering_time(&[1.0, 0.8, 1.0], 0.99, 1.0).unwrap(), Some(0.0));
        assert!(gathering_time(&[], 0.99, 1.0).is_err());
    }

    #[test]
    fn settling_examples() {
        let mut chi = vec![0.0];
        chi.extend(std::iter::repeat(1.0).take(20));
        assert_eq!(settling_time(&chi, 0.99, 5.0, 100.0, 1.0).unwrap(), Some(1.0));

        let chi = [1.0, 0.8, 1.0, 1.0, 1.0];
        let t_max = (chi.len() - 1) as f64;
        assert_eq!(settling_time(&chi, 0.99, 10.0, t_max, 1.0).unwrap(), Some(2.0));
        assert_eq!(settling_oracle(&chi, 0.99, 10, 4), Some(2));

        assert_eq!(settling_time(&[0.2, 0.5, 0.9], 0.99, 1.0, 2.0, 1.0).unwrap(), None);
        assert!(settling_time(&[], 0.99, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn settling_needs_full_window_before_t_max() {
        // contained for 3 samples, window 5, log ends well before t_max
        let chi = [0.0, 1.0, 1.0, 1.0];
        assert_eq!(settling_time(&chi, 0.99, 5.0, 100.0, 1.0).unwrap(), None);
    }

    #[test]
    fn settling_matches_oracle_on_random_series() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let n = rng.random_range(1..40);
            let chi: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.7 { 1.0 } else { 0.6 }).collect();
            let kc = rng.random_range(0..10);
            let km = rng.random_range(0..n + 5);
            let got = settling_time(&chi, 0.99, kc as f64 * 0.5, km as f64 * 0.5, 0.5).unwrap();
            assert_eq!(got, settling_oracle(&chi, 0.99, kc, km).map(|k| k as f64 * 0.5));
        }
    }

    fn straight_log(speeds: &[f64], steps: usize, dt: f64) -> TrajectoryLog {
        let n = speeds.len();
        let records = (0..=steps)
            .map(|k| {
                let t = k as f64 * dt;
                let herders = speeds.iter().map(|v| Vec2::new(v * t, 0.0)).collect();
                let mut state = WorldState::new(herders, vec![Vec2::new(20.0, 0.0)]);
                state.time = t;
                StepRecord {
                    state,
                    controls: vec![Vec2::ZERO; n],
                    selections: vec![Some(0); n],
                    rewards: vec![0.0; n],
                }
            })
            .collect();
        TrajectoryLog { dt, rho_g: 5.0, records }
    }

    #[test]
    fn path_length_examples() {
        assert_eq!(path_length(&straight_log(&[0.0, 0.0], 50, 0.01), 0.5), 0.0);
        let one = straight_log(&[12.0], 100, 0.01);
        assert!((path_length(&one, 1.0) - 12.0).abs() < 1e-9);
        let two = straight_log(&[10.0, 0.0], 100, 0.01);
        assert!((path_length(&two, 1.0) - 5.0).abs() < 1e-9);
        // monotone in the horizon
        let mut prev = 0.0;
        for k in 0..=100 {
            let d = path_length(&one, k as f64 * 0.01);
            assert!(d >= prev);
            prev = d;
        }
    }

    #[test]
    fn cooperation_examples() {
        let same = vec![vec![Some(1), Some(1)]; 10];
        assert_eq!(cooperation_index(&same, 1.0, 9.0).unwrap(), 0.0);
        let distinct = vec![vec![Some(0), Some(3)]; 10];
        assert_eq!(cooperation_index(&distinct, 1.0, 9.0).unwrap(), 1.0);
        let half: Vec<_> = (0..10)
            .map(|k| if k % 2 == 0 { vec![Some(2), Some(2)] } else { vec![Some(2), Some(4)] })
            .collect();
        assert_eq!(cooperation_index(&half, 1.0, 9.0).unwrap(), 0.5);
        assert!(cooperation_index(&[vec![Some(0)]], 1.0, 0.0).is_err());
        let idle = vec![vec![None, None]; 3];
        assert_eq!(cooperation_index(&idle, 1.0, 2.0).unwrap(), 0.0);
    }
}
