//! Checks shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shepherd_core::episode::{StepRecord, TrajectoryLog};
use shepherd_core::harness::{run_batch, ExperimentConfig};
use shepherd_core::metrics::{containment_fraction, cooperation_index, gathering_time, path_length, settling_time};
use shepherd_core::rl::net::{log_softmax, Activation, Cache, DenseNet, Head, Init};
use shepherd_core::rl::policy::arch;
use shepherd_core::sim::{self, NoiseStreams, SimParams, WorldState};
use shepherd_core::Vec2;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        Self::new(false, detail)
    }
}

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// ---------------------------------------------------------------- force oracle

/// `λ Γ` restricted to the terms that depend on one target.
fn potential(t: Vec2, herders: &[Vec2], lambda: f64) -> f64 {
    -lambda * herders.iter().map(|h| 1.0 / ((t.x - h.x).powi(2) + (t.y - h.y).powi(2)).sqrt()).sum::<f64>()
}

/// Five-point central difference of the potential along each axis.
fn potential_gradient(t: Vec2, herders: &[Vec2], lambda: f64) -> Vec2 {
    let h = 1e-3;
    let d = |e: Vec2| {
        let f = |s: f64| potential(t + e * s, herders, lambda);
        (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
    };
    Vec2::new(d(Vec2::new(1.0, 0.0)), d(Vec2::new(0.0, 1.0)))
}

pub fn force_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 100 {
        let t = Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let n = rng.random_range(1..=5);
        let herders: Vec<Vec2> = (0..n)
            .map(|_| Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)))
            .collect();
        if herders.iter().any(|h| h.dist(t) < 0.5) {
            continue;
        }
        let lambda = rng.random_range(1.0..80.0);
        let f = sim::long_range_force(t, &herders, lambda).unwrap();
        let g = potential_gradient(t, &herders, lambda);
        worst = worst.max((f - g).norm() / g.norm());
        done += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst < 1e-6 && secs < 1.0,
        format!("worst rel err {worst:.2e} over 100 configurations in {secs:.3}s"),
    )
}

// ---------------------------------------------------------------- SDE statistics

pub fn sde_variance() -> Outcome {
    let start = Instant::now();
    let params = SimParams {
        lambda: 0.0,
        beta: 0.0,
        ..SimParams::nominal(1, 1)
    };
    let mut state = WorldState::new(vec![Vec2::new(100.0, 100.0)], vec![Vec2::ZERO]);
    let mut noise = NoiseStreams::new(42, 1);
    let controls = [Vec2::ZERO];
    let burn_in = 2_000;
    let steps = 1_000_000;
    let (mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..burn_in + steps {
        state = sim::advance(&state, &controls, &params, &mut noise).unwrap();
        if k >= burn_in {
            let v = state.target_vel[0];
            sx += v.x;
            sy += v.y;
            sxx += v.x * v.x;
            syy += v.y * v.y;
        }
    }
    let n = steps as f64;
    let var_x = sxx / n - (sx / n).powi(2);
    let var_y = syy / n - (sy / n).powi(2);
    let expected = params.diffusion.powi(2) / (2.0 * params.zeta);
    let err = ((var_x - expected) / expected).abs().max(((var_y - expected) / expected).abs());
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        err < 0.10 && secs < 30.0,
        format!("var ({var_x:.4}, {var_y:.4}) vs D²/2ζ = {expected:.4}, worst rel dev {err:.3}, {steps} steps in {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- gradients

const GRAD_H: f64 = 1e-6;
const GRAD_BATCH: usize = 3;

struct GradCase {
    name: &'static str,
    sizes: Vec<usize>,
    head: Head,
    /// Differentiate a log-softmax loss through the logits instead of the head output.
    logits: bool,
}

fn grad_cases() -> Vec<GradCase> {
    let case = |name, sizes: Vec<usize>, head, logits| GradCase {
        name,
        sizes,
        head,
        logits,
    };
    vec![
        case("dqn driving", arch::DQN_DRIVING.to_vec(), Head::Linear, false),
        case("dqn selection", arch::with_io(14, &arch::DQN_SELECTION_HIDDEN, 5), Head::Linear, false),
        case("ppo driving actor", arch::with_io(4, &arch::PPO_DRIVING_HIDDEN, 2), Head::Tanh, false),
        case("ppo driving critic", arch::with_io(4, &arch::PPO_DRIVING_HIDDEN, 1), Head::Linear, false),
        case("mappo actor (probs)", arch::with_io(14, &arch::MAPPO_HIDDEN, 5), Head::Softmax, false),
        case("mappo actor (log-softmax)", arch::with_io(14, &arch::MAPPO_HIDDEN, 5), Head::Softmax, true),
        case("mappo critic", arch::with_io(14, &arch::MAPPO_HIDDEN, 1), Head::Linear, false),
    ]
}

/// `Σ w ⊙ f(x)` with `f` the head output or the log-softmax of the logits.
fn grad_loss(net: &DenseNet, x: &[f64], w: &[f64], logits: bool) -> f64 {
    let (d_in, d_out) = (net.input_dim(), net.output_dim());
    (0..GRAD_BATCH)
        .map(|b| {
            let row = &x[b * d_in..(b + 1) * d_in];
            let out = if logits {
                log_softmax(&net.forward_logits(row).unwrap())
            } else {
                net.forward(row).unwrap()
            };
            out.iter().zip(&w[b * d_out..(b + 1) * d_out]).map(|(o, w)| o * w).sum::<f64>()
        })
        .sum()
}

fn grad_analytic(net: &DenseNet, x: &[f64], w: &[f64], logits: bool) -> (Vec<f64>, Vec<f64>) {
    let mut cache = Cache::default();
    let mut grads = vec![0.0; net.param_count()];
    net.forward_cached(x, GRAD_BATCH, &mut cache).unwrap();
    let d_x = if logits {
        let d_out = net.output_dim();
        let mut g = vec![0.0; GRAD_BATCH * d_out];
        for b in 0..GRAD_BATCH {
            let lp = log_softmax(&cache.logits()[b * d_out..(b + 1) * d_out]);
            let wb = &w[b * d_out..(b + 1) * d_out];
            let sw: f64 = wb.iter().sum();
            for k in 0..d_out {
                g[b * d_out + k] = wb[k] - lp[k].exp() * sw;
            }
        }
        net.backward_logits(&cache, &g, &mut grads).unwrap()
    } else {
        net.backward(&cache, w, &mut grads).unwrap()
    };
    (grads, d_x)
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-7)
}

/// Parameter indices covering every layer's weights and biases.
fn sample_indices(sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx = Vec::new();
    let mut off = 0;
    for l in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        idx.extend((0..40).map(|_| off + rng.random_range(0..n_in * n_out)));
        idx.extend((0..n_out.min(10)).map(|_| off + n_in * n_out + rng.random_range(0..n_out)));
        off += n_in * n_out + n_out;
    }
    idx
}

pub fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut lines = Vec::new();
    let mut worst_all: f64 = 0.0;
    for case in grad_cases() {
        let init = Init::Orthogonal {
            hidden_gain: std::f64::consts::SQRT_2,
            head_gain: 1.0,
        };
        let mut net = DenseNet::with_init(&case.sizes, Activation::Relu, case.head, init, &mut rng).unwrap();
        for p in net.params_mut() {
            *p += 0.05 * rng.random_range(-1.0..1.0);
        }
        let x: Vec<f64> = (0..GRAD_BATCH * net.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..GRAD_BATCH * net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (grads, d_x) = grad_analytic(&net, &x, &w, case.logits);

        let mut worst: f64 = 0.0;
        for i in sample_indices(&case.sizes, &mut rng) {
            let p = net.params()[i];
            net.params_mut()[i] = p + GRAD_H;
            let up = grad_loss(&net, &x, &w, case.logits);
            net.params_mut()[i] = p - GRAD_H;
            let down = grad_loss(&net, &x, &w, case.logits);
            net.params_mut()[i] = p;
            worst = worst.max(rel_err(grads[i], (up - down) / (2.0 * GRAD_H)));
        }
        let mut xp = x.clone();
        for i in 0..x.len() {
            xp[i] = x[i] + GRAD_H;
            let up = grad_loss(&net, &xp, &w, case.logits);
            xp[i] = x[i] - GRAD_H;
            let down = grad_loss(&net, &xp, &w, case.logits);
            xp[i] = x[i];
            worst = worst.max(rel_err(d_x[i], (up - down) / (2.0 * GRAD_H)));
        }
        lines.push(format!("{} {worst:.1e}", case.name));
        worst_all = worst_all.max(worst);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst_all < 1e-4 && secs < 60.0,
        format!("worst rel err {worst_all:.2e} in {secs:.2}s [{}]", lines.join(", ")),
    )
}

// ---------------------------------------------------------------- metrics

fn brute_first_crossing(chi: &[f64], chi_star: f64) -> Option<usize> {
    (0..chi.len()).find(|&k| chi[k] >= chi_star)
}

fn brute_settling(chi: &[f64], chi_star: f64, k_contain: usize, k_max: usize) -> Option<usize> {
    (0..chi.len()).filter(|&k| k <= k_max).find(|&k| {
        let end = (k + k_contain).min(k_max);
        end < chi.len() && (k..=end).all(|i| chi[i] >= chi_star)
    })
}

fn state_with_targets(targets: &[Vec2]) -> WorldState {
    WorldState::new(vec![Vec2::ZERO], targets.to_vec())
}

/// Log of herders moving with constant velocities, one record per step.
pub fn moving_log(velocities: &[Vec2], steps: usize, dt: f64) -> TrajectoryLog {
    let records = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            let mut s = WorldState::new(velocities.iter().map(|v| *v * t).collect(), vec![Vec2::new(30.0, 0.0)]);
            s.time = t;
            StepRecord {
                state: s,
                controls: velocities.to_vec(),
                selections: vec![Some(0); velocities.len()],
                rewards: vec![0.0; velocities.len()],
            }
        })
        .collect();
    TrajectoryLog { dt, rho_g: 5.0, records }
}

pub fn metrics_suite() -> Outcome {
    let mut failures = Vec::new();
    let mut count = 0;
    let mut check = |name: &str, ok: bool| {
        count += 1;
        if !ok {
            failures.push(name.to_string());
        }
    };
    let inside = Vec2::new(1.0, 1.0);
    let outside = Vec2::new(10.0, 0.0);

    check("chi 2 of 5", containment_fraction(&state_with_targets(&[inside, inside, outside, outside, outside]), 5.0) == 0.4);
    check("chi all", containment_fraction(&state_with_targets(&[inside; 4]), 5.0) == 1.0);
    check("chi none", containment_fraction(&state_with_targets(&[outside; 3]), 5.0) == 0.0);

    check("t_g basic", gathering_time(&[0.0, 0.8, 1.0, 1.0], 0.99, 1.0).unwrap() == Some(2.0));
    check("t_g never", gathering_time(&[0.0, 0.5, 0.98], 0.99, 1.0).unwrap().is_none());
    let dip = [1.0, 0.8, 1.0];
    check(
        "t_g first crossing",
        gathering_time(&dip, 0.99, 1.0).unwrap() == brute_first_crossing(&dip, 0.99).map(|k| k as f64),
    );
    check("t_g empty", gathering_time(&[], 0.99, 1.0).is_err());

    let dt = 0.5;
    let mut rising = vec![0.0];
    rising.extend(std::iter::repeat(1.0).take(40));
    check("t_s basic", settling_time(&rising, 0.99, 10.0, 20.0, dt).unwrap() == Some(dt));
    let mut redip = vec![1.0, 0.8];
    redip.extend(std::iter::repeat(1.0).take(40));
    let oracle = brute_settling(&redip, 0.99, 20, 40).map(|k| k as f64 * dt);
    check("t_s final run", oracle == Some(2.0 * dt) && settling_time(&redip, 0.99, 10.0, 20.0, dt).unwrap() == oracle);
    check("t_s never", settling_time(&[0.5; 50], 0.99, 10.0, 20.0, dt).unwrap().is_none());
    check("t_s empty", settling_time(&[], 0.99, 10.0, 20.0, dt).is_err());

    // Dip after gathering: gathered at step 2, lost at step 5, held from step 7 on.
    let mut chi = vec![0.0, 0.5, 1.0, 1.0, 1.0, 0.6, 0.7];
    chi.extend(std::iter::repeat(1.0).take(30));
    let t_g = gathering_time(&chi, 0.99, dt).unwrap();
    let t_s = settling_time(&chi, 0.99, 10.0, 18.0, dt).unwrap();
    check(
        "dip after gathering",
        t_g == Some(2.0 * dt)
            && t_s == Some(7.0 * dt)
            && t_s == brute_settling(&chi, 0.99, 20, 36).map(|k| k as f64 * dt),
    );

    check("d stationary", path_length(&moving_log(&[Vec2::ZERO], 50, 0.1), 5.0) == 0.0);
    // 8 steps of 1.5 m at dt = 0.125: every partial sum is exact.
    let one = moving_log(&[Vec2::new(12.0, 0.0)], 8, 0.125);
    let oracle: f64 = (1..=8).map(|_| 12.0 * 0.125).sum();
    check("d one herder", path_length(&one, 1.0) == oracle && oracle == 12.0);
    let fine = moving_log(&[Vec2::new(12.0, 0.0)], 100, 0.01);
    check("d one herder fine dt", (path_length(&fine, 1.0) - 12.0).abs() < 1e-12);
    let two = moving_log(&[Vec2::new(10.0, 0.0), Vec2::ZERO], 8, 0.125);
    check("d two herders", path_length(&two, 1.0) == 5.0);

    let same = vec![vec![Some(3), Some(3)]; 10];
    let distinct = vec![vec![Some(0), Some(4)]; 10];
    let half: Vec<_> = (0..10).map(|k| if k % 2 == 0 { vec![Some(1), Some(1)] } else { vec![Some(1), Some(2)] }).collect();
    let half_oracle = half
        .iter()
        .map(|s| if s[0] == s[1] { 0.0 } else { 1.0 })
        .sum::<f64>()
        / half.len() as f64;
    check("psi same", cooperation_index(&same, 0.1, 0.9).unwrap() == 0.0);
    check("psi distinct", cooperation_index(&distinct, 0.1, 0.9).unwrap() == 1.0);
    check("psi half", cooperation_index(&half, 0.1, 0.9).unwrap() == half_oracle && half_oracle == 0.5);
    check("psi single herder", cooperation_index(&[vec![Some(0)]], 0.1, 0.0).is_err());

    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{count} examples exact")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

// ---------------------------------------------------------------- determinism

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Runs the batch twice into the same directory and compares every output byte.
pub fn rerun_identical(cfg: &ExperimentConfig) -> Result<usize, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg.clone();
    c.set("output_dir", dir.path().to_str().unwrap()).unwrap();
    run_batch(&c).map_err(|e| e.to_string())?;
    let first = read_tree(dir.path());
    fs::remove_dir_all(dir.path()).unwrap();
    run_batch(&c).map_err(|e| e.to_string())?;
    let second = read_tree(dir.path());
    if first.len() != second.len() || first.is_empty() {
        return Err(format!("{} vs {} files", first.len(), second.len()));
    }
    for ((pa, ba), (pb, bb)) in first.iter().zip(&second) {
        if pa != pb || ba != bb {
            return Err(format!("{} differs", pa.display()));
        }
    }
    Ok(first.len())
}

pub fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("scenario", "select-2v5"),
        ("policy", "heuristic_p2p"),
        ("episodes", "6"),
        ("seed_base", "500"),
        ("trajectories", "true"),
    ] {
        cfg.set(k, v).unwrap();
    }
    let mut notes = Vec::new();
    match rerun_identical(&cfg) {
        Ok(n) => notes.push(format!("heuristic 2v5: {n} files identical")),
        Err(e) => return Outcome::fail(format!("heuristic 2v5: {e}")),
    }
    let weights = repo_root().join("artifacts/ppo_driving.shpw");
    if weights.exists() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("episodes", "8").unwrap();
        cfg.set("weights.driving", weights.to_str().unwrap()).unwrap();
        match rerun_identical(&cfg) {
            Ok(n) => notes.push(format!("learned 1v1: {n} files identical")),
            Err(e) => return Outcome::fail(format!("learned 1v1: {e}")),
        }
    }
    Outcome::new(true, notes.join("; "))
}
