//! Seeded batch evaluation with per-episode metrics and median/IQR aggregates.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::episode::{fmt_num, run_episode, EpisodeSpec, TrajectoryLog};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Scenario};
use crate::harness::{controller_proto, episode_params, episode_spec, provenance, resolve_output, sim_params, ControllerProto};
use crate::metrics::EpisodeMetrics;
use crate::sim::SimParams;
use crate::vec2::Vec2;

pub const COLUMNS: [&str; 11] = [
    "seed", "success", "t_g", "t_s", "d_g", "d_f", "psi_g", "psi_f", "chi_max", "track_frac", "final_time",
];

/// Scores of one seeded episode. Undefined times are `+inf`, other undefined values NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub seed: u64,
    pub success: bool,
    pub t_g: f64,
    pub t_s: f64,
    pub d_g: f64,
    pub d_f: f64,
    pub psi_g: f64,
    pub psi_f: f64,
    /// Largest containment fraction reached.
    pub chi_max: f64,
    /// After first gathering, share of steps with the targets' mean within the goal radius.
    pub track_frac: f64,
    pub final_time: f64,
}

impl EpisodeRow {
    pub fn from_log(seed: u64, log: &TrajectoryLog, spec: &EpisodeSpec) -> Result<Self> {
        let m = EpisodeMetrics::from_log(log, &spec.metric_spec())?;
        let chi_max = m.chi_series.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            seed,
            success: m.success,
            t_g: m.gathering_time.unwrap_or(f64::INFINITY),
            t_s: m.settling_time.unwrap_or(f64::INFINITY),
            d_g: m.path_length_gathering.unwrap_or(f64::NAN),
            d_f: m.path_length_final,
            psi_g: m.coop_gathering.unwrap_or(f64::NAN),
            psi_f: m.coop_final.unwrap_or(f64::NAN),
            chi_max,
            track_frac: tracking_fraction(log, m.gathering_time),
            final_time: m.final_time,
        })
    }

    pub fn values(&self) -> [f64; 10] {
        [
            if self.success { 1.0 } else { 0.0 },
            self.t_g,
            self.t_s,
            self.d_g,
            self.d_f,
            self.psi_g,
            self.psi_f,
            self.chi_max,
            self.track_frac,
            self.final_time,
        ]
    }

    pub fn gathered(&self) -> bool {
        self.t_g.is_finite()
    }
}

/// Share of steps at or after `t_g` whose mean target position lies within `ρ_G` of the
/// goal center. NaN when the targets were never gathered.
pub fn tracking_fraction(log: &TrajectoryLog, t_g: Option<f64>) -> f64 {
    let Some(t_g) = t_g else {
        return f64::NAN;
    };
    let eps = 1e-9 * log.dt;
    let mut hits = 0usize;
    let mut total = 0usize;
    for r in log.records.iter().filter(|r| r.state.time >= t_g - eps) {
        let m = r.state.n_targets().max(1) as f64;
        let mean = r.state.target_pos.iter().fold(Vec2::ZERO, |a, &p| a + p) / m;
        total += 1;
        if mean.dist(r.state.goal_center) <= log.rho_g {
            hits += 1;
        }
    }
    hits as f64 / total.max(1) as f64
}

/// Linear-interpolation quantile ignoring NaN; infinities sort last.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    if lo == hi || v[lo] == v[hi] {
        return v[lo];
    }
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub label: String,
    pub rows: Vec<EpisodeRow>,
}

impl BatchSummary {
    pub fn success_rate(&self) -> f64 {
        self.rate(|r| r.success)
    }

    pub fn gathering_rate(&self) -> f64 {
        self.rate(|r| r.gathered())
    }

    pub fn rate(&self, f: impl Fn(&EpisodeRow) -> bool) -> f64 {
        self.rows.iter().filter(|r| f(r)).count() as f64 / self.rows.len().max(1) as f64
    }

    pub fn column(&self, f: impl Fn(&EpisodeRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn median(&self, f: impl Fn(&EpisodeRow) -> f64) -> f64 {
        quantile(&self.column(f), 0.5)
    }

    /// Per-episode rows, then `median`, `q1` and `q3` rows; the aggregate `success`
    /// entry is the success rate.
    pub fn write_csv<W: Write>(&self, mut w: W, cfg: &ExperimentConfig) -> Result<()> {
        w.write_all(provenance(cfg).as_bytes())?;
        writeln!(w, "{}", COLUMNS.join(","))?;
        for r in &self.rows {
            let v = r.values();
            write!(w, "{},{}", r.seed, u8::from(r.success))?;
            for x in &v[1..] {
                write!(w, ",{}", fmt_num(*x))?;
            }
            writeln!(w)?;
        }
        for (name, q) in [("median", 0.5), ("q1", 0.25), ("q3", 0.75)] {
            write!(w, "{name},{}", fmt_num(self.success_rate()))?;
            for i in 1..10 {
                write!(w, ",{}", fmt_num(quantile(&self.column(|r| r.values()[i]), q)))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Runs the configured seeds on `workers` threads (0: all cores); results come back in seed order.
pub fn run_seeds(
    cfg: &ExperimentConfig,
    base: &SimParams,
    proto: &ControllerProto,
    label: &str,
    traj_dir: Option<&Path>,
) -> Result<BatchSummary> {
    let seeds: Vec<u64> = (0..cfg.episodes() as u64).map(|i| cfg.seed_base() + i).collect();
    let workers = cfg.int("workers") as usize;
    if workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        return pool.install(|| run_seeds_on(cfg, base, proto, label, traj_dir, &seeds));
    }
    run_seeds_on(cfg, base, proto, label, traj_dir, &seeds)
}

fn run_seeds_on(
    cfg: &ExperimentConfig,
    base: &SimParams,
    proto: &ControllerProto,
    label: &str,
    traj_dir: Option<&Path>,
    seeds: &[u64],
) -> Result<BatchSummary> {
    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let params = episode_params(cfg, base, seed);
            let spec = episode_spec(cfg, &params)?;
            let mut controller = proto.instantiate();
            let log = run_episode(controller.as_mut(), &params, seed, &spec)?;
            if let Some(dir) = traj_dir {
                let f = fs::File::create(dir.join(format!("seed_{seed}.csv")))?;
                let mut w = BufWriter::new(f);
                w.write_all(provenance(cfg).as_bytes())?;
                log.write_csv(&mut w)?;
            }
            EpisodeRow::from_log(seed, &log, &spec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchSummary {
        label: label.to_string(),
        rows,
    })
}

/// Runs the configured batch and writes `<label>/metrics.csv` (plus trajectories when
/// enabled) under the output directory. The benchmark scenario evaluates the learned and
/// heuristic stacks on the same seeds.
pub fn run_batch(cfg: &ExperimentConfig) -> Result<Vec<BatchSummary>> {
    let base = sim_params(cfg)?;
    let out = resolve_output(&cfg.output_dir());
    let labels: Vec<(&str, bool)> = match cfg.scenario() {
        Scenario::Benchmark => vec![("learned", false), ("heuristic", true)],
        _ => vec![(
            if cfg.get("policy") == "heuristic_p2p" { "heuristic" } else { "learned" },
            cfg.get("policy") == "heuristic_p2p",
        )],
    };
    let mut protos = Vec::new();
    for &(label, heuristic) in &labels {
        protos.push((label, controller_proto(cfg, &base, heuristic)?));
    }
    let mut summaries = Vec::new();
    for (label, proto) in protos {
        let dir = out.join(label);
        fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("cannot create `{}`: {e}", dir.display())))?;
        let traj: Option<PathBuf> = cfg.flag("trajectories").then(|| dir.join("trajectories"));
        if let Some(t) = &traj {
            fs::create_dir_all(t)?;
        }
        let summary = run_seeds(cfg, &base, &proto, label, traj.as_deref())?;
        let mut w = BufWriter::new(fs::File::create(dir.join("metrics.csv"))?);
        summary.write_csv(&mut w, cfg)?;
        w.flush()?;
        summaries.push(summary);
    }
    fs::write(out.join("config.txt"), cfg.serialize())?;
    Ok(summaries)
}

/// One threshold check of `--assert` mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        pass,
        detail,
    }
}

/// Acceptance thresholds that apply to the configured scenario.
pub fn assert_thresholds(cfg: &ExperimentConfig, summaries: &[BatchSummary]) -> Vec<Check> {
    let find = |l: &str| summaries.iter().find(|s| s.label == l);
    let mut out = Vec::new();
    let robust = cfg.flag("robustness.enabled");
    match cfg.scenario() {
        Scenario::Drive1v1 => {
            if let Some(s) = summaries.first() {
                let (need, what) = match (cfg.get("policy"), cfg.get("policy.driving")) {
                    ("learned", "dqn") => (0.80, "DQN driving success"),
                    ("learned", _) => (0.95, "PPO driving success"),
                    _ => (1.0, "heuristic gathering"),
                };
                let rate = if what == "heuristic gathering" { s.gathering_rate() } else { s.success_rate() };
                out.push(check(what, rate >= need, format!("{rate:.3} >= {need}")));
            }
        }
        Scenario::Select2v5 => {
            if let Some(s) = summaries.first() {
                let rate = s.success_rate();
                out.push(check("selection success", rate >= 0.90, format!("{rate:.3} >= 0.90")));
                let psi = s.median(|r| r.psi_g);
                out.push(check("median cooperation at gathering", psi > 0.5, format!("{psi:.3} > 0.5")));
            }
        }
        Scenario::Benchmark => {
            if let (Some(l), Some(h)) = (find("learned"), find("heuristic")) {
                if robust {
                    let rate = l.success_rate();
                    out.push(check("perturbed learned success", rate >= 0.95, format!("{rate:.3} >= 0.95")));
                } else {
                    let g = h.gathering_rate();
                    out.push(check("heuristic gathering", g >= 1.0, format!("{g:.3} == 1")));
                    let (a, b) = (l.median(|r| r.t_s), h.median(|r| r.t_s));
                    out.push(check("learned median t_s <= heuristic", a <= b, format!("{a:.3} <= {b:.3}")));
                }
            }
        }
        Scenario::Scale5v50 => {
            if let Some(s) = summaries.first() {
                let full = s.rows.iter().filter(|r| r.chi_max >= 1.0).count();
                let need = (0.6 * s.rows.len() as f64).ceil() as usize;
                out.push(check("full containment", full >= need, format!("{full}/{} >= {need}", s.rows.len())));
            }
        }
        Scenario::Track => {
            if let Some(s) = summaries.first() {
                let frac = s.median(|r| if r.gathered() { r.track_frac } else { 0.0 });
                out.push(check("tracking containment", frac >= 0.9, format!("median {frac:.3} >= 0.9")));
            }
        }
    }
    out
}
