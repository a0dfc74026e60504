//! Experiment configuration as flat `dotted.key = value` text.
//!
//! Every key has a default, so a file only lists what it changes. Serialising writes the
//! complete, sorted key set, which is also what the configuration hash covers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rl::weights::hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    Int,
    Bool,
    Text,
    Choice(&'static [&'static str]),
}

const SCENARIOS: &[&str] = &["drive-1v1", "select-2v5", "scale-5v50", "track", "benchmark"];
const DRIVERS: &[&str] = &["ppo", "dqn", "heuristic"];
const SELECTORS: &[&str] = &["mappo", "dqn", "heuristic_p2p"];
const POLICIES: &[&str] = &["learned", "heuristic_p2p"];
const TRAJECTORIES: &[&str] = &["static", "sigmoid"];
const DYNAMICS: &[&str] = &["nominal", "cohesive"];
const ALGORITHMS: &[&str] = &["auto", "dqn", "ppo", "mappo"];
const PRESETS: &[&str] = &["desk", "full"];

/// `(key, kind, default)`. `auto` defers to the scenario.
const SCHEMA: &[(&str, Kind, &str)] = &[
    ("scenario", Kind::Choice(SCENARIOS), "drive-1v1"),
    ("policy", Kind::Choice(POLICIES), "learned"),
    ("policy.driving", Kind::Choice(DRIVERS), "ppo"),
    ("policy.selection", Kind::Choice(SELECTORS), "mappo"),
    ("weights.driving", Kind::Text, "artifacts/ppo_driving.shpw"),
    ("weights.selection", Kind::Text, "artifacts/mappo_selection.shpw"),
    ("episodes", Kind::Int, "100"),
    ("seed_base", Kind::Int, "0"),
    ("output_dir", Kind::Text, "runs/default"),
    ("trajectories", Kind::Bool, "false"),
    ("workers", Kind::Int, "0"),
    ("robustness.enabled", Kind::Bool, "false"),
    ("robustness.magnitude", Kind::Float, "0.2"),
    ("sim.n_herders", Kind::Text, "auto"),
    ("sim.n_targets", Kind::Text, "auto"),
    ("sim.diffusion", Kind::Float, "3"),
    ("sim.zeta", Kind::Float, "4"),
    ("sim.lambda", Kind::Float, "40"),
    ("sim.beta", Kind::Float, "40"),
    ("sim.r_c", Kind::Float, "0.1"),
    ("sim.v_max", Kind::Float, "12"),
    ("sim.rho_0", Kind::Float, "25"),
    ("sim.rho_g", Kind::Float, "5"),
    ("sim.dt", Kind::Float, "0.01"),
    ("sim.strict", Kind::Bool, "false"),
    ("episode.t_max", Kind::Text, "auto"),
    ("episode.t_contain", Kind::Float, "10"),
    ("episode.chi_star", Kind::Float, "0.99"),
    ("dynamics", Kind::Choice(DYNAMICS), "nominal"),
    ("cohesion.gain", Kind::Float, "1"),
    ("cohesion.init_radius", Kind::Float, "2"),
    ("selection.n_w", Kind::Int, "10"),
    ("selection.evaluation", Kind::Bool, "true"),
    ("sensing.n_obs", Kind::Text, "auto"),
    ("sensing.m_obs", Kind::Text, "auto"),
    ("goal.trajectory", Kind::Choice(TRAJECTORIES), "static"),
    ("goal.speed_ratio", Kind::Float, "50"),
    ("goal.hold", Kind::Float, "30"),
    ("p2p.standoff", Kind::Float, "1"),
    ("p2p.gain", Kind::Float, "10"),
    ("p2p.detour_radius", Kind::Float, "3"),
    ("train.algorithm", Kind::Choice(ALGORITHMS), "auto"),
    ("train.preset", Kind::Choice(PRESETS), "desk"),
    ("train.episodes", Kind::Text, "auto"),
    ("train.seed", Kind::Int, "1"),
    ("train.resume", Kind::Bool, "false"),
    ("train.log_every", Kind::Int, "100"),
    ("train.driver", Kind::Text, "artifacts/ppo_driving.shpw"),
    ("train.huber", Kind::Bool, "false"),
    ("train.train_every", Kind::Int, "4"),
    ("train.lr", Kind::Text, "auto"),
    ("train.ent_coef", Kind::Text, "auto"),
    ("reward.k_a", Kind::Text, "auto"),
    ("reward.k_s", Kind::Text, "auto"),
    ("reward.k_c", Kind::Text, "auto"),
    ("reward.k_h", Kind::Text, "auto"),
    ("reward.k_t", Kind::Text, "auto"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Drive1v1,
    Select2v5,
    Scale5v50,
    Track,
    Benchmark,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::Drive1v1 => "drive-1v1",
            Self::Select2v5 => "select-2v5",
            Self::Scale5v50 => "scale-5v50",
            Self::Track => "track",
            Self::Benchmark => "benchmark",
        }
    }

    /// Default `(herders, targets)`.
    pub fn population(self) -> (usize, usize) {
        match self {
            Self::Drive1v1 => (1, 1),
            Self::Scale5v50 => (5, 50),
            _ => (2, 5),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "drive-1v1" => Self::Drive1v1,
            "select-2v5" => Self::Select2v5,
            "scale-5v50" => Self::Scale5v50,
            "track" => Self::Track,
            "benchmark" => Self::Benchmark,
            _ => return Err(Error::Config(format!("unknown scenario `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            values: SCHEMA.iter().map(|(k, _, d)| (k.to_string(), d.to_string())).collect(),
        }
    }
}

fn check(key: &str, kind: Kind, value: &str) -> Result<()> {
    let bad = |what: &str| Err(Error::Config(format!("`{key}`: expected {what}, got `{value}`")));
    match kind {
        Kind::Float => match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(()),
            _ => bad("a finite number"),
        },
        Kind::Int => value.parse::<u64>().map(|_| ()).or_else(|_| bad("a non-negative integer")),
        Kind::Bool => match value {
            "true" | "false" => Ok(()),
            _ => bad("true or false"),
        },
        Kind::Text => Ok(()),
        Kind::Choice(options) if options.contains(&value) => Ok(()),
        Kind::Choice(options) => bad(&format!("one of {}", options.join(" | "))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text: every key, sorted.
    pub fn serialize(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.serialize().as_bytes()))[..16].to_string()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (_, kind, _) = SCHEMA
            .iter()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
        check(key, *kind, value)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` overrides such as those given on the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{}` is not key=value", o.as_ref())))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn float(&self, key: &str) -> f64 {
        self.get(key).parse().expect("validated float")
    }

    pub fn int(&self, key: &str) -> u64 {
        self.get(key).parse().expect("validated integer")
    }

    pub fn flag(&self, key: &str) -> bool {
        self.get(key) == "true"
    }

    /// Value of a key that may be `auto`.
    pub fn auto<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            "auto" => Ok(None),
            v => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn scenario(&self) -> Scenario {
        self.get("scenario").parse().expect("validated scenario")
    }

    pub fn episodes(&self) -> usize {
        self.int("episodes") as usize
    }

    pub fn seed_base(&self) -> u64 {
        self.int("seed_base")
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(self.get("output_dir"))
    }

    pub fn validate(&self) -> Result<()> {
        for (k, kind, _) in SCHEMA {
            check(k, *kind, self.get(k))?;
        }
        if self.episodes() == 0 {
            return Err(Error::Config("`episodes` must be >= 1".into()));
        }
        if self.float("robustness.magnitude") < 0.0 {
            return Err(Error::Config("`robustness.magnitude` must be >= 0".into()));
        }
        if self.int("selection.n_w") == 0 {
            return Err(Error::Config("`selection.n_w` must be >= 1".into()));
        }
        for k in ["sim.n_herders", "sim.n_targets", "sensing.n_obs", "sensing.m_obs", "train.episodes"] {
            self.auto::<usize>(k)?;
        }
        for k in ["episode.t_max", "train.lr", "train.ent_coef", "reward.k_a", "reward.k_s", "reward.k_c", "reward.k_h", "reward.k_t"] {
            self.auto::<f64>(k)?;
        }
        Ok(())
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}
