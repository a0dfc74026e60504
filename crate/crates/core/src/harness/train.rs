//! Training runs: environment construction, chunked checkpoints, resume and learning curves.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::control::obs::N_DISCRETE_ACTIONS;
use crate::control::reward::RewardGains;
use crate::episode::EpisodeSpec;
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Scenario};
use crate::harness::{gaussian_from, provenance, resolve_output, CODE_VERSION};
use crate::rl::dqn::{DQNHyper, DqnAgent};
use crate::rl::env::{ContinuousDriving, DiscreteDriving, DrivingEnv, DrivingObs, SelectionEnv};
use crate::rl::policy::{critic, CategoricalActor, GaussianActor};
use crate::rl::ppo::{mappo_envs, PPOHyper, PpoLearner, ReturnStats, StochasticPolicy};
use crate::rl::weights::{file_sha256, Manifest, PolicyWeights};
use crate::rl::{derive_seed, TrainProgress};
use crate::sim::SimParams;

/// Episodes between on-disk checkpoints.
pub const CHECKPOINT_EVERY: usize = 500;

/// Moving-average windows written next to the raw learning curve.
pub const CURVE_WINDOWS: [usize; 3] = [100, 1000, 5000];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Driving,
    Selection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Dqn,
    Ppo,
    Mappo,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Dqn => "dqn",
            Self::Ppo => "ppo",
            Self::Mappo => "mappo",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub algorithm: Algorithm,
    pub task: Task,
    pub weights: PathBuf,
    pub manifest: PathBuf,
    pub curve: PathBuf,
    pub episodes_done: usize,
    pub rewards: Vec<f64>,
}

pub fn task_and_algorithm(cfg: &ExperimentConfig) -> Result<(Task, Algorithm)> {
    let task = match cfg.scenario() {
        Scenario::Drive1v1 => Task::Driving,
        Scenario::Select2v5 => Task::Selection,
        s => return Err(Error::Config(format!("scenario `{}` has no training task", s.name()))),
    };
    let algo = match (task, cfg.get("train.algorithm")) {
        (Task::Driving, "auto" | "ppo") => Algorithm::Ppo,
        (Task::Selection, "auto" | "mappo") => Algorithm::Mappo,
        (_, "dqn") => Algorithm::Dqn,
        (t, a) => return Err(Error::Config(format!("algorithm `{a}` cannot train the {t:?} task"))),
    };
    Ok((task, algo))
}

/// Episode budget for a preset.
pub fn preset_episodes(task: Task, algo: Algorithm, full: bool) -> usize {
    match (task, algo, full) {
        (Task::Driving, Algorithm::Dqn, false) => 2_000,
        (Task::Driving, Algorithm::Dqn, true) => 5_000,
        (Task::Driving, _, false) => 5_000,
        (Task::Driving, _, true) => 20_000,
        (Task::Selection, Algorithm::Dqn, false) => 20_000,
        (Task::Selection, Algorithm::Dqn, true) => 400_000,
        (Task::Selection, _, false) => 20_000,
        (Task::Selection, _, true) => 200_000,
    }
}

pub fn gains(cfg: &ExperimentConfig, algo: Algorithm) -> Result<RewardGains> {
    let base = match algo {
        Algorithm::Dqn => RewardGains::DQN,
        _ => RewardGains::PPO,
    };
    let pick = |k: &str, d: f64| cfg.auto::<f64>(k).map(|v| v.unwrap_or(d));
    let g = RewardGains {
        k_a: pick("reward.k_a", base.k_a)?,
        k_s: pick("reward.k_s", base.k_s)?,
        k_c: pick("reward.k_c", base.k_c)?,
        k_h: pick("reward.k_h", base.k_h)?,
        k_t: pick("reward.k_t", base.k_t)?,
    };
    if let Some(w) = g.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(g)
}

fn stem(task: Task, algo: Algorithm) -> String {
    let t = match task {
        Task::Driving => "driving",
        Task::Selection => "selection",
    };
    format!("{}_{t}", algo.name())
}

/// `episode,reward,ma100,ma1000,ma5000`.
pub fn write_curve(path: &Path, rewards: &[f64], cfg: &ExperimentConfig) -> Result<()> {
    let mut out = provenance(cfg);
    out.push_str("episode,reward");
    for w in CURVE_WINDOWS {
        out.push_str(&format!(",ma{w}"));
    }
    out.push('\n');
    let mut sums = vec![0.0; CURVE_WINDOWS.len()];
    for (k, &r) in rewards.iter().enumerate() {
        out.push_str(&format!("{},{}", k + 1, crate::episode::fmt_num(r)));
        for (i, &w) in CURVE_WINDOWS.iter().enumerate() {
            sums[i] += r;
            if k >= w {
                sums[i] -= rewards[k - w];
            }
            out.push_str(&format!(",{}", crate::episode::fmt_num(sums[i] / (k + 1).min(w) as f64)));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    task: Task,
    algo: Algorithm,
    dir: PathBuf,
    target: usize,
    seed: u64,
    hyper: serde_json::Value,
    sim: SimParams,
    gains: RewardGains,
    started: Instant,
}

impl Run<'_> {
    fn paths(&self) -> (PathBuf, PathBuf, PathBuf) {
        let s = stem(self.task, self.algo);
        (
            self.dir.join(format!("{s}.shpw")),
            self.dir.join(format!("{s}.json")),
            self.dir.join(format!("{s}_curve.csv")),
        )
    }

    fn save(&self, weights: PolicyWeights, done: usize, env_steps: u64, updates: u64, rewards: &[f64]) -> Result<TrainReport> {
        let (wp, mp, cp) = self.paths();
        weights.with_vector("curve", rewards).save(&wp)?;
        let manifest = Manifest {
            algorithm: self.algo.name().into(),
            scenario: self.cfg.scenario().name().into(),
            preset: self.cfg.get("train.preset").into(),
            seed: self.seed,
            episodes_target: self.target,
            episodes_done: done,
            env_steps,
            updates,
            hyper: self.hyper.clone(),
            sim: serde_json::to_value(&self.sim)?,
            reward: serde_json::to_value(self.gains)?,
            config_hash: self.cfg.hash(),
            code_version: CODE_VERSION.into(),
            weights_file: wp.file_name().unwrap().to_string_lossy().into_owned(),
            weights_sha256: file_sha256(&wp)?,
            extra: [
                ("n_w".to_string(), serde_json::json!(self.cfg.int("selection.n_w"))),
                ("driver".to_string(), serde_json::json!(self.cfg.get("train.driver"))),
            ]
            .into_iter()
            .filter(|_| self.task == Task::Selection)
            .collect(),
        };
        manifest.save(&mp)?;
        write_curve(&cp, rewards, self.cfg)?;
        Ok(TrainReport {
            algorithm: self.algo,
            task: self.task,
            weights: wp,
            manifest: mp,
            curve: cp,
            episodes_done: done,
            rewards: rewards.to_vec(),
        })
    }

    /// Existing checkpoint when resuming.
    fn resume(&self) -> Result<Option<(PolicyWeights, Manifest)>> {
        if !self.cfg.flag("train.resume") {
            return Ok(None);
        }
        let (wp, mp, _) = self.paths();
        if !mp.exists() {
            return Ok(None);
        }
        Ok(Some((PolicyWeights::load(&wp)?, Manifest::load(&mp)?)))
    }

    fn logger(&self) -> impl FnMut(&TrainProgress) + '_ {
        let every = self.cfg.int("train.log_every").max(1) as usize;
        let mut acc = 0.0;
        let mut n = 0usize;
        move |p: &TrainProgress| {
            acc += p.reward;
            n += 1;
            if p.episode % every == 0 {
                eprintln!(
                    "[{} {:?}] episode {}/{} mean reward {:.3} steps {} updates {}{} elapsed {:.0}s",
                    self.algo.name(),
                    self.task,
                    p.episode,
                    self.target,
                    acc / n as f64,
                    p.env_steps,
                    p.updates,
                    p.epsilon.map(|e| format!(" eps {e:.3}")).unwrap_or_default(),
                    self.started.elapsed().as_secs_f64()
                );
                acc = 0.0;
                n = 0;
            }
        }
    }
}

/// Trains the configured policy, checkpointing every [`CHECKPOINT_EVERY`] episodes. On
/// divergence the last checkpoint is kept and the error is returned.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    let (task, algo) = task_and_algorithm(cfg)?;
    let full = cfg.get("train.preset") == "full";
    let target = cfg.auto::<usize>("train.episodes")?.unwrap_or(preset_episodes(task, algo, full));
    let dir = resolve_output(&cfg.output_dir());
    fs::create_dir_all(&dir)?;
    let (n, m) = match task {
        Task::Driving => (1, 1),
        Task::Selection => (2, 5),
    };
    let run = Run {
        cfg,
        task,
        algo,
        dir,
        target,
        seed: cfg.int("train.seed"),
        hyper: serde_json::Value::Null,
        sim: SimParams::training(n, m),
        gains: gains(cfg, algo)?,
        started: Instant::now(),
    };
    match algo {
        Algorithm::Dqn => train_dqn(run),
        Algorithm::Ppo | Algorithm::Mappo => train_ppo(run),
    }
}

fn lr_override(cfg: &ExperimentConfig) -> Result<Option<f64>> {
    cfg.auto::<f64>("train.lr")
}

fn driver(cfg: &ExperimentConfig) -> Result<GaussianActor> {
    let path = PathBuf::from(cfg.get("train.driver"));
    let w = PolicyWeights::load(&path)
        .map_err(|e| Error::Config(format!("selection training needs a driving policy at `{}`: {e}", path.display())))?;
    gaussian_from(&w)
}

fn train_dqn(mut run: Run) -> Result<TrainReport> {
    let cfg = run.cfg;
    let mut hyper = match run.task {
        Task::Driving => DQNHyper::driving(),
        Task::Selection => DQNHyper::selection(),
    };
    hyper.huber = cfg.flag("train.huber");
    hyper.train_every = cfg.int("train.train_every").max(1) as usize;
    if let Some(lr) = lr_override(cfg)? {
        hyper.lr = lr;
    }
    run.hyper = serde_json::to_value(&hyper)?;
    let n_w = cfg.int("selection.n_w") as usize;
    let mut env: Box<dyn crate::rl::env::Env<Action = usize>> = match run.task {
        Task::Driving => Box::new(DiscreteDriving(DrivingEnv::training(run.gains, DrivingObs::Absolute))),
        Task::Selection => Box::new(SelectionEnv::new(
            run.sim.clone(),
            driver(cfg)?,
            n_w,
            run.gains.k_t,
            None,
            &EpisodeSpec::selection(),
        )?),
    };
    let n_actions = match run.task {
        Task::Driving => N_DISCRETE_ACTIONS,
        Task::Selection => run.sim.n_targets,
    };
    let mut agent = match run.resume()? {
        Some((w, man)) => {
            let mut a = DqnAgent::from_network(w.net("q")?.clone(), hyper, run.seed);
            a.target.copy_params_from(w.net("target")?)?;
            a.episodes_done = man.episodes_done;
            a.env_steps = man.env_steps;
            a.grad_steps = man.updates;
            a.curve = w.vector("curve")?.to_vec();
            a
        }
        None => DqnAgent::new(env.obs_dim(), n_actions, hyper, run.seed)?,
    };
    let mut log = run.logger();
    let mut report = None;
    while agent.episodes_done < run.target || report.is_none() {
        let next = (agent.episodes_done + CHECKPOINT_EVERY).min(run.target);
        let result = agent.train(env.as_mut(), next, &mut log);
        let w = PolicyWeights::new().with_net("q", &agent.q).with_net("target", &agent.target);
        report = Some(run.save(w, agent.episodes_done, agent.env_steps, agent.grad_steps, &agent.curve)?);
        result?;
    }
    Ok(report.unwrap())
}

fn ppo_weights<P: StochasticPolicy>(l: &PpoLearner<P>) -> PolicyWeights {
    let mut w = PolicyWeights::new()
        .with_net("actor", l.policy.net())
        .with_net("critic", &l.critic);
    if l.hyper.value_norm {
        w = w.with_vector("return_stats", &l.returns.to_vec());
    }
    if l.policy.extra().is_empty() {
        w
    } else {
        w.with_vector("log_std", l.policy.extra())
    }
}

fn train_ppo(mut run: Run) -> Result<TrainReport> {
    let cfg = run.cfg;
    let mut hyper = match run.algo {
        Algorithm::Mappo => PPOHyper::selection(),
        _ => PPOHyper::driving(),
    };
    if let Some(lr) = lr_override(cfg)? {
        hyper.lr = lr;
    }
    if let Some(c) = cfg.auto::<f64>("train.ent_coef")? {
        hyper.ent_coef = c;
    }
    run.hyper = serde_json::to_value(&hyper)?;
    let resume = run.resume()?;
    let seed = run.seed;
    match run.algo {
        Algorithm::Mappo => {
            let n_w = cfg.int("selection.n_w") as usize;
            let drv = driver(cfg)?;
            let k_t = run.gains.k_t;
            let make = |_: usize| SelectionEnv::training(2, 5, drv.clone(), n_w, k_t).expect("valid selection env");
            let mut envs = mappo_envs(make, &hyper)?;
            let d = 14;
            let mut learner = match &resume {
                Some((w, _)) => PpoLearner::new(
                    CategoricalActor { net: w.net("actor")?.clone() },
                    w.net("critic")?.clone(),
                    hyper,
                    seed,
                )?,
                None => PpoLearner::new(
                    CategoricalActor::init(d, &hyper.hidden, 5, derive_seed(seed, 1, 0))?,
                    critic(d, &hyper.hidden, derive_seed(seed, 1, 1))?,
                    hyper,
                    seed,
                )?,
            };
            if let Some((w, man)) = &resume {
                restore(&mut learner, man, w)?;
            }
            ppo_loop(&run, &mut learner, &mut envs)
        }
        _ => {
            let gains = run.gains;
            let make = |_: usize| ContinuousDriving(DrivingEnv::training(gains, DrivingObs::Normalized));
            let mut envs: Vec<ContinuousDriving> = (0..hyper.actors).map(make).collect();
            let mut learner = match &resume {
                Some((w, _)) => PpoLearner::new(gaussian_from(w)?, w.net("critic")?.clone(), hyper, seed)?,
                None => PpoLearner::new(
                    GaussianActor::init(4, &hyper.hidden, 2, 0.0, derive_seed(seed, 1, 0))?,
                    critic(4, &hyper.hidden, derive_seed(seed, 1, 1))?,
                    hyper,
                    seed,
                )?,
            };
            if let Some((w, man)) = &resume {
                restore(&mut learner, man, w)?;
            }
            ppo_loop(&run, &mut learner, &mut envs)
        }
    }
}

fn restore<P: StochasticPolicy>(l: &mut PpoLearner<P>, man: &Manifest, w: &PolicyWeights) -> Result<()> {
    l.episodes_done = man.episodes_done;
    l.episodes_started = man.episodes_done;
    l.env_steps = man.env_steps;
    l.updates = man.updates;
    l.curve = w.vector("curve")?.to_vec();
    if l.hyper.value_norm {
        l.returns = ReturnStats::from_slice(w.vector("return_stats")?)?;
    }
    Ok(())
}

fn ppo_loop<P, E>(run: &Run, learner: &mut PpoLearner<P>, envs: &mut [E]) -> Result<TrainReport>
where
    P: StochasticPolicy,
    E: crate::rl::env::Env<Action = P::Action>,
{
    let mut log = run.logger();
    let mut report = None;
    while learner.episodes_done < run.target || report.is_none() {
        let next = (learner.episodes_done + CHECKPOINT_EVERY).min(run.target);
        let result = learner.train(envs, next, &mut log);
        report = Some(run.save(
            ppo_weights(learner),
            learner.episodes_done,
            learner.env_steps,
            learner.updates,
            &learner.curve,
        )?);
        result?;
    }
    Ok(report.unwrap())
}

/// Human-readable summary of where a run's artifacts went.
pub fn describe(report: &TrainReport) -> String {
    format!(
        "{} {:?}: {} episodes\n  weights  {}\n  manifest {}\n  curve    {}\n",
        report.algorithm.name(),
        report.task,
        report.episodes_done,
        report.weights.display(),
        report.manifest.display(),
        report.curve.display()
    )
}
