//! Proximal policy optimisation with a clipped surrogate, GAE and a separate critic.
//! The same learner drives the Gaussian driving actor and the parameter-shared
//! categorical selection actor; each agent of each environment is one rollout stream.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::adam::Adam;
use crate::rl::env::Env;
use crate::rl::gae::{gae_with_ends, StepEnd};
use crate::rl::net::{clip_global_norm, log_softmax, Cache, DenseNet};
use crate::rl::policy::{arch, critic, CategoricalActor, GaussianActor};
use crate::rl::{derive_seed, TrainProgress};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
/// Bounds on the Gaussian log-std, in units of the herder speed bound.
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PPOHyper {
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub epochs: usize,
    /// Steps collected per stream between updates.
    pub horizon: usize,
    pub minibatch: usize,
    /// Rollout streams (environments × agents).
    pub actors: usize,
    pub max_grad_norm: f64,
    pub normalize_adv: bool,
    pub hidden: Vec<usize>,
    /// Clip actor and critic gradient norms independently.
    #[serde(default)]
    pub separate_clip: bool,
    /// Fit the critic to standardised returns.
    #[serde(default)]
    pub value_norm: bool,
}

impl PPOHyper {
    pub fn driving() -> Self {
        Self {
            lr: 5e-4,
            gamma: 0.98,
            gae_lambda: 0.95,
            clip: 0.2,
            vf_coef: 0.5,
            ent_coef: 0.1,
            epochs: 10,
            horizon: 4096,
            minibatch: 128,
            actors: 8,
            max_grad_norm: 0.5,
            normalize_adv: true,
            hidden: arch::PPO_DRIVING_HIDDEN.to_vec(),
            separate_clip: false,
            value_norm: false,
        }
    }

    /// Settings for the shared selection policy: short horizon, many streams, a light
    /// entropy bonus, standardised critic targets.
    pub fn selection() -> Self {
        Self {
            ent_coef: 0.01,
            horizon: 32,
            minibatch: 1024,
            actors: 32,
            hidden: arch::MAPPO_HIDDEN.to_vec(),
            separate_clip: true,
            value_norm: true,
            ..Self::driving()
        }
    }

    pub fn batch_size(&self) -> usize {
        self.horizon * self.actors
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Params(format!("PPO hyper-parameters: {m}")));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("discount and GAE parameter must lie in (0, 1]");
        }
        if self.epochs == 0 || self.horizon == 0 || self.actors == 0 || self.minibatch == 0 {
            return bad("epochs, horizon, actors and minibatch must be >= 1");
        }
        if self.batch_size() % self.minibatch != 0 {
            return bad("horizon x actors must be divisible by the minibatch size");
        }
        if !(self.lr > 0.0) || self.vf_coef < 0.0 || self.ent_coef < 0.0 {
            return bad("step size must be > 0 and loss coefficients >= 0");
        }
        Ok(())
    }
}

/// Clipped surrogate `min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, adv: f64, clip: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - clip, 1.0 + clip) * adv)
}

/// Derivative of [`clipped_surrogate`] with respect to the new log-probability.
pub fn surrogate_grad(ratio: f64, adv: f64, clip: f64) -> f64 {
    let clipped = (adv > 0.0 && ratio > 1.0 + clip) || (adv < 0.0 && ratio < 1.0 - clip);
    if clipped {
        0.0
    } else {
        ratio * adv
    }
}

/// A stochastic policy the PPO learner can optimise.
pub trait StochasticPolicy: Clone {
    type Action: Clone;

    fn net(&self) -> &DenseNet;
    fn net_mut(&mut self) -> &mut DenseNet;
    /// Trainable parameters outside the network.
    fn extra(&self) -> &[f64];
    fn extra_mut(&mut self) -> &mut [f64];
    /// Whether the distribution is parameterised by pre-head logits.
    fn uses_logits(&self) -> bool;
    /// Width of the stored action encoding.
    fn action_width(&self) -> usize;
    fn sample<R: Rng>(&self, out: &[f64], rng: &mut R, enc: &mut [f64]) -> Self::Action;
    fn log_prob_entropy(&self, out: &[f64], enc: &[f64]) -> (f64, f64);
    /// Adds `w_logp·∂logp + w_ent·∂H` with respect to `out` and the extra parameters.
    fn accumulate(&self, out: &[f64], enc: &[f64], w_logp: f64, w_ent: f64, grad_out: &mut [f64], grad_extra: &mut [f64]);
    /// Projects the extra parameters back onto their feasible set after an optimiser step.
    fn project(&mut self) {}
}

impl StochasticPolicy for GaussianActor {
    type Action = Vec<f64>;

    fn net(&self) -> &DenseNet {
        &self.net
    }
    fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }
    fn extra(&self) -> &[f64] {
        &self.log_std
    }
    fn extra_mut(&mut self) -> &mut [f64] {
        &mut self.log_std
    }
    fn uses_logits(&self) -> bool {
        false
    }
    fn action_width(&self) -> usize {
        self.log_std.len()
    }

    fn sample<R: Rng>(&self, out: &[f64], rng: &mut R, enc: &mut [f64]) -> Vec<f64> {
        for ((e, mu), s) in enc.iter_mut().zip(out).zip(&self.log_std) {
            let z: f64 = rng.sample(StandardNormal);
            *e = mu + s.exp() * z;
        }
        enc.to_vec()
    }

    fn log_prob_entropy(&self, out: &[f64], enc: &[f64]) -> (f64, f64) {
        let mut logp = 0.0;
        let mut ent = 0.0;
        for ((a, mu), s) in enc.iter().zip(out).zip(&self.log_std) {
            let z = (a - mu) * (-s).exp();
            logp += -0.5 * z * z - s - HALF_LN_2PI;
            ent += s + HALF_LN_2PI + 0.5;
        }
        (logp, ent)
    }

    fn accumulate(&self, out: &[f64], enc: &[f64], w_logp: f64, w_ent: f64, grad_out: &mut [f64], grad_extra: &mut [f64]) {
        for i in 0..out.len() {
            let s = self.log_std[i];
            let inv_var = (-2.0 * s).exp();
            let d = enc[i] - out[i];
            grad_out[i] += w_logp * d * inv_var;
            grad_extra[i] += w_logp * (d * d * inv_var - 1.0) + w_ent;
        }
    }

    fn project(&mut self) {
        for s in self.log_std.iter_mut() {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

impl StochasticPolicy for CategoricalActor {
    type Action = usize;

    fn net(&self) -> &DenseNet {
        &self.net
    }
    fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }
    fn extra(&self) -> &[f64] {
        &[]
    }
    fn extra_mut(&mut self) -> &mut [f64] {
        &mut []
    }
    fn uses_logits(&self) -> bool {
        true
    }
    fn action_width(&self) -> usize {
        1
    }

    fn sample<R: Rng>(&self, out: &[f64], rng: &mut R, enc: &mut [f64]) -> usize {
        let logp = log_softmax(out);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut choice = logp.len() - 1;
        for (k, lp) in logp.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                choice = k;
                break;
            }
        }
        enc[0] = choice as f64;
        choice
    }

    fn log_prob_entropy(&self, out: &[f64], enc: &[f64]) -> (f64, f64) {
        let logp = log_softmax(out);
        let ent = -logp.iter().map(|l| l.exp() * l).sum::<f64>();
        (logp[enc[0] as usize], ent)
    }

    fn accumulate(&self, out: &[f64], enc: &[f64], w_logp: f64, w_ent: f64, grad_out: &mut [f64], _: &mut [f64]) {
        let logp = log_softmax(out);
        let ent = -logp.iter().map(|l| l.exp() * l).sum::<f64>();
        let a = enc[0] as usize;
        for k in 0..out.len() {
            let p = logp[k].exp();
            let onehot = if k == a { 1.0 } else { 0.0 };
            grad_out[k] += w_logp * (onehot - p) - w_ent * p * (logp[k] + ent);
        }
    }
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Running mean and variance of critic targets (Welford).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnStats {
    pub count: f64,
    pub mean: f64,
    pub m2: f64,
}

impl Default for ReturnStats {
    fn default() -> Self {
        Self {
            count: 0.0,
            mean: 0.0,
            m2: 0.0,
        }
    }
}

impl ReturnStats {
    pub fn push_all(&mut self, xs: &[f64]) {
        for &x in xs {
            self.count += 1.0;
            let d = x - self.mean;
            self.mean += d / self.count;
            self.m2 += d * (x - self.mean);
        }
    }

    pub fn std(&self) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2 / (self.count - 1.0)).sqrt().max(1e-6)
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std() + self.mean
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.count, self.mean, self.m2]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [count, mean, m2] => Ok(Self { count, mean, m2 }),
            _ => Err(Error::Dimension { expected: 3, got: v.len() }),
        }
    }
}

/// Flat rollout storage, sample-major.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub logp: Vec<f64>,
    pub adv: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.logp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logp.is_empty()
    }
}

/// State of a rollout stream group (one environment).
struct Slot {
    obs: Vec<f64>,
    reward: f64,
}

#[derive(Debug, Clone)]
pub struct PpoLearner<P: StochasticPolicy> {
    pub policy: P,
    pub critic: DenseNet,
    pub hyper: PPOHyper,
    pub seed: u64,
    pub episodes_done: usize,
    /// Episodes started so far; episode seeds are indexed by this counter.
    pub episodes_started: usize,
    pub env_steps: u64,
    pub updates: u64,
    pub curve: Vec<f64>,
    /// Target statistics; identity until the first update when `value_norm` is off.
    pub returns: ReturnStats,
    adam_actor: Adam,
    adam_extra: Adam,
    adam_critic: Adam,
    rng: ChaCha8Rng,
}

impl<P: StochasticPolicy> PpoLearner<P> {
    pub fn new(policy: P, critic: DenseNet, hyper: PPOHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if critic.input_dim() != policy.net().input_dim() || critic.output_dim() != 1 {
            return Err(Error::Argument("critic must map the actor's input to a scalar".into()));
        }
        Ok(Self {
            adam_actor: Adam::new(policy.net().param_count(), hyper.lr),
            adam_extra: Adam::new(policy.extra().len(), hyper.lr),
            adam_critic: Adam::new(critic.param_count(), hyper.lr),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 2, 0)),
            policy,
            critic,
            hyper,
            seed,
            episodes_done: 0,
            episodes_started: 0,
            env_steps: 0,
            updates: 0,
            curve: Vec::new(),
            returns: ReturnStats::default(),
        })
    }

    /// Critic output in return units.
    fn value(&self, raw: f64) -> f64 {
        if self.hyper.value_norm {
            self.returns.denormalize(raw)
        } else {
            raw
        }
    }

    fn next_episode_seed(&mut self) -> u64 {
        let s = derive_seed(self.seed, 3, self.episodes_started as u64);
        self.episodes_started += 1;
        s
    }

    /// Collects rollouts and updates until at least `until` episodes have finished.
    /// Every environment must report the same agent count; streams = envs × agents
    /// should equal `hyper.actors`.
    pub fn train<E: Env<Action = P::Action>>(
        &mut self,
        envs: &mut [E],
        until: usize,
        mut progress: impl FnMut(&TrainProgress),
    ) -> Result<()> {
        if envs.is_empty() {
            return Err(Error::Argument("at least one environment is required".into()));
        }
        let n_agents = envs[0].n_agents();
        let d = envs[0].obs_dim();
        if d != self.policy.net().input_dim() {
            return Err(Error::Dimension {
                expected: self.policy.net().input_dim(),
                got: d,
            });
        }
        let mut slots = Vec::with_capacity(envs.len());
        for env in envs.iter_mut() {
            let seed = self.next_episode_seed();
            slots.push(Slot {
                obs: env.reset(seed)?,
                reward: 0.0,
            });
        }
        while self.episodes_done < until {
            let rollout = self.collect(envs, &mut slots, n_agents, d, &mut progress)?;
            self.update(&rollout)?;
        }
        Ok(())
    }

    fn collect<E: Env<Action = P::Action>>(
        &mut self,
        envs: &mut [E],
        slots: &mut [Slot],
        n_agents: usize,
        d: usize,
        progress: &mut impl FnMut(&TrainProgress),
    ) -> Result<Rollout> {
        let streams = envs.len() * n_agents;
        let h = self.hyper.horizon;
        let aw = self.policy.action_width();
        let od = self.policy.net().output_dim();
        // stream-major buffers
        let mut obs = vec![0.0; streams * h * d];
        let mut acts = vec![0.0; streams * h * aw];
        let mut logp = vec![0.0; streams * h];
        let mut values = vec![0.0; streams * h];
        let mut rewards = vec![0.0; streams * h];
        let mut ends = vec![StepEnd::Continue; streams * h];
        let mut enc = vec![0.0; aw];
        let mut all_obs = vec![0.0; streams * d];
        for t in 0..h {
            for (e, slot) in slots.iter().enumerate() {
                all_obs[e * n_agents * d..(e + 1) * n_agents * d].copy_from_slice(&slot.obs);
            }
            let out = if self.policy.uses_logits() {
                let mut cache = Cache::default();
                self.policy.net().forward_cached(&all_obs, streams, &mut cache)?;
                cache.logits().to_vec()
            } else {
                self.policy.net().forward_batch(&all_obs, streams)?
            };
            let v = self.critic.forward_batch(&all_obs, streams)?;
            for (e, env) in envs.iter_mut().enumerate() {
                let mut actions = Vec::with_capacity(n_agents);
                for a in 0..n_agents {
                    let s = e * n_agents + a;
                    let row = &out[s * od..(s + 1) * od];
                    actions.push(self.policy.sample(row, &mut self.rng, &mut enc));
                    let k = s * h + t;
                    obs[k * d..(k + 1) * d].copy_from_slice(&all_obs[s * d..(s + 1) * d]);
                    acts[k * aw..(k + 1) * aw].copy_from_slice(&enc);
                    logp[k] = self.policy.log_prob_entropy(row, &enc).0;
                    values[k] = self.value(v[s]);
                }
                let step = env.step(&actions)?;
                self.env_steps += 1;
                slots[e].reward += step.rewards[0];
                for a in 0..n_agents {
                    let k = (e * n_agents + a) * h + t;
                    rewards[k] = step.rewards[a];
                }
                if step.done() {
                    for a in 0..n_agents {
                        let k = (e * n_agents + a) * h + t;
                        ends[k] = if step.terminal {
                            StepEnd::Terminal
                        } else {
                            StepEnd::Truncated(self.value(self.critic.forward(&step.obs[a * d..(a + 1) * d])?[0]))
                        };
                    }
                    let finished = slots[e].reward;
                    self.curve.push(finished);
                    self.episodes_done += 1;
                    progress(&TrainProgress {
                        episode: self.episodes_done,
                        reward: finished,
                        env_steps: self.env_steps,
                        updates: self.updates,
                        epsilon: None,
                    });
                    let seed = self.next_episode_seed();
                    slots[e] = Slot {
                        obs: env.reset(seed)?,
                        reward: 0.0,
                    };
                } else {
                    slots[e].obs = step.obs;
                }
            }
        }
        for (e, slot) in slots.iter().enumerate() {
            all_obs[e * n_agents * d..(e + 1) * n_agents * d].copy_from_slice(&slot.obs);
        }
        let boot = self.critic.forward_batch(&all_obs, streams)?;
        let mut adv = Vec::with_capacity(streams * h);
        let mut returns = Vec::with_capacity(streams * h);
        for s in 0..streams {
            let r = s * h..(s + 1) * h;
            let (a, ret) = gae_with_ends(
                &rewards[r.clone()],
                &values[r.clone()],
                &ends[r],
                self.value(boot[s]),
                self.hyper.gamma,
                self.hyper.gae_lambda,
            );
            adv.extend(a);
            returns.extend(ret);
        }
        Ok(Rollout {
            obs,
            actions: acts,
            logp,
            adv,
            returns,
        })
    }

    /// Epochs of minibatch updates over one rollout.
    pub fn update(&mut self, rollout: &Rollout) -> Result<UpdateStats> {
        let n = rollout.len();
        if n == 0 {
            return Err(Error::Argument("empty rollout".into()));
        }
        if self.hyper.value_norm {
            self.returns.push_all(&rollout.returns);
        }
        let mb = self.hyper.minibatch.min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats::default();
        let mut count = 0usize;
        for _ in 0..self.hyper.epochs {
            idx.shuffle(&mut self.rng);
            for chunk in idx.chunks(mb) {
                let s = self.minibatch_step(rollout, chunk)?;
                stats.policy_loss += s.policy_loss;
                stats.value_loss += s.value_loss;
                stats.entropy += s.entropy;
                count += 1;
            }
        }
        self.updates += 1;
        let c = count as f64;
        Ok(UpdateStats {
            policy_loss: stats.policy_loss / c,
            value_loss: stats.value_loss / c,
            entropy: stats.entropy / c,
        })
    }

    fn minibatch_step(&mut self, ro: &Rollout, idx: &[usize]) -> Result<UpdateStats> {
        let b = idx.len();
        let d = self.policy.net().input_dim();
        let aw = self.policy.action_width();
        let od = self.policy.net().output_dim();
        let bf = b as f64;
        let mut obs = Vec::with_capacity(b * d);
        for &i in idx {
            obs.extend_from_slice(&ro.obs[i * d..(i + 1) * d]);
        }
        let mut adv: Vec<f64> = idx.iter().map(|&i| ro.adv[i]).collect();
        if self.hyper.normalize_adv && b > 1 {
            let mean = adv.iter().sum::<f64>() / bf;
            let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (bf - 1.0);
            let std = var.sqrt() + 1e-8;
            adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
        }

        let mut actor_cache = Cache::default();
        let out = self.policy.net().forward_cached(&obs, b, &mut actor_cache)?.to_vec();
        let out = if self.policy.uses_logits() {
            actor_cache.logits().to_vec()
        } else {
            out
        };
        let mut grad_out = vec![0.0; b * od];
        let mut grad_extra = vec![0.0; self.policy.extra().len()];
        let mut stats = UpdateStats::default();
        for (r, &i) in idx.iter().enumerate() {
            let row = &out[r * od..(r + 1) * od];
            let enc = &ro.actions[i * aw..(i + 1) * aw];
            let (lp, ent) = self.policy.log_prob_entropy(row, enc);
            let ratio = (lp - ro.logp[i]).exp();
            stats.policy_loss -= clipped_surrogate(ratio, adv[r], self.hyper.clip) / bf;
            stats.entropy += ent / bf;
            let w_logp = -surrogate_grad(ratio, adv[r], self.hyper.clip) / bf;
            let w_ent = -self.hyper.ent_coef / bf;
            self.policy.accumulate(row, enc, w_logp, w_ent, &mut grad_out[r * od..(r + 1) * od], &mut grad_extra);
        }
        let mut g_actor = vec![0.0; self.policy.net().param_count()];
        if self.policy.uses_logits() {
            self.policy.net().backward_logits(&actor_cache, &grad_out, &mut g_actor)?;
        } else {
            self.policy.net().backward(&actor_cache, &grad_out, &mut g_actor)?;
        }

        let mut critic_cache = Cache::default();
        let v = self.critic.forward_cached(&obs, b, &mut critic_cache)?.to_vec();
        let mut grad_v = vec![0.0; b];
        for (r, &i) in idx.iter().enumerate() {
            let target = if self.hyper.value_norm {
                self.returns.normalize(ro.returns[i])
            } else {
                ro.returns[i]
            };
            let err = v[r] - target;
            stats.value_loss += err * err / bf;
            grad_v[r] = 2.0 * self.hyper.vf_coef * err / bf;
        }
        let mut g_critic = vec![0.0; self.critic.param_count()];
        self.critic.backward(&critic_cache, &grad_v, &mut g_critic)?;

        let total = stats.policy_loss + self.hyper.vf_coef * stats.value_loss - self.hyper.ent_coef * stats.entropy;
        if !total.is_finite() {
            return Err(Error::Divergence {
                update: self.updates as usize,
                loss: total,
            });
        }
        if self.hyper.max_grad_norm > 0.0 {
            if self.hyper.separate_clip {
                clip_global_norm(&mut [&mut g_actor, &mut grad_extra], self.hyper.max_grad_norm);
                clip_global_norm(&mut [&mut g_critic], self.hyper.max_grad_norm);
            } else {
                clip_global_norm(&mut [&mut g_actor, &mut grad_extra, &mut g_critic], self.hyper.max_grad_norm);
            }
        }
        self.adam_actor.step(self.policy.net_mut().params_mut(), &g_actor);
        self.adam_extra.step(self.policy.extra_mut(), &grad_extra);
        self.policy.project();
        self.adam_critic.step(self.critic.params_mut(), &g_critic);
        Ok(stats)
    }
}

/// Gaussian-actor PPO on continuous-action environments built by `make_env(i)`.
pub fn ppo_train<E, F>(make_env: F, hyper: PPOHyper, episodes: usize, seed: u64) -> Result<PpoLearner<GaussianActor>>
where
    E: Env<Action = Vec<f64>>,
    F: Fn(usize) -> E,
{
    let mut envs: Vec<E> = (0..hyper.actors).map(&make_env).collect();
    let d = envs[0].obs_dim();
    let actor = GaussianActor::init(d, &hyper.hidden, 2, 0.0, derive_seed(seed, 1, 0))?;
    let v = critic(d, &hyper.hidden, derive_seed(seed, 1, 1))?;
    let mut learner = PpoLearner::new(actor, v, hyper, seed)?;
    learner.train(&mut envs, episodes, |_| {})?;
    Ok(learner)
}

/// Parameter-shared categorical PPO. The number of environments is `actors / n_agents`.
pub fn mappo_train<E, F>(
    make_env: F,
    n_actions: usize,
    hyper: PPOHyper,
    episodes: usize,
    seed: u64,
) -> Result<PpoLearner<CategoricalActor>>
where
    E: Env<Action = usize>,
    F: Fn(usize) -> E,
{
    let mut learner = mappo_learner(&make_env(0), n_actions, hyper, seed)?;
    let mut envs = mappo_envs(&make_env, &learner.hyper)?;
    learner.train(&mut envs, episodes, |_| {})?;
    Ok(learner)
}

pub fn mappo_learner<E: Env<Action = usize>>(
    probe: &E,
    n_actions: usize,
    hyper: PPOHyper,
    seed: u64,
) -> Result<PpoLearner<CategoricalActor>> {
    let d = probe.obs_dim();
    let actor = CategoricalActor::init(d, &hyper.hidden, n_actions, derive_seed(seed, 1, 0))?;
    let v = critic(d, &hyper.hidden, derive_seed(seed, 1, 1))?;
    PpoLearner::new(actor, v, hyper, seed)
}

pub fn mappo_envs<E, F>(make_env: F, hyper: &PPOHyper) -> Result<Vec<E>>
where
    E: Env<Action = usize>,
    F: Fn(usize) -> E,
{
    let first = make_env(0);
    let n_agents = first.n_agents();
    if hyper.actors % n_agents != 0 {
        return Err(Error::Params(format!(
            "actor count {} not divisible by agents per environment {n_agents}",
            hyper.actors
        )));
    }
    let mut envs = vec![first];
    envs.extend((1..hyper.actors / n_agents).map(make_env));
    Ok(envs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::env::EnvStep;

    /// One-step continuous task with reward −‖a − (0.5, −0.3)‖².
    #[derive(Clone)]
    struct Reach;

    impl Env for Reach {
        type Action = Vec<f64>;
        fn obs_dim(&self) -> usize {
            2
        }
        fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
            Ok(vec![0.3, -0.2])
        }
        fn step(&mut self, a: &[Vec<f64>]) -> Result<EnvStep> {
            let r = -((a[0][0] - 0.5).powi(2) + (a[0][1] + 0.3).powi(2));
            Ok(EnvStep {
                obs: vec![0.3, -0.2],
                rewards: vec![r],
                terminal: true,
                truncated: false,
            })
        }
    }

    /// Two agents choose among three arms; both are paid when they pick different arms.
    #[derive(Clone)]
    struct Split;

    impl Env for Split {
        type Action = usize;
        fn obs_dim(&self) -> usize {
            2
        }
        fn n_agents(&self) -> usize {
            2
        }
        fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
            Ok(vec![1.0, 0.0, 0.0, 1.0])
        }
        fn step(&mut self, a: &[usize]) -> Result<EnvStep> {
            let r = if a[0] != a[1] { 1.0 } else { 0.0 };
            Ok(EnvStep {
                obs: vec![1.0, 0.0, 0.0, 1.0],
                rewards: vec![r, r],
                terminal: true,
                truncated: false,
            })
        }
    }

    fn small() -> PPOHyper {
        PPOHyper {
            lr: 3e-3,
            ent_coef: 0.0,
            epochs: 4,
            horizon: 64,
            minibatch: 32,
            actors: 2,
            hidden: vec![16, 16],
            ..PPOHyper::driving()
        }
    }

    #[test]
    fn surrogate_at_unit_ratio_is_unclipped() {
        for adv in [-2.0, -0.1, 0.0, 0.7, 3.0] {
            assert_eq!(clipped_surrogate(1.0, adv, 0.2), adv);
            assert_eq!(surrogate_grad(1.0, adv, 0.2), adv);
        }
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
        assert_eq!(surrogate_grad(1.5, 1.0, 0.2), 0.0);
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
        assert_eq!(surrogate_grad(1.5, -1.0, 0.2), -1.5);
    }

    fn fd_check<P: StochasticPolicy>(p: &P, out: &[f64], enc: &[f64], w_logp: f64, w_ent: f64) {
        let f = |o: &[f64], pol: &P| {
            let (lp, h) = pol.log_prob_entropy(o, enc);
            w_logp * lp + w_ent * h
        };
        let mut g_out = vec![0.0; out.len()];
        let mut g_extra = vec![0.0; p.extra().len()];
        p.accumulate(out, enc, w_logp, w_ent, &mut g_out, &mut g_extra);
        let h = 1e-6;
        for i in 0..out.len() {
            let (mut a, mut b) = (out.to_vec(), out.to_vec());
            a[i] += h;
            b[i] -= h;
            let fd = (f(&a, p) - f(&b, p)) / (2.0 * h);
            assert!((fd - g_out[i]).abs() < 1e-6 * (1.0 + fd.abs()), "out {i}: {fd} vs {}", g_out[i]);
        }
        for i in 0..p.extra().len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.extra_mut()[i] += h;
            b.extra_mut()[i] -= h;
            let fd = (f(out, &a) - f(out, &b)) / (2.0 * h);
            assert!((fd - g_extra[i]).abs() < 1e-6 * (1.0 + fd.abs()), "extra {i}: {fd} vs {}", g_extra[i]);
        }
    }

    #[test]
    fn score_gradients_match_finite_differences() {
        let mut g = GaussianActor::init(3, &[4], 2, 0.0, 1).unwrap();
        g.log_std = vec![-0.3, 0.4];
        fd_check(&g, &[0.2, -0.6], &[0.9, -1.1], 0.7, -0.2);
        let c = CategoricalActor::init(3, &[4], 4, 1).unwrap();
        fd_check(&c, &[0.2, -0.6, 1.3, 0.0], &[2.0], -1.3, 0.4);
    }

    #[test]
    fn gaussian_entropy_closed_form() {
        let g = GaussianActor::new(GaussianActor::driving_default(0).net, 0.0);
        let (_, h) = g.log_prob_entropy(&[0.0, 0.0], &[0.0, 0.0]);
        assert!((h - (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_advantage_leaves_policy_unchanged() {
        let actor = GaussianActor::init(2, &[8], 2, 0.0, 4).unwrap();
        let v = critic(2, &[8], 5).unwrap();
        let mut learner = PpoLearner::new(actor.clone(), v.clone(), small(), 0).unwrap();
        let n = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rollout = Rollout {
            obs: (0..2 * n).map(|_| rng.random::<f64>()).collect(),
            actions: (0..2 * n).map(|_| rng.random::<f64>()).collect(),
            logp: vec![-1.0; n],
            adv: vec![0.0; n],
            returns: vec![1.0; n],
        };
        learner.update(&rollout).unwrap();
        assert_eq!(learner.policy.net.params(), actor.net.params());
        assert_eq!(learner.policy.log_std, actor.log_std);
        assert_ne!(learner.critic.params(), v.params());
    }

    #[test]
    fn ppo_solves_continuous_reach() {
        let learner = ppo_train(|_| Reach, small(), 1500, 2).unwrap();
        let m = learner.policy.mean(&[0.3, -0.2]).unwrap();
        assert!((m[0] - 0.5).abs() < 0.1 && (m[1] + 0.3).abs() < 0.1, "{m:?}");
        let n = learner.curve.len();
        let head: f64 = learner.curve[..n / 10].iter().sum::<f64>() / (n / 10) as f64;
        let tail: f64 = learner.curve[n - n / 10..].iter().sum::<f64>() / (n / 10) as f64;
        assert!(tail > head);
    }

    #[test]
    fn mappo_learns_to_split() {
        let h = PPOHyper {
            lr: 3e-3,
            epochs: 4,
            horizon: 32,
            minibatch: 256,
            actors: 8,
            hidden: vec![16],
            ..PPOHyper::selection()
        };
        let learner = mappo_train(|_| Split, 3, h, 3000, 1).unwrap();
        let a = learner.policy.greedy(&[1.0, 0.0]).unwrap();
        let b = learner.policy.greedy(&[0.0, 1.0]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn shared_policy_is_identical_across_agents() {
        let actor = CategoricalActor::init(14, &arch::MAPPO_HIDDEN, 5, 0).unwrap();
        let obs = vec![0.1; 14];
        assert_eq!(actor.probabilities(&obs).unwrap(), actor.clone().probabilities(&obs).unwrap());
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let a = ppo_train(|_| Reach, small(), 200, 7).unwrap();
        let b = ppo_train(|_| Reach, small(), 200, 7).unwrap();
        assert_eq!(a.policy.net.params(), b.policy.net.params());
        assert_eq!(a.policy.log_std, b.policy.log_std);
        assert_eq!(a.critic.params(), b.critic.params());
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn return_stats_match_batch_moments() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin() * 300.0 - 120.0).collect();
        let mut st = ReturnStats::default();
        st.push_all(&xs[..17]);
        st.push_all(&xs[17..]);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((st.mean - mean).abs() < 1e-9);
        assert!((st.std() - var.sqrt()).abs() < 1e-9);
        assert!((st.denormalize(st.normalize(-42.0)) + 42.0).abs() < 1e-9);
        assert_eq!(ReturnStats::from_slice(&st.to_vec()).unwrap(), st);
        assert_eq!(ReturnStats::default().normalize(3.0), 3.0);
    }

    #[test]
    fn entropy_bonus_cannot_push_log_std_past_its_bound() {
        let h = PPOHyper {
            ent_coef: 10.0,
            ..small()
        };
        let learner = ppo_train(|_| Reach, h, 300, 3).unwrap();
        assert!(learner.policy.log_std.iter().all(|&s| s == LOG_STD_MAX));
        let mut g = GaussianActor::init(2, &[4], 2, 0.0, 1).unwrap();
        g.log_std = vec![3.0, -9.0];
        g.project();
        assert_eq!(g.log_std, vec![LOG_STD_MAX, LOG_STD_MIN]);
    }

    #[test]
    fn validates_batch_divisibility() {
        assert!(PPOHyper { minibatch: 100, ..PPOHyper::driving() }.validate().is_err());
        assert!(PPOHyper { clip: 1.0, ..PPOHyper::driving() }.validate().is_err());
        assert!(PPOHyper::driving().validate().is_ok());
        assert!(PPOHyper::selection().validate().is_ok());
        assert_eq!(PPOHyper::selection().batch_size(), 1024);
    }
}
