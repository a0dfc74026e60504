//! Deep Q-learning with uniform experience replay and a periodically copied target
//! network. Several agents may share one network and one buffer (parameter sharing).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::adam::Adam;
use crate::rl::env::Env;
use crate::rl::net::{Cache, DenseNet};
use crate::rl::policy::{argmax, arch, q_network};
use crate::rl::replay::{Minibatch, ReplayBuffer};
use crate::rl::schedule::{epsilon_with, DecayForm};
use crate::rl::{derive_seed, TrainProgress};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DQNHyper {
    pub lr: f64,
    pub gamma: f64,
    pub eps0: f64,
    pub eps_min: f64,
    pub eps_decay: f64,
    pub decay_form: DecayForm,
    /// Environment steps between target-network copies.
    pub target_update: usize,
    pub batch: usize,
    pub capacity: usize,
    /// Transitions collected before the first gradient step.
    pub warmup: usize,
    /// Environment steps between gradient steps.
    pub train_every: usize,
    pub huber: bool,
    pub hidden: Vec<usize>,
}

impl DQNHyper {
    pub fn driving() -> Self {
        Self {
            lr: 5e-5,
            gamma: 0.99,
            eps0: 1.0,
            eps_min: 0.05,
            eps_decay: 1e-3,
            decay_form: DecayForm::Exponential,
            target_update: 10_000,
            batch: 64,
            capacity: 100_000,
            warmup: 1_000,
            train_every: 1,
            huber: false,
            hidden: arch::DQN_DRIVING[1..3].to_vec(),
        }
    }

    pub fn selection() -> Self {
        Self {
            lr: 1e-4,
            eps_decay: 5e-5,
            target_update: 1_000,
            hidden: arch::DQN_SELECTION_HIDDEN.to_vec(),
            ..Self::driving()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Params(format!("DQN hyper-parameters: {m}")));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("discount must lie in (0, 1)");
        }
        if !(self.eps_min <= self.eps0) {
            return bad("eps_min must not exceed eps0");
        }
        if self.target_update == 0 || self.train_every == 0 || self.batch == 0 {
            return bad("periods and batch size must be >= 1");
        }
        if !(self.eps_decay > 0.0) || !(self.lr > 0.0) {
            return bad("decay and step size must be > 0");
        }
        if self.capacity < self.batch {
            return bad("replay capacity below minibatch size");
        }
        Ok(())
    }
}

/// Learner state; persists across calls to [`DqnAgent::train`] so training can resume.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub q: DenseNet,
    pub target: DenseNet,
    pub adam: Adam,
    pub hyper: DQNHyper,
    pub seed: u64,
    pub episodes_done: usize,
    pub env_steps: u64,
    pub grad_steps: u64,
    /// Cumulative reward of agent 0 per finished episode.
    pub curve: Vec<f64>,
    /// Environment step of the last target-network copy.
    pub last_sync: u64,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    batch: Minibatch,
    cache: Cache,
}

impl DqnAgent {
    pub fn new(obs_dim: usize, n_actions: usize, hyper: DQNHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let q = q_network(&arch::with_io(obs_dim, &hyper.hidden, n_actions), derive_seed(seed, 1, 0))?;
        Ok(Self::from_network(q, hyper, seed))
    }

    /// Resume from a trained network (the target starts as a copy).
    pub fn from_network(q: DenseNet, hyper: DQNHyper, seed: u64) -> Self {
        let adam = Adam::new(q.param_count(), hyper.lr);
        Self {
            target: q.clone(),
            buffer: ReplayBuffer::new(hyper.capacity, q.input_dim()),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 2, 0)),
            adam,
            q,
            hyper,
            seed,
            episodes_done: 0,
            env_steps: 0,
            grad_steps: 0,
            curve: Vec::new(),
            last_sync: 0,
            batch: Minibatch::default(),
            cache: Cache::default(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        let h = &self.hyper;
        epsilon_with(h.decay_form, self.episodes_done, h.eps0, h.eps_min, h.eps_decay)
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q.forward(obs)?))
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Run episodes until `episodes_done == until`.
    pub fn train<E: Env<Action = usize> + ?Sized>(
        &mut self,
        env: &mut E,
        until: usize,
        mut progress: impl FnMut(&TrainProgress),
    ) -> Result<()> {
        let n_agents = env.n_agents();
        let d = env.obs_dim();
        let n_actions = self.q.output_dim();
        while self.episodes_done < until {
            let eps = self.epsilon();
            let mut obs = env.reset(derive_seed(self.seed, 3, self.episodes_done as u64))?;
            let mut ep_reward = 0.0;
            loop {
                let mut actions = Vec::with_capacity(n_agents);
                for a in 0..n_agents {
                    let explore = self.rng.random::<f64>() < eps;
                    let choice = if explore {
                        self.rng.random_range(0..n_actions)
                    } else {
                        argmax(&self.q.forward(&obs[a * d..(a + 1) * d])?)
                    };
                    actions.push(choice);
                }
                let step = env.step(&actions)?;
                for a in 0..n_agents {
                    self.buffer.push(
                        &obs[a * d..(a + 1) * d],
                        actions[a],
                        step.rewards[a],
                        &step.obs[a * d..(a + 1) * d],
                        step.terminal,
                    );
                }
                ep_reward += step.rewards[0];
                self.env_steps += 1;
                if self.buffer.len() >= self.hyper.warmup.max(self.hyper.batch)
                    && self.env_steps % self.hyper.train_every as u64 == 0
                {
                    self.learn()?;
                }
                if self.env_steps % self.hyper.target_update as u64 == 0 {
                    self.target.copy_params_from(&self.q)?;
                    self.last_sync = self.env_steps;
                }
                let done = step.done();
                obs = step.obs;
                if done {
                    break;
                }
            }
            self.curve.push(ep_reward);
            self.episodes_done += 1;
            progress(&TrainProgress {
                episode: self.episodes_done,
                reward: ep_reward,
                env_steps: self.env_steps,
                updates: self.grad_steps,
                epsilon: Some(eps),
            });
        }
        Ok(())
    }

    /// One minibatch TD step. Returns the loss.
    pub fn learn(&mut self) -> Result<f64> {
        let b = self.hyper.batch;
        self.buffer.sample_into(b, &mut self.rng, &mut self.batch);
        let n_actions = self.q.output_dim();
        let next_q = self.target.forward_batch(&self.batch.next_obs, b)?;
        let q = self.q.forward_cached(&self.batch.obs, b, &mut self.cache)?.to_vec();
        let mut grad_out = vec![0.0; b * n_actions];
        let mut loss = 0.0;
        for i in 0..b {
            let row = &next_q[i * n_actions..(i + 1) * n_actions];
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let cont = if self.batch.terminals[i] { 0.0 } else { 1.0 };
            let y = self.batch.rewards[i] + self.hyper.gamma * cont * best;
            let a = self.batch.actions[i];
            let err = q[i * n_actions + a] - y;
            let (l, g) = if self.hyper.huber && err.abs() > 1.0 {
                (err.abs() - 0.5, err.signum())
            } else if self.hyper.huber {
                (0.5 * err * err, err)
            } else {
                (err * err, 2.0 * err)
            };
            loss += l / b as f64;
            grad_out[i * n_actions + a] = g / b as f64;
        }
        if !loss.is_finite() {
            return Err(Error::Divergence {
                update: self.grad_steps as usize,
                loss,
            });
        }
        let mut grads = vec![0.0; self.q.param_count()];
        self.q.backward(&self.cache, &grad_out, &mut grads)?;
        self.adam.step(self.q.params_mut(), &grads);
        self.grad_steps += 1;
        Ok(loss)
    }
}

/// Train a fresh agent on `env` for `episodes` episodes.
pub fn dqn_train<E: Env<Action = usize>>(
    env: &mut E,
    n_actions: usize,
    hyper: DQNHyper,
    episodes: usize,
    seed: u64,
) -> Result<DqnAgent> {
    let mut agent = DqnAgent::new(env.obs_dim(), n_actions, hyper, seed)?;
    agent.train(env, episodes, |_| {})?;
    Ok(agent)
}
