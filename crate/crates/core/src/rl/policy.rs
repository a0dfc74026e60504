//! Policy wrappers around [`DenseNet`] and the network topologies used by each learner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::rl::net::{Activation, DenseNet, Head, Init};
use crate::vec2::Vec2;

/// Network topologies (input, hidden..., output).
pub mod arch {
    pub const DQN_DRIVING: [usize; 4] = [4, 256, 128, 25];
    pub const DQN_SELECTION_HIDDEN: [usize; 2] = [512, 256];
    pub const PPO_DRIVING_HIDDEN: [usize; 5] = [64; 5];
    pub const MAPPO_HIDDEN: [usize; 2] = [256, 128];

    pub fn with_io(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        let mut v = Vec::with_capacity(hidden.len() + 2);
        v.push(input);
        v.extend_from_slice(hidden);
        v.push(output);
        v
    }
}

/// Orthogonal init with ReLU gain on hidden layers.
pub fn orthogonal(head_gain: f64) -> Init {
    Init::Orthogonal {
        hidden_gain: std::f64::consts::SQRT_2,
        head_gain,
    }
}

/// Q-network with a fan-in uniform init.
pub fn q_network(sizes: &[usize], seed: u64) -> Result<DenseNet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseNet::with_init(sizes, Activation::Relu, Head::Linear, Init::UniformFanIn, &mut rng)
}

/// Greedy action of a Q-network (lowest index on ties).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Diagonal Gaussian policy: tanh-bounded means from a network, state-independent log-stds.
/// Actions are in units of the herder speed bound.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianActor {
    pub net: DenseNet,
    pub log_std: Vec<f64>,
}

impl GaussianActor {
    pub fn new(net: DenseNet, log_std_init: f64) -> Self {
        let d = net.output_dim();
        Self {
            net,
            log_std: vec![log_std_init; d],
        }
    }

    pub fn init(obs_dim: usize, hidden: &[usize], act_dim: usize, log_std_init: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenseNet::with_init(
            &arch::with_io(obs_dim, hidden, act_dim),
            Activation::Relu,
            Head::Tanh,
            orthogonal(0.01),
            &mut rng,
        )?;
        Ok(Self::new(net, log_std_init))
    }

    /// Untrained driving actor with the default topology.
    pub fn driving_default(seed: u64) -> Self {
        Self::init(4, &arch::PPO_DRIVING_HIDDEN, 2, 0.0, seed).expect("valid topology")
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(obs)
    }

    /// Deterministic deployment action as a velocity.
    pub fn mean_control(&self, obs: &[f64; 4], v_max: f64) -> Vec2 {
        let m = self.net.forward(obs).expect("driving obs has four entries");
        Vec2::new(m[0], m[1]).clamp_box(1.0) * v_max
    }
}

/// Softmax policy over discrete choices.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalActor {
    pub net: DenseNet,
}

impl CategoricalActor {
    pub fn init(obs_dim: usize, hidden: &[usize], n_actions: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenseNet::with_init(
            &arch::with_io(obs_dim, hidden, n_actions),
            Activation::Relu,
            Head::Softmax,
            orthogonal(0.01),
            &mut rng,
        )?;
        Ok(Self { net })
    }

    /// Deployment choice: arg-max of the raw outputs, softmax skipped.
    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        Ok(argmax(&self.net.forward_logits(obs)?))
    }

    pub fn probabilities(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(obs)
    }
}

/// Scalar state-value network.
pub fn critic(obs_dim: usize, hidden: &[usize], seed: u64) -> Result<DenseNet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseNet::with_init(
        &arch::with_io(obs_dim, hidden, 1),
        Activation::Relu,
        Head::Linear,
        orthogonal(1.0),
        &mut rng,
    )
}
