//! Learning machinery: networks, optimiser, replay, advantage estimation, trainers and
//! weight persistence.

pub mod adam;
pub mod dqn;
pub mod env;
pub mod gae;
pub mod net;
pub mod policy;
pub mod ppo;
pub mod replay;
pub mod schedule;
pub mod weights;

pub use adam::Adam;
pub use dqn::{dqn_train, DQNHyper, DqnAgent};
pub use env::{ContinuousDriving, DiscreteDriving, DrivingEnv, DrivingObs, Env, EnvStep, SelectionEnv};
pub use gae::{gae, gae_with_ends, StepEnd};
pub use net::{Activation, Cache, DenseNet, Head, Init};
pub use policy::{arch, CategoricalActor, GaussianActor};
pub use ppo::{mappo_train, ppo_train, PPOHyper, PpoLearner, StochasticPolicy};
pub use replay::ReplayBuffer;
pub use schedule::{epsilon_schedule, DecayForm};

/// Emitted once per finished training episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainProgress {
    pub episode: usize,
    pub reward: f64,
    pub env_steps: u64,
    pub updates: u64,
    pub epsilon: Option<f64>,
}

/// SplitMix64-style mixing of a base seed, a purpose tag and an index.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
