//! Observation builders, action decoding, reward shaping and the two-layer
//! (target selection → driving) controller.

pub mod hierarchy;
pub mod obs;
pub mod reward;

pub use hierarchy::{DrivingPolicy, HierarchicalController, SelectionPolicy};
pub use obs::{decode_discrete_action, driving_obs_dqn, driving_obs_ppo, encode_discrete_action, selection_obs, N_DISCRETE_ACTIONS};
pub use reward::{driving_reward, selection_reward, RewardGains};
