//! Simulation, metrics, learning and evaluation tooling for herding a stochastic swarm of
//! targets into a goal region with a team of controlled herders.

pub mod baselines;
pub mod control;
pub mod episode;
pub mod error;
pub mod extensions;
pub mod harness;
pub mod metrics;
pub mod rl;
pub mod sim;
pub mod vec2;

pub use error::{Error, Result};
pub use sim::{SimParams, WorldState};
pub use vec2::Vec2;
