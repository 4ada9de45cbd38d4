//! Decentralized multi-agent reinforcement learning in a gridworld.
//!
//! Independent actor-critic agents keep time-aware mental maps, reward
//! themselves for stale knowledge, and exchange maps and parameters with
//! nearby agents through a goal-aware share/reason/aggregate session.

pub mod encoding;
pub mod error;
pub mod gridworld;
pub mod harness;
pub mod learner;
pub mod mental_state;
pub mod neural;
pub mod protocol;

pub use error::{Error, Result};
