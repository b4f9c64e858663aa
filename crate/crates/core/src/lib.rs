//! Desk-scale world-model reinforcement learning for text agents.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod datapipe;
pub mod envsim;
pub mod error;
pub mod jsonfmt;
pub mod lm;
pub mod pipeline;
pub mod prompts;
pub mod reward;
pub mod rollout;
pub mod trainer;
pub mod util;

pub use error::{Result, WmError};
