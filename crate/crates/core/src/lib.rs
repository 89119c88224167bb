//! Code-interpreter rollouts, procedural reasoning tasks, rejection-sampling
//! synthesis and masked GRPO objective numerics.

pub mod client;
pub mod grpo;
pub mod harness;
mod par;
pub mod pipeline;
pub mod rollout;
pub mod sandbox;
pub mod tasks;
