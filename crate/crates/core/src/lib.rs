//! Constrained Q-learning toolkit.
//!
//! Building blocks, bottom up:
//!
//! * [`lagrangian`] — constraint taxonomy, augmented-Lagrangian penalties,
//!   projected dual ascent, and adaptive penalty scaling;
//! * [`nn`] — a small dense MLP with backprop, Adam, and checkpointing;
//! * [`qlearn`] — replay buffer, masked epsilon-greedy policies, augmented
//!   TD targets, and the single-/multi-agent training loops;
//! * [`env`] — seeded simulation environments (UAV swarm, RIS-assisted
//!   downlink, finite CMDP) behind one [`env::Environment`] trait;
//! * [`oracle`] — exact evaluation and exhaustive policy search on small
//!   CMDPs, used as ground truth by the acceptance checks;
//! * [`metrics`] — CSV emission with a stable schema.

pub mod env;
pub mod error;
pub mod lagrangian;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod qlearn;

pub use error::{CoreError, Result};
