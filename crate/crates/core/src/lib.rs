//! Meta reinforcement learning across gridworld families with a shared meta
//! state space and potential-based reward shaping.
//!
//! The crate is organized bottom-up:
//!
//! - [`diffcore`]: parameter vectors, MLPs with an exact reverse pass, optimizers.
//! - [`envs`]: hallway and maze gridworlds and their catalog.
//! - [`metastate`]: the embedding `h(s; z)` into a fixed 3×2 meta state.
//! - [`shaping`]: the potential network and shaped rewards.
//! - [`policy`]: softmax policies, rollouts and policy-gradient losses.
//! - [`metaloop`]: the meta-training loop, fine-tuning and run configuration.
//! - [`analysis`]: tabular verification of policy invariance, potential
//!   heatmaps and evaluation.
//! - [`checkpoint`]: binary checkpoint files.

pub mod analysis;
pub mod checkpoint;
pub mod diffcore;
pub mod envs;
mod error;
pub mod metaloop;
pub mod metastate;
pub mod policy;
pub mod shaping;
pub mod trajectory;

pub use error::{Error, Result};
