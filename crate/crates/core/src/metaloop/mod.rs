//! Meta-training, fine-tuning and run configuration.
//!
//! A single meta policy `θ` is shared by every environment in the catalog.
//! Each meta-iteration adapts `θ` to freshly sampled tasks with one inner
//! policy-gradient step on shaped rewards, moves `θ` along the sum of the
//! post-adaptation gradients (first-order MAML), and then regresses the
//! potential onto the shaped returns it just observed.

mod config;
mod finetune;
mod metrics;
mod model;
mod train;

pub use config::{AlgorithmConfig, InnerObjective, Method, NetworkConfig, RunConfig, RunSettings, SamplingConfig};
pub use finetune::{finetune, finetune_csv, FinetuneOptions, FinetuneOutcome, FinetuneStep};
pub use metrics::{metrics_csv, metrics_header, metrics_row, EpisodeStats, IterationMetrics};
pub use model::{MetaModel, ShapingModule};
pub use train::{
    collect, inner_adapt, meta_update, objective_gradient, train, train_with, update_shaping, Adapted, TrainOptions,
    TrainOutcome,
};
