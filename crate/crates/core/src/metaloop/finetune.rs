use std::fmt::Write as _;

use super::config::RunConfig;
use super::metrics::EpisodeStats;
use super::model::{rng_stream, MetaModel, ShapingModule, STREAM_FINETUNE, STREAM_POLICY};
use super::train::{collect, objective_gradient};
use crate::diffcore::{sgd_step_in_place, MlpSpec, ParamVector};
use crate::envs::Task;
use crate::error::{Error, Result};
use crate::shaping::{collect_targets, shaping_loss, Shaping};

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneOptions {
    /// Gradient steps; zero evaluates the meta model as is.
    pub steps: usize,
    /// Episodes collected before every step.
    pub rollouts: usize,
    /// Policy learning rate.
    pub lr: f64,
    /// Start from a freshly initialized policy sized for the task instead of `θ`.
    pub fresh_policy: bool,
    /// Shape rewards with the model's potential.
    pub use_shaping: bool,
    /// Keep the potential and embedding fixed.
    pub freeze: bool,
    pub seed: u64,
}

impl FinetuneOptions {
    /// Defaults taken from a run configuration.
    pub fn from_config(cfg: &RunConfig, steps: usize, seed: u64) -> Self {
        FinetuneOptions {
            steps,
            rollouts: cfg.sampling.m,
            lr: cfg.algorithm.alpha,
            fresh_policy: false,
            use_shaping: true,
            freeze: cfg.algorithm.freeze_shaping_on_finetune,
            seed,
        }
    }
}

/// Statistics of the episodes collected before gradient step `step` (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneStep {
    pub step: usize,
    pub stats: EpisodeStats,
    pub shaping_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub policy: MlpSpec,
    pub theta: ParamVector,
    pub shaping: Option<Shaping>,
    pub log: Vec<FinetuneStep>,
}

impl FinetuneOutcome {
    /// First step whose episodes reached `rate` success, if any.
    pub fn steps_to_success(&self, rate: f64) -> Option<usize> {
        self.log.iter().find(|s| s.stats.success_rate >= rate).map(|s| s.step)
    }
}

/// Adapts a trained model to one new task.
///
/// Every step collects `rollouts` episodes, takes one policy-gradient step
/// and, unless frozen, one regression step of the potential.
pub fn finetune(model: &MetaModel, task: &Task, cfg: &RunConfig, opts: &FinetuneOptions) -> Result<FinetuneOutcome> {
    if !(opts.lr > 0.0) {
        return Err(Error::Config(format!("fine-tune learning rate must be positive, got {}", opts.lr)));
    }
    if opts.steps > 0 && opts.rollouts == 0 {
        return Err(Error::Config("fine-tuning needs at least one rollout per step".into()));
    }
    let obs_len = task.env().observation_len();
    let (policy, mut theta) = if opts.fresh_policy {
        let hidden: Vec<usize> = model.policy.hidden_dims.clone();
        let spec = crate::policy::policy_spec(obs_len, &hidden);
        let theta = spec.init(&mut rng_stream(opts.seed, STREAM_POLICY));
        (spec, theta)
    } else {
        if obs_len > model.policy.input_dim {
            return Err(Error::Config(format!(
                "task `{}` observes {obs_len} values but the policy accepts {}; use fresh-policy mode",
                task.env().name,
                model.policy.input_dim
            )));
        }
        (model.policy.clone(), model.theta.clone())
    };
    let mut shaping = match (opts.use_shaping, &model.shaping) {
        (false, _) => None,
        (true, Some(module)) => Some(ShapingModule::new(module.shaping.clone(), cfg.networks.shaping_lr)),
        (true, None) => {
            return Err(Error::Usage(format!(
                "a {} model has no shaping to fine-tune with",
                model.method.name()
            )))
        }
    };
    let mut rng = rng_stream(opts.seed, STREAM_FINETUNE);
    let mut log = Vec::with_capacity(opts.steps);
    let gamma = cfg.algorithm.gamma;
    for step in 1..=opts.steps {
        let frozen = shaping.as_ref().map(|m| m.shaping.clone());
        let batch = collect(&policy, &theta, task, frozen.as_ref(), gamma, opts.rollouts, &mut rng)
            .map_err(|e| e.in_task(task.spec().label()))?;
        let grad = objective_gradient(&policy, &theta, &batch, cfg).map_err(|e| e.in_task(task.spec().label()))?;
        sgd_step_in_place(&mut theta, &grad, opts.lr)?;
        let mut loss = None;
        if let Some(module) = shaping.as_mut() {
            let targets = collect_targets(&batch, gamma);
            if let Some(l) = shaping_loss(&targets, &module.shaping) {
                loss = Some(l.loss);
                if !opts.freeze {
                    module.potential_opt.step(&mut module.shaping.potential.params, &l.potential_grad)?;
                    if module.shaping.embedding.mode.is_learned() {
                        module.embedding_opt.step(&mut module.shaping.embedding.params, &l.embedding_grad)?;
                    }
                }
            }
        }
        log.push(FinetuneStep {
            step,
            stats: EpisodeStats::from_trajectories(&batch),
            shaping_loss: loss,
        });
    }
    Ok(FinetuneOutcome {
        policy,
        theta,
        shaping: shaping.map(|m| m.shaping),
        log,
    })
}

pub fn finetune_csv(log: &[FinetuneStep]) -> String {
    let mut out = String::from("step,mean_return,mean_steps,success_rate,shaping_loss\n");
    for s in log {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.step,
            s.stats.mean_return,
            s.stats.mean_steps,
            s.stats.success_rate,
            s.shaping_loss.map(|l| l.to_string()).unwrap_or_default()
        )
        .unwrap();
    }
    out
}
