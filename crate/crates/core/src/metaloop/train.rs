use rand::Rng;
use rayon::prelude::*;

use super::config::{InnerObjective, RunConfig};
use super::metrics::{EpisodeStats, IterationMetrics};
use super::model::{rng_stream, MetaModel, STREAM_SAMPLING};
use super::Method;
use crate::diffcore::{sgd_step, sgd_step_in_place, sgd_step_per_param, Gradient, MlpSpec, ParamVector};
use crate::envs::{sample_environment, sample_task, EnvSpec, Task};
use crate::error::{Error, Result};
use crate::policy::{clipped_surrogate_loss, pg_loss, rollout, ActionSelection};
use crate::shaping::{collect_targets, extend_trajectory, shaping_loss, Shaping};
use crate::trajectory::Trajectory;

/// `count` sampled episodes under `params`, extended with `shaping`.
pub fn collect<R: Rng + ?Sized>(
    spec: &MlpSpec,
    params: &ParamVector,
    task: &Task,
    shaping: Option<&Shaping>,
    gamma: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    (0..count)
        .map(|_| {
            let raw = rollout(spec, params, task, ActionSelection::Sample, rng)?;
            extend_trajectory(raw, task, shaping, gamma)
        })
        .collect()
}

/// Gradient of the configured policy objective on `batch`, clipped to
/// `run.max_grad_norm` when set.
pub fn objective_gradient(spec: &MlpSpec, params: &ParamVector, batch: &[Trajectory], cfg: &RunConfig) -> Result<Gradient> {
    let a = &cfg.algorithm;
    let (_, mut grad) = match a.inner_objective {
        InnerObjective::Reinforce => pg_loss(spec, params, batch, a.gamma, true, a.baseline)?,
        InnerObjective::Clipped => clipped_surrogate_loss(spec, params, batch, a.gamma, true, a.baseline, a.clip_eps)?,
    };
    grad.check_finite()?;
    if let Some(max) = cfg.run.max_grad_norm {
        grad.clip_norm(max);
    }
    Ok(grad)
}

/// Result of adapting the meta policy to one task.
#[derive(Clone, Debug)]
pub struct Adapted {
    /// `θ_T`.
    pub theta: ParamVector,
    /// Gradient of the first inner step, taken at `θ`.
    pub inner_grad: Gradient,
    /// The `m` pre-adaptation episodes `D`.
    pub trajectories: Vec<Trajectory>,
}

/// `m` episodes under `θ`, then `θ_T = θ − α∇L(θ; D)` (repeated for
/// `inner_epochs` steps of the clipped objective).
pub fn inner_adapt<R: Rng + ?Sized>(
    model: &MetaModel,
    task: &Task,
    shaping: Option<&Shaping>,
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<Adapted> {
    let mut run = || -> Result<Adapted> {
        let a = &cfg.algorithm;
        let trajectories = collect(&model.policy, &model.theta, task, shaping, a.gamma, cfg.sampling.m, rng)?;
        let mut theta = model.theta.clone();
        let mut inner_grad = None;
        for _ in 0..a.inner_epochs {
            let grad = objective_gradient(&model.policy, &theta, &trajectories, cfg)?;
            match &model.inner_lr {
                Some(lr) => sgd_step_per_param(&mut theta, &grad, lr)?,
                None => sgd_step_in_place(&mut theta, &grad, a.alpha)?,
            }
            inner_grad.get_or_insert(grad);
        }
        Ok(Adapted {
            theta,
            inner_grad: inner_grad.expect("at least one inner epoch"),
            trajectories,
        })
    };
    run().map_err(|e| e.in_task(task.spec().label()))
}

/// First-order meta update: `θ ← θ − β Σ_T ∇L(θ_T; D′_T)`.
///
/// With meta-SGD the inner learning rates move along
/// `−β Σ_T ∂L(θ − α⊙g_T)/∂α = β Σ_T g_T ⊙ ∇L(θ_T)`.
pub fn meta_update(model: &mut MetaModel, adapted: &[(Adapted, Vec<Trajectory>)], cfg: &RunConfig) -> Result<()> {
    let outer = adapted
        .iter()
        .map(|(a, post)| objective_gradient(&model.policy, &a.theta, post, cfg))
        .collect::<Result<Vec<_>>>()?;
    let inner: Vec<&Gradient> = adapted.iter().map(|(a, _)| &a.inner_grad).collect();
    apply_meta_update(model, &outer, &inner, cfg)
}

fn apply_meta_update(model: &mut MetaModel, outer: &[Gradient], inner: &[&Gradient], cfg: &RunConfig) -> Result<()> {
    if outer.is_empty() {
        return Err(Error::Usage("meta update needs at least one adapted task".into()));
    }
    if cfg.algorithm.beta == 0.0 {
        return Ok(());
    }
    let mut total = Gradient::zeros_like(&model.theta);
    for g in outer {
        total.add_assign(g)?;
    }
    if let Some(lr) = &mut model.inner_lr {
        let mut lr_grad = Gradient::zeros_like(lr);
        for (o, i) in outer.iter().zip(inner) {
            for ((d, a), b) in lr_grad.values_mut().iter_mut().zip(o.values()).zip(i.values()) {
                *d -= a * b;
            }
        }
        sgd_step_in_place(lr, &lr_grad, cfg.algorithm.beta)?;
    }
    sgd_step_in_place(&mut model.theta, &total, cfg.algorithm.beta)
}

/// One Adam step of the potential (and learned embedding) regression onto
/// the shaped returns of `batch`. Returns the loss before the step, or
/// `None` when there is nothing to fit.
pub fn update_shaping(model: &mut MetaModel, batch: &[Trajectory], cfg: &RunConfig) -> Result<Option<f64>> {
    let Some(module) = model.shaping.as_mut() else {
        return Ok(None);
    };
    let targets = collect_targets(batch, cfg.algorithm.gamma);
    let Some(loss) = shaping_loss(&targets, &module.shaping) else {
        return Ok(None);
    };
    module.potential_opt.step(&mut module.shaping.potential.params, &loss.potential_grad)?;
    if module.shaping.embedding.mode.is_learned() {
        module.embedding_opt.step(&mut module.shaping.embedding.params, &loss.embedding_grad)?;
    }
    Ok(Some(loss.loss))
}

/// Knobs that are not part of a run's configuration.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOptions {
    /// Start a shaping method at `φ ≡ 0` and never update it.
    pub zero_potential: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: MetaModel,
    pub metrics: Vec<IterationMetrics>,
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    train_with(cfg, TrainOptions::default(), |_, _| Ok(()))
}

struct TaskResult {
    env_name: String,
    pre: Vec<Trajectory>,
    post: Vec<Trajectory>,
    outer: Gradient,
    inner: Gradient,
}

fn run_task(model: &MetaModel, task: &Task, shaping: Option<&Shaping>, cfg: &RunConfig, seed: u64) -> Result<TaskResult> {
    let mut rng = rng_stream(seed, 0);
    let env_name = task.env().name.clone();
    if model.method == Method::PpoScratch {
        let pre = collect(&model.policy, &model.theta, task, None, cfg.algorithm.gamma, cfg.sampling.m, &mut rng)?;
        let grad = objective_gradient(&model.policy, &model.theta, &pre, cfg).map_err(|e| e.in_task(task.spec().label()))?;
        return Ok(TaskResult {
            env_name,
            pre,
            post: Vec::new(),
            inner: grad.clone(),
            outer: grad,
        });
    }
    let adapted = inner_adapt(model, task, shaping, cfg, &mut rng)?;
    let post = collect(&model.policy, &adapted.theta, task, shaping, cfg.algorithm.gamma, cfg.sampling.ell, &mut rng)
        .map_err(|e| e.in_task(task.spec().label()))?;
    let outer = objective_gradient(&model.policy, &adapted.theta, &post, cfg).map_err(|e| e.in_task(task.spec().label()))?;
    Ok(TaskResult {
        env_name,
        pre: adapted.trajectories,
        post,
        outer,
        inner: adapted.inner_grad,
    })
}

/// Runs `meta_iters` meta-iterations, calling `on_iteration` after each.
///
/// Each iteration freezes the shaping networks, samples `env_batch`
/// environments with replacement and `task_batch` tasks per environment,
/// adapts to every task, takes one first-order meta step on the
/// post-adaptation episodes, and finally fits the potential to every
/// episode of the iteration. `ppo-scratch` replaces adaptation and meta
/// step with one plain gradient step (rate `alpha`) on the mean task
/// gradient.
///
/// Task seeds are drawn on the coordinating thread and per-task results are
/// reduced in sampling order, so the output does not depend on `workers`.
pub fn train_with<F>(cfg: &RunConfig, opts: TrainOptions, mut on_iteration: F) -> Result<TrainOutcome>
where
    F: FnMut(&MetaModel, &IterationMetrics) -> Result<()>,
{
    let mut model = if opts.zero_potential {
        MetaModel::init_zero_potential(cfg)?
    } else {
        MetaModel::init(cfg)?
    };
    let catalog = cfg.catalog()?;
    let pool = if cfg.run.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.run.workers)
                .build()
                .map_err(|e| Error::Config(format!("run.workers: {e}")))?,
        )
    } else {
        None
    };
    let mut rng = rng_stream(cfg.run.seed, STREAM_SAMPLING);
    let mut metrics = Vec::with_capacity(cfg.run.meta_iters);
    for _ in 0..cfg.run.meta_iters {
        let snapshot = model.shaping().cloned();
        let mut jobs = Vec::with_capacity(cfg.sampling.env_batch * cfg.sampling.task_batch);
        for _ in 0..cfg.sampling.env_batch {
            let env: &EnvSpec = sample_environment(&mut rng, &catalog)?;
            for _ in 0..cfg.sampling.task_batch {
                let task = Task::new(sample_task(&mut rng, env)?)?;
                jobs.push((task, rng.gen::<u64>()));
            }
        }
        let work = |(task, seed): &(Task, u64)| run_task(&model, task, snapshot.as_ref(), cfg, *seed);
        let results: Vec<TaskResult> = match &pool {
            Some(pool) => pool.install(|| jobs.par_iter().map(work).collect::<Result<_>>())?,
            None => jobs.iter().map(work).collect::<Result<_>>()?,
        };

        let outer: Vec<Gradient> = results.iter().map(|r| r.outer.clone()).collect();
        if model.method == Method::PpoScratch {
            let mut mean = Gradient::zeros_like(&model.theta);
            for g in &outer {
                mean.add_assign(g)?;
            }
            mean.scale(1.0 / outer.len() as f64);
            model.theta = sgd_step(&model.theta, &mean, cfg.algorithm.alpha)?;
        } else {
            let inner: Vec<&Gradient> = results.iter().map(|r| &r.inner).collect();
            apply_meta_update(&mut model, &outer, &inner, cfg)?;
        }

        let shaping_loss = if opts.zero_potential || model.shaping.is_none() {
            None
        } else {
            let all: Vec<Trajectory> = results
                .iter()
                .flat_map(|r| r.pre.iter().chain(&r.post).cloned())
                .collect();
            update_shaping(&mut model, &all, cfg)?
        };
        model.iteration += 1;
        model.check_finite()?;

        let per_env = catalog
            .iter()
            .filter_map(|e| {
                let trajs: Vec<&Trajectory> = results
                    .iter()
                    .filter(|r| r.env_name == e.name)
                    .flat_map(|r| &r.pre)
                    .collect();
                (!trajs.is_empty()).then(|| (e.name.clone(), EpisodeStats::from_trajectories(trajs)))
            })
            .collect();
        let mut shaping_fingerprints: Vec<u64> = results
            .iter()
            .flat_map(|r| r.pre.iter().chain(&r.post))
            .map(|t| t.shaping_fingerprint)
            .collect();
        shaping_fingerprints.sort_unstable();
        shaping_fingerprints.dedup();
        let row = IterationMetrics {
            iteration: model.iteration,
            method: model.method,
            pre: EpisodeStats::from_trajectories(results.iter().flat_map(|r| &r.pre)),
            adapted: EpisodeStats::from_trajectories(results.iter().flat_map(|r| &r.post)),
            shaping_loss,
            per_env,
            shaping_fingerprints,
        };
        on_iteration(&model, &row)?;
        metrics.push(row);
    }
    Ok(TrainOutcome { model, metrics })
}
