//! Stochastic softmax policies, rollouts and policy-gradient losses.
//!
//! One policy network serves every environment. Observations shorter than
//! the network input are zero-padded at the end.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Activation, Gradient, MlpSpec, OutputHead, ParamVector, Trace};
use crate::envs::{EnvSpec, Task, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::shaping::discounted_return;
use crate::trajectory::{RawStep, RawTrajectory, Trajectory};

/// Policy network shape for a given input width.
pub fn policy_spec(obs_dim: usize, hidden: &[usize]) -> MlpSpec {
    MlpSpec::new(obs_dim, hidden.to_vec(), NUM_ACTIONS, Activation::Relu, OutputHead::SoftmaxLogits)
}

/// The widest observation in `catalog`; the policy input width.
pub fn observation_width<'a>(catalog: impl IntoIterator<Item = &'a EnvSpec>) -> usize {
    catalog.into_iter().map(EnvSpec::observation_len).max().unwrap_or(0)
}

/// Numerically stable `log softmax`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn padded(spec: &MlpSpec, obs: &[f64]) -> Result<Vec<f64>> {
    if obs.len() > spec.input_dim {
        return Err(Error::dims("policy observation", spec.input_dim, obs.len()));
    }
    let mut v = obs.to_vec();
    v.resize(spec.input_dim, 0.0);
    Ok(v)
}

fn checked_log_softmax(logits: &[f64], params: &ParamVector) -> Result<Vec<f64>> {
    if logits.iter().all(|l| l.is_finite()) {
        return Ok(log_softmax(logits));
    }
    Err(Error::NonFinite {
        slice: params.first_non_finite().unwrap_or_else(|| "policy logits".into()),
    })
}

/// Action log-probabilities for one (unpadded or padded) observation.
pub fn action_log_probs(spec: &MlpSpec, params: &ParamVector, obs: &[f64]) -> Result<Vec<f64>> {
    let x = padded(spec, obs)?;
    checked_log_softmax(&spec.forward(params, &x)?, params)
}

/// Samples an action; returns it with its log-probability.
pub fn act<R: Rng + ?Sized>(spec: &MlpSpec, params: &ParamVector, obs: &[f64], rng: &mut R) -> Result<(usize, f64)> {
    let lp = action_log_probs(spec, params, obs)?;
    Ok(sample_from(&lp, rng))
}

fn sample_from<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return (a, *lp);
        }
    }
    let a = log_probs.len() - 1;
    (a, log_probs[a])
}

fn greedy(log_probs: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (a, lp) in log_probs.iter().enumerate() {
        if *lp > log_probs[best] {
            best = a;
        }
    }
    (best, log_probs[best])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionSelection {
    Sample,
    /// Most probable action, lowest index on ties.
    Greedy,
}

/// Runs one episode to termination or the horizon.
pub fn rollout<R: Rng + ?Sized>(
    spec: &MlpSpec,
    params: &ParamVector,
    task: &Task,
    selection: ActionSelection,
    rng: &mut R,
) -> Result<RawTrajectory> {
    spec.check_params(params)?;
    let obs_len = task.env().observation_len();
    if obs_len > spec.input_dim {
        return Err(Error::dims("policy observation", spec.input_dim, obs_len));
    }
    let mut state = task.reset();
    let mut steps = Vec::with_capacity(task.env().horizon);
    let mut trace = Trace::default();
    let mut obs = Vec::with_capacity(spec.input_dim);
    let mut reached_goal = false;
    while !state.done {
        task.observe_into(&state, &mut obs);
        obs.resize(spec.input_dim, 0.0);
        spec.forward_trace(params.values(), &obs, &mut trace);
        let lp = checked_log_softmax(trace.output(), params)?;
        let (action, log_prob) = match selection {
            ActionSelection::Sample => sample_from(&lp, rng),
            ActionSelection::Greedy => greedy(&lp),
        };
        let (next, reward, reached) = task.advance(&state, action)?;
        steps.push(RawStep {
            state,
            observation: obs.clone(),
            action,
            log_prob,
            reward,
        });
        reached_goal = reached;
        state = next;
    }
    Ok(RawTrajectory {
        env_name: task.env().name.clone(),
        steps,
        final_state: state,
        reached_goal,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    None,
    /// Mean shaped return-to-go over every step in the batch.
    #[default]
    MeanReturn,
}

/// Per-step advantages: return-to-go (of shaped or original rewards) minus
/// the baseline.
pub fn advantages(batch: &[Trajectory], gamma: f64, use_shaped: bool, baseline: Baseline) -> Vec<Vec<f64>> {
    let returns: Vec<Vec<f64>> = batch
        .iter()
        .map(|t| {
            let rewards = if use_shaped { t.shaped_rewards() } else { t.original_rewards() };
            discounted_return(&rewards, gamma)
        })
        .collect();
    let b = match baseline {
        Baseline::None => 0.0,
        Baseline::MeanReturn => {
            let n: usize = returns.iter().map(Vec::len).sum();
            if n == 0 {
                0.0
            } else {
                returns.iter().flatten().sum::<f64>() / n as f64
            }
        }
    };
    returns
        .into_iter()
        .map(|r| r.into_iter().map(|g| g - b).collect())
        .collect()
}

fn total_steps(batch: &[Trajectory]) -> Result<usize> {
    let n: usize = batch.iter().map(Trajectory::len).sum();
    if n == 0 {
        return Err(Error::Usage("policy loss over a batch with no steps".into()));
    }
    Ok(n)
}

/// REINFORCE: `−mean_t log π(a_t|o_t)·A_t`, with its exact gradient.
pub fn pg_loss(
    spec: &MlpSpec,
    params: &ParamVector,
    batch: &[Trajectory],
    gamma: f64,
    use_shaped: bool,
    baseline: Baseline,
) -> Result<(f64, Gradient)> {
    spec.check_params(params)?;
    let n = total_steps(batch)? as f64;
    let adv = advantages(batch, gamma, use_shaped, baseline);
    let mut grad = Gradient::zeros_like(params);
    let mut trace = Trace::default();
    let mut loss = 0.0;
    let mut upstream = [0.0; NUM_ACTIONS];
    for (traj, adv) in batch.iter().zip(&adv) {
        for (step, &a) in traj.steps.iter().zip(adv) {
            let obs = padded(spec, &step.observation)?;
            spec.forward_trace(params.values(), &obs, &mut trace);
            let lp = log_softmax(trace.output());
            loss -= lp[step.action] * a / n;
            // d(−log π(a)·A/n)/dlogits = −(onehot(a) − p)·A/n
            for (k, u) in upstream.iter_mut().enumerate() {
                let onehot = (k == step.action) as u8 as f64;
                *u = -(onehot - lp[k].exp()) * a / n;
            }
            spec.backward_trace(params.values(), &trace, &upstream, grad.values_mut(), None);
        }
    }
    Ok((loss, grad))
}

/// Clipped importance-ratio surrogate against the log-probabilities stored
/// at sampling time:
/// `−mean_t min(ρ_t A_t, clip(ρ_t, 1−ε, 1+ε) A_t)`.
pub fn clipped_surrogate_loss(
    spec: &MlpSpec,
    params: &ParamVector,
    batch: &[Trajectory],
    gamma: f64,
    use_shaped: bool,
    baseline: Baseline,
    clip_eps: f64,
) -> Result<(f64, Gradient)> {
    spec.check_params(params)?;
    if !(clip_eps > 0.0 && clip_eps < 1.0) {
        return Err(Error::Config(format!("clip epsilon must lie in (0, 1), got {clip_eps}")));
    }
    let n = total_steps(batch)? as f64;
    let adv = advantages(batch, gamma, use_shaped, baseline);
    let mut grad = Gradient::zeros_like(params);
    let mut trace = Trace::default();
    let mut loss = 0.0;
    let mut upstream = [0.0; NUM_ACTIONS];
    for (traj, adv) in batch.iter().zip(&adv) {
        for (step, &a) in traj.steps.iter().zip(adv) {
            let obs = padded(spec, &step.observation)?;
            spec.forward_trace(params.values(), &obs, &mut trace);
            let lp = log_softmax(trace.output());
            let ratio = (lp[step.action] - step.log_prob).exp();
            let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
            let (unclipped_term, clipped_term) = (ratio * a, clipped * a);
            loss -= unclipped_term.min(clipped_term) / n;
            if unclipped_term <= clipped_term {
                // d(−ρA/n)/dlogits = −ρA/n·(onehot(a) − p)
                for (k, u) in upstream.iter_mut().enumerate() {
                    let onehot = (k == step.action) as u8 as f64;
                    *u = -ratio * a / n * (onehot - lp[k].exp());
                }
                spec.backward_trace(params.values(), &trace, &upstream, grad.values_mut(), None);
            }
        }
    }
    Ok((loss, grad))
}
