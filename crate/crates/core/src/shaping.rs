//! Potential-based meta reward shaping.
//!
//! A potential network `φ` scores meta states. Each transition receives the
//! shaping signal `F = γ·φ(s_m') − φ(s_m)`, with `φ` taken as zero at the
//! state that ends the episode, so the discounted shaped return of any
//! episode equals its original return minus `φ(s_m^0)`. The potential is
//! fitted by regressing it onto the discounted shaped returns observed from
//! each visited meta state.

use rand::Rng;

use crate::diffcore::{Activation, Gradient, MlpSpec, OutputHead, ParamVector, Trace};
use crate::envs::Task;
use crate::error::{Error, Result};
use crate::metastate::{embed, EmbeddingSpec, MetaState, META_DIM};
use crate::trajectory::{RawTrajectory, Step, Trajectory};

/// Scalar potential over flattened meta states.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialNet {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl PotentialNet {
    pub fn spec_for(hidden: &[usize]) -> MlpSpec {
        MlpSpec::new(META_DIM, hidden.to_vec(), 1, Activation::Relu, OutputHead::Linear)
    }

    pub fn init<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Self {
        let spec = Self::spec_for(hidden);
        let params = spec.init(rng);
        PotentialNet { spec, params }
    }

    /// All-zero parameters: `φ ≡ 0`.
    pub fn zeros(hidden: &[usize]) -> Self {
        let spec = Self::spec_for(hidden);
        let params = spec.zeros();
        PotentialNet { spec, params }
    }

    pub fn from_params(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        if spec.input_dim != META_DIM || spec.output_dim != 1 {
            return Err(Error::Config(format!(
                "potential network must map {META_DIM} inputs to 1 output, got {} -> {}",
                spec.input_dim, spec.output_dim
            )));
        }
        spec.check_params(&params)?;
        Ok(PotentialNet { spec, params })
    }

    pub fn value(&self, s_m: &MetaState) -> f64 {
        let mut trace = Trace::default();
        self.spec.forward_trace(self.params.values(), s_m.as_slice(), &mut trace);
        trace.output()[0]
    }
}

/// `φ(s_m)`.
pub fn potential(net: &PotentialNet, s_m: &MetaState) -> f64 {
    net.value(s_m)
}

/// `γ·φ(s_m') − φ(s_m)`, with `φ(s_m')` replaced by zero on the final transition.
pub fn shape(net: &PotentialNet, s_m: &MetaState, s_m_next: &MetaState, gamma: f64, terminal: bool) -> f64 {
    let next = if terminal { 0.0 } else { net.value(s_m_next) };
    gamma * next - net.value(s_m)
}

/// Embedding and potential used together to shape rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct Shaping {
    pub embedding: EmbeddingSpec,
    pub potential: PotentialNet,
}

impl Shaping {
    pub fn new(embedding: EmbeddingSpec, potential: PotentialNet) -> Self {
        Shaping { embedding, potential }
    }

    /// `φ(h(s))` for a state of `task`.
    pub fn potential_at(&self, state: &crate::envs::AgentState, task: &Task) -> Result<f64> {
        Ok(self.potential.value(&embed(&self.embedding, state, task)?))
    }

    /// Hash of the exact parameter bits of both modules.
    pub fn fingerprint(&self) -> u64 {
        let a = self.potential.params.fingerprint();
        let b = self.embedding.params.fingerprint();
        a.rotate_left(17) ^ b ^ 0x9e37_79b9_7f4a_7c15
    }
}

/// Attaches meta states and shaped rewards to a finished episode.
///
/// Without a `shaping` the meta states are left at zero and every shaping
/// term is exactly `0.0`, so shaped rewards equal the original ones.
pub fn extend_trajectory(
    raw: RawTrajectory,
    task: &Task,
    shaping: Option<&Shaping>,
    gamma: f64,
) -> Result<Trajectory> {
    let n = raw.steps.len();
    let mut bases = Vec::with_capacity(n + 1);
    let mut metas = Vec::with_capacity(n + 1);
    let mut phis = Vec::with_capacity(n + 1);
    if let Some(sh) = shaping {
        for state in raw.steps.iter().map(|s| &s.state).chain([&raw.final_state]) {
            let base = sh.embedding.base_features(state, task)?;
            let meta = sh.embedding.apply(&base);
            phis.push(sh.potential.value(&meta));
            bases.push(base);
            metas.push(meta);
        }
    } else {
        bases.resize(n + 1, [0.0; META_DIM]);
        metas.resize(n + 1, MetaState([0.0; META_DIM]));
        phis.resize(n + 1, 0.0);
    }
    let steps = raw
        .steps
        .into_iter()
        .enumerate()
        .map(|(t, s)| {
            let terminal = t + 1 == n;
            let next = if terminal { 0.0 } else { phis[t + 1] };
            let shaping = gamma * next - phis[t];
            Step {
                state: s.state,
                observation: s.observation,
                action: s.action,
                log_prob: s.log_prob,
                reward: s.reward,
                meta_state: metas[t],
                base: bases[t],
                shaping,
                shaped_reward: s.reward + shaping,
            }
        })
        .collect();
    Ok(Trajectory {
        env_name: raw.env_name,
        steps,
        final_state: raw.final_state,
        final_meta_state: metas[n],
        reached_goal: raw.reached_goal,
        shaping_fingerprint: shaping.map_or(0, Shaping::fingerprint),
    })
}

/// Per-step returns `R_t = r_t + γ R_{t+1}`, `R_T = r_T`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// A regression target for the potential: the discounted shaped return
/// observed from one visited state.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnTarget {
    pub meta_state: MetaState,
    /// Embedding features before any learned transform, so the loss can
    /// re-embed with the current parameters.
    pub base: [f64; META_DIM],
    pub target: f64,
}

/// One target per visited step, computed from shaped rewards.
pub fn collect_targets(batch: &[Trajectory], gamma: f64) -> Vec<ReturnTarget> {
    let mut out = Vec::with_capacity(batch.iter().map(Trajectory::len).sum());
    for traj in batch {
        let returns = discounted_return(&traj.shaped_rewards(), gamma);
        out.extend(traj.steps.iter().zip(returns).map(|(s, target)| ReturnTarget {
            meta_state: s.meta_state,
            base: s.base,
            target,
        }));
    }
    out
}

#[derive(Clone, Debug)]
pub struct ShapingLoss {
    pub loss: f64,
    pub potential_grad: Gradient,
    pub embedding_grad: Gradient,
}

/// Mean squared error between `φ(h(s))` and the (constant) targets, with
/// gradients for the potential and, when learned, the embedding.
///
/// Returns `None` for an empty target set.
pub fn shaping_loss(targets: &[ReturnTarget], shaping: &Shaping) -> Option<ShapingLoss> {
    if targets.is_empty() {
        return None;
    }
    let net = &shaping.potential;
    let emb = &shaping.embedding;
    let n = targets.len() as f64;
    let mut potential_grad = Gradient::zeros_like(&net.params);
    let mut embedding_grad = Gradient::zeros_like(&emb.params);
    let mut trace = Trace::default();
    let mut input_grad = Vec::with_capacity(META_DIM);
    let mut loss = 0.0;
    for t in targets {
        let meta = emb.apply(&t.base);
        net.spec.forward_trace(net.params.values(), meta.as_slice(), &mut trace);
        let residual = t.target - trace.output()[0];
        loss += residual * residual / n;
        let upstream = [-2.0 * residual / n];
        if emb.mode.is_learned() {
            net.spec.backward_trace(
                net.params.values(),
                &trace,
                &upstream,
                potential_grad.values_mut(),
                Some(&mut input_grad),
            );
            let g = emb.backward_from_base(&t.base, &input_grad);
            for (a, b) in embedding_grad.values_mut().iter_mut().zip(g.values()) {
                *a += b;
            }
        } else {
            net.spec
                .backward_trace(net.params.values(), &trace, &upstream, potential_grad.values_mut(), None);
        }
    }
    Some(ShapingLoss {
        loss,
        potential_grad,
        embedding_grad,
    })
}
