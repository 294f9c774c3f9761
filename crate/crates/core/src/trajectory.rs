use crate::envs::AgentState;
use crate::metastate::{MetaState, META_DIM};

/// One simulated step before meta states and shaping are attached.
#[derive(Clone, Debug, PartialEq)]
pub struct RawStep {
    /// State the action was taken from.
    pub state: AgentState,
    /// Policy input (already padded to the policy width).
    pub observation: Vec<f64>,
    pub action: usize,
    /// `log π(a|o)` under the sampling parameters.
    pub log_prob: f64,
    pub reward: f64,
}

/// A complete episode as simulated.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTrajectory {
    pub env_name: String,
    pub steps: Vec<RawStep>,
    pub final_state: AgentState,
    pub reached_goal: bool,
}

/// One step of an extended trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: AgentState,
    pub observation: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    /// `h(s_t)`.
    pub meta_state: MetaState,
    /// Embedding features of `s_t` before any learned transform.
    pub base: [f64; META_DIM],
    /// `F(s_m^t, s_m^{t+1})`.
    pub shaping: f64,
    /// `reward + shaping`.
    pub shaped_reward: f64,
}

/// An episode annotated with meta states and shaped rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub env_name: String,
    pub steps: Vec<Step>,
    pub final_state: AgentState,
    pub final_meta_state: MetaState,
    pub reached_goal: bool,
    /// Hash of the potential and embedding parameters used for shaping;
    /// zero when no shaping was applied.
    pub shaping_fingerprint: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps_used(&self) -> usize {
        self.final_state.steps_used
    }

    pub fn original_rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn shaped_rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.shaped_reward).collect()
    }

    /// Undiscounted episode return under the environment reward.
    pub fn original_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// `Σ_t γ^t r_t`.
pub fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    for r in rewards {
        total += weight * r;
        weight *= gamma;
    }
    total
}
