use serde::Serialize;

use super::tabular::{value_iteration, TabularMdp};
use crate::envs::{AgentState, Cell, Facing, Task};
use crate::error::{Error, Result};
use crate::shaping::Shaping;

/// Value-iteration tolerance used by the verifier.
pub const VI_TOLERANCE: f64 = 1e-12;
/// Allowed error of `V_shaped − V_orig + φ` per state.
pub const OFFSET_TOLERANCE: f64 = 1e-6;

/// `φ(h(s))` for every state of `mdp`, with terminal states set to zero.
pub fn potential_table(mdp: &TabularMdp, task: &Task, shaping: &Shaping) -> Result<Vec<f64>> {
    mdp.states
        .iter()
        .zip(&mdp.terminal)
        .map(|(&(pos, facing), &terminal)| {
            if terminal {
                return Ok(0.0);
            }
            let state = AgentState {
                pos,
                facing,
                steps_used: 0,
                done: false,
            };
            shaping.potential_at(&state, task)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyMismatch {
    pub cell: Cell,
    pub facing: Facing,
    pub original: Vec<usize>,
    pub shaped: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OffsetViolation {
    pub cell: Cell,
    pub facing: Facing,
    pub error: f64,
}

/// Outcome of comparing an MDP with its shaped counterpart.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub states: usize,
    pub policy_mismatches: Vec<PolicyMismatch>,
    pub offset_violations: Vec<OffsetViolation>,
    /// Largest `|V_shaped − V_orig + φ|` over non-terminal states.
    pub max_offset_error: f64,
    pub passed: bool,
}

/// Solves `mdp` and the MDP with reward `R + γφ(s') − φ(s)` (zero potential
/// at terminal states) and compares optimal action sets and values.
pub fn verify_consistency(mdp: &TabularMdp, phi: &[f64]) -> Result<ConsistencyReport> {
    let gamma = mdp.gamma;
    let phi_at = |s: usize| if mdp.terminal[s] { 0.0 } else { phi[s] };
    verify_shaping(mdp, phi, |s, _, t| gamma * phi_at(t) - phi_at(s))
}

/// As [`verify_consistency`] with an arbitrary additive reward term
/// `extra(s, a, s')`, still checked against the value offset `−φ`.
/// Passing a term that is not potential based is the verifier's negative
/// control.
pub fn verify_shaping<F>(mdp: &TabularMdp, phi: &[f64], extra: F) -> Result<ConsistencyReport>
where
    F: Fn(usize, usize, usize) -> f64,
{
    if phi.len() != mdp.len() {
        return Err(Error::dims("potential table", mdp.len(), phi.len()));
    }
    let mut shaped = mdp.clone();
    for s in 0..mdp.len() {
        if mdp.terminal[s] {
            continue;
        }
        for a in 0..mdp.next[s].len() {
            shaped.reward[s][a] += extra(s, a, mdp.next[s][a]);
        }
    }
    let original = value_iteration(mdp, VI_TOLERANCE)?;
    let shaped = value_iteration(&shaped, VI_TOLERANCE)?;
    let mut report = ConsistencyReport {
        states: mdp.len(),
        policy_mismatches: Vec::new(),
        offset_violations: Vec::new(),
        max_offset_error: 0.0,
        passed: true,
    };
    for s in 0..mdp.len() {
        let (cell, facing) = mdp.states[s];
        if original.policy.actions[s] != shaped.policy.actions[s] {
            report.policy_mismatches.push(PolicyMismatch {
                cell,
                facing,
                original: original.policy.actions[s].clone(),
                shaped: shaped.policy.actions[s].clone(),
            });
        }
        if mdp.terminal[s] {
            continue;
        }
        let error = (shaped.values[s] - original.values[s] + phi[s]).abs();
        report.max_offset_error = report.max_offset_error.max(error);
        if !(error <= OFFSET_TOLERANCE) {
            report.offset_violations.push(OffsetViolation { cell, facing, error });
        }
    }
    report.passed = report.policy_mismatches.is_empty() && report.offset_violations.is_empty();
    Ok(report)
}

impl ConsistencyReport {
    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} states, {} policy mismatches, {} offset violations, max offset error {:.3e}: {}\n",
            self.states,
            self.policy_mismatches.len(),
            self.offset_violations.len(),
            self.max_offset_error,
            if self.passed { "PASS" } else { "FAIL" }
        );
        for m in &self.policy_mismatches {
            out.push_str(&format!(
                "  policy differs at {} facing {:?}: original {:?}, shaped {:?}\n",
                m.cell, m.facing, m.original, m.shaped
            ));
        }
        for v in &self.offset_violations {
            out.push_str(&format!("  value offset off by {:.3e} at {} facing {:?}\n", v.error, v.cell, v.facing));
        }
        out
    }
}
