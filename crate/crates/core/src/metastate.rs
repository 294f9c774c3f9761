//! Cross-environment meta state embedding.
//!
//! Every environment, whatever its size, observation mode or action set, is
//! mapped into the same 3×2 meta state: the agent's position, the goal's
//! position, and an auxiliary row carrying the heading of rotational agents.
//! One potential network consumes the meta states of all environments.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Gradient, Layout, ParamVector};
use crate::envs::{ActionSet, AgentState, Facing, Task};
use crate::error::{Error, Result};

pub const META_ROWS: usize = 3;
pub const META_DIM: usize = 2 * META_ROWS;

/// A point in the shared meta state space, stored row-major
/// `[agent_x, agent_y, goal_x, goal_y, aux_0, aux_1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetaState(pub [f64; META_DIM]);

impl MetaState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn row(&self, r: usize) -> [f64; 2] {
        [self.0[2 * r], self.0[2 * r + 1]]
    }

    pub fn agent(&self) -> [f64; 2] {
        self.row(0)
    }

    pub fn goal(&self) -> [f64; 2] {
        self.row(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    /// Raw coordinates; heading one-hot (north, east) in the auxiliary row.
    ConcatFixed,
    /// Coordinates divided by the scenario extents.
    AffineByExtent,
    /// `AffineByExtent` followed by a learned per-row scale and shift.
    LearnedAffine,
    /// Raw `(x, y, goal_x, goal_y)` zero-padded to the meta width, with no
    /// heading row. Input of the ablation without meta state embedding.
    RawState,
}

impl EmbeddingMode {
    pub fn is_learned(self) -> bool {
        self == EmbeddingMode::LearnedAffine
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSpec {
    pub mode: EmbeddingMode,
    /// Empty unless the mode is learned; then `row{r}.scale` and `row{r}.shift`.
    pub params: ParamVector,
}

fn learned_layout() -> Layout {
    Layout::new((0..META_ROWS).flat_map(|r| {
        [
            (format!("row{r}.scale"), vec![2]),
            (format!("row{r}.shift"), vec![2]),
        ]
    }))
}

impl EmbeddingSpec {
    /// Learned embeddings start at unit scale and zero shift.
    pub fn new(mode: EmbeddingMode) -> Self {
        let params = if mode.is_learned() {
            let mut p = ParamVector::zeros(Arc::new(learned_layout()));
            for r in 0..META_ROWS {
                p.slice_mut(&format!("row{r}.scale")).unwrap().fill(1.0);
            }
            p
        } else {
            ParamVector::empty()
        };
        EmbeddingSpec { mode, params }
    }

    pub fn with_params(mode: EmbeddingMode, params: ParamVector) -> Result<Self> {
        let expected = if mode.is_learned() { learned_layout() } else { Layout::empty() };
        if **params.layout() != expected {
            return Err(Error::dims("embedding parameters", expected.len(), params.len()));
        }
        Ok(EmbeddingSpec { mode, params })
    }

    /// Features before the learned scale-shift. For fixed modes these are
    /// the meta state itself.
    pub fn base_features(&self, state: &AgentState, task: &Task) -> Result<[f64; META_DIM]> {
        let spec = task.spec();
        let [zw, zh] = spec.env.domain_knowledge();
        if zw == 0.0 || zh == 0.0 {
            return Err(Error::Config(format!(
                "environment `{}` has a zero extent",
                spec.env.name
            )));
        }
        let (ax, ay) = (state.pos.x as f64, state.pos.y as f64);
        let (gx, gy) = (spec.goal.x as f64, spec.goal.y as f64);
        let aux = match spec.env.action_set {
            ActionSet::Cardinal => [0.0, 0.0],
            ActionSet::Rotational => [
                (state.facing == Facing::North) as u8 as f64,
                (state.facing == Facing::East) as u8 as f64,
            ],
        };
        Ok(match self.mode {
            EmbeddingMode::ConcatFixed => [ax, ay, gx, gy, aux[0], aux[1]],
            EmbeddingMode::AffineByExtent | EmbeddingMode::LearnedAffine => {
                [ax / zw, ay / zh, gx / zw, gy / zh, aux[0], aux[1]]
            }
            EmbeddingMode::RawState => [ax, ay, gx, gy, 0.0, 0.0],
        })
    }

    pub fn apply(&self, base: &[f64; META_DIM]) -> MetaState {
        if !self.mode.is_learned() {
            return MetaState(*base);
        }
        let p = self.params.values();
        let mut out = [0.0; META_DIM];
        for r in 0..META_ROWS {
            // Layout per row: scale[2], shift[2].
            let scale = &p[4 * r..4 * r + 2];
            let shift = &p[4 * r + 2..4 * r + 4];
            for c in 0..2 {
                out[2 * r + c] = scale[c] * base[2 * r + c] + shift[c];
            }
        }
        MetaState(out)
    }

    /// Gradient of `upstream · apply(base)` with respect to the parameters.
    pub fn backward_from_base(&self, base: &[f64; META_DIM], upstream: &[f64]) -> Gradient {
        let mut grad = Gradient::zeros_like(&self.params);
        if self.mode.is_learned() {
            let g = grad.values_mut();
            for r in 0..META_ROWS {
                for c in 0..2 {
                    g[4 * r + c] += upstream[2 * r + c] * base[2 * r + c];
                    g[4 * r + 2 + c] += upstream[2 * r + c];
                }
            }
        }
        grad
    }
}

/// `h(s; z)`: the meta state of `state` in `task`.
pub fn embed(spec: &EmbeddingSpec, state: &AgentState, task: &Task) -> Result<MetaState> {
    Ok(spec.apply(&spec.base_features(state, task)?))
}

/// Exact gradient of `upstream · h(s; z)` with respect to the embedding
/// parameters. Fixed modes have no parameters and return an empty gradient.
pub fn embed_backward(
    spec: &EmbeddingSpec,
    state: &AgentState,
    task: &Task,
    upstream: &[f64],
) -> Result<Gradient> {
    if upstream.len() != META_DIM {
        return Err(Error::dims("meta state upstream", META_DIM, upstream.len()));
    }
    let base = spec.base_features(state, task)?;
    Ok(spec.backward_from_base(&base, upstream))
}
