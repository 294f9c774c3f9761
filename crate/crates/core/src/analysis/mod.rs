//! Exact checks and summaries of trained models.
//!
//! Gridworld tasks are finite and deterministic, so they can be written out
//! as tabular MDPs and solved exactly. Shaping with any potential shifts
//! every optimal Q-value of a state by the same amount `−φ(s)`, which
//! [`verify_consistency`] confirms state by state.

mod consistency;
mod evaluate;
mod heatmap;
mod stats;
mod tabular;

pub use consistency::{
    potential_table, verify_consistency, verify_shaping, ConsistencyReport, OffsetViolation, PolicyMismatch,
    OFFSET_TOLERANCE, VI_TOLERANCE,
};
pub use evaluate::{evaluate, evaluation_csv, mean_stochastic_steps, mean_stochastic_success, EvalStats, TaskSummary};
pub use heatmap::{potential_heatmap, Heatmap};
pub use stats::{average_ranks, spearman};
pub use tabular::{
    to_tabular, value_iteration, value_iteration_capped, PolicyTable, TabularMdp, ValueSolution, MAX_SWEEPS,
    TIE_TOLERANCE,
};

use crate::envs::Task;
use crate::error::Result;
use crate::shaping::Shaping;

/// Spearman correlation between the heatmap and negative shortest-path
/// distance to the goal over walkable cells. `None` if either is constant.
pub fn heatmap_goal_correlation(task: &Task, shaping: &Shaping) -> Result<Option<f64>> {
    let map = potential_heatmap(task, shaping)?;
    let dist = task.distances_to_goal();
    let width = task.grid().width();
    let (mut phi, mut neg_dist) = (Vec::new(), Vec::new());
    for (cell, v) in map.walkable() {
        if let Some(d) = dist[cell.y * width + cell.x] {
            phi.push(v);
            neg_dist.push(-(d as f64));
        }
    }
    Ok(spearman(&phi, &neg_dist))
}
