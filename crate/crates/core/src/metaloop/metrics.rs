use std::fmt::Write as _;

use super::Method;
use crate::trajectory::Trajectory;

/// Summary of a set of episodes. Failed episodes count their full horizon
/// toward `mean_steps`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpisodeStats {
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_steps: f64,
    pub success_rate: f64,
}

impl EpisodeStats {
    pub fn from_trajectories<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>) -> Self {
        let mut s = EpisodeStats::default();
        for t in trajs {
            s.episodes += 1;
            s.mean_return += t.original_return();
            s.mean_steps += t.steps_used() as f64;
            s.success_rate += t.reached_goal as u8 as f64;
        }
        if s.episodes > 0 {
            let n = s.episodes as f64;
            s.mean_return /= n;
            s.mean_steps /= n;
            s.success_rate /= n;
        }
        s
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationMetrics {
    /// 1-based index of the completed meta-iteration.
    pub iteration: usize,
    pub method: Method,
    /// Episodes of the meta policy before adaptation.
    pub pre: EpisodeStats,
    /// Episodes of the adapted policies.
    pub adapted: EpisodeStats,
    /// Regression loss at the iteration-start potential; `None` without shaping.
    pub shaping_loss: Option<f64>,
    /// Pre-adaptation statistics per sampled environment, in catalog order.
    /// Environments not drawn this iteration are absent.
    pub per_env: Vec<(String, EpisodeStats)>,
    /// Distinct shaping fingerprints found on this iteration's episodes,
    /// sorted. A single entry means every episode was shaped by the same
    /// frozen snapshot.
    pub shaping_fingerprints: Vec<u64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV header; per-environment columns follow the fixed ones.
pub fn metrics_header(env_names: &[String]) -> String {
    let mut h = String::from(
        "iteration,method,mean_return,mean_steps,success_rate,adapted_mean_steps,adapted_success_rate,shaping_loss",
    );
    for e in env_names {
        write!(h, ",{e}_return,{e}_steps,{e}_success").unwrap();
    }
    h
}

pub fn metrics_row(m: &IterationMetrics, env_names: &[String]) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{},{}",
        m.iteration,
        m.method.name(),
        m.pre.mean_return,
        m.pre.mean_steps,
        m.pre.success_rate,
        m.adapted.mean_steps,
        m.adapted.success_rate,
        opt(m.shaping_loss),
    );
    for e in env_names {
        match m.per_env.iter().find(|(n, _)| n == e) {
            Some((_, s)) => write!(row, ",{},{},{}", s.mean_return, s.mean_steps, s.success_rate).unwrap(),
            None => row.push_str(",,,"),
        }
    }
    row
}

/// Whole log as CSV text, newline-terminated.
pub fn metrics_csv(rows: &[IterationMetrics], env_names: &[String]) -> String {
    let mut out = metrics_header(env_names);
    out.push('\n');
    for r in rows {
        out.push_str(&metrics_row(r, env_names));
        out.push('\n');
    }
    out
}
