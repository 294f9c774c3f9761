use std::collections::HashMap;

use crate::envs::{ActionSet, Cell, Facing, Task};
use crate::error::{Error, Result};

/// A finite deterministic MDP with absorbing terminal states.
///
/// States built from a task are `(cell, facing)` pairs; cardinal tasks use
/// a single facing (north) per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub states: Vec<(Cell, Facing)>,
    /// `next[s][a]`.
    pub next: Vec<Vec<usize>>,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    pub terminal: Vec<bool>,
    pub gamma: f64,
}

impl TabularMdp {
    /// Builds an MDP from explicit tables. Terminal rows must loop to
    /// themselves with zero reward.
    pub fn from_tables(next: Vec<Vec<usize>>, reward: Vec<Vec<f64>>, terminal: Vec<bool>, gamma: f64) -> Result<Self> {
        let n = next.len();
        if reward.len() != n || terminal.len() != n {
            return Err(Error::dims("tabular MDP rows", n, reward.len().min(terminal.len())));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        for s in 0..n {
            if next[s].is_empty() || next[s].len() != reward[s].len() {
                return Err(Error::dims("actions of tabular state", next[s].len(), reward[s].len()));
            }
            if let Some(&bad) = next[s].iter().find(|&&t| t >= n) {
                return Err(Error::dims("tabular successor index bound", n, bad));
            }
            if terminal[s] && (next[s].iter().any(|&t| t != s) || reward[s].iter().any(|&r| r != 0.0)) {
                return Err(Error::Config(format!("terminal state {s} is not absorbing")));
            }
        }
        let states = (0..n).map(|i| (Cell::new(i, 0), Facing::North)).collect();
        Ok(TabularMdp {
            states,
            next,
            reward,
            terminal,
            gamma,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, cell: Cell, facing: Facing) -> Option<usize> {
        self.states.iter().position(|&s| s == (cell, facing))
    }

    /// Number of `(state, action)` pairs.
    pub fn transitions(&self) -> usize {
        self.next.iter().map(Vec::len).sum()
    }
}

/// Enumerates every walkable cell (times four headings for rotational
/// tasks) with the task's movement rule. Each move costs `−1`, the
/// per-transition decomposition of the episode reward `−steps_used`;
/// goal states are absorbing with zero reward.
pub fn to_tabular(task: &Task, gamma: f64) -> Result<TabularMdp> {
    let facings: &[Facing] = match task.env().action_set {
        ActionSet::Cardinal => &[Facing::North],
        ActionSet::Rotational => &Facing::ALL,
    };
    let states: Vec<(Cell, Facing)> = task
        .grid()
        .walkable_cells()
        .into_iter()
        .flat_map(|c| facings.iter().map(move |&f| (c, f)))
        .collect();
    let index: HashMap<(Cell, Facing), usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let actions = task.env().num_actions();
    let mut next = Vec::with_capacity(states.len());
    let mut reward = Vec::with_capacity(states.len());
    let mut terminal = Vec::with_capacity(states.len());
    for (i, &(cell, facing)) in states.iter().enumerate() {
        if task.is_goal(cell) {
            next.push(vec![i; actions]);
            reward.push(vec![0.0; actions]);
            terminal.push(true);
            continue;
        }
        let row = (0..actions)
            .map(|a| {
                let (c, f) = task.transition(cell, facing, a);
                let f = if facings.len() == 1 { Facing::North } else { f };
                index[&(c, f)]
            })
            .collect();
        next.push(row);
        reward.push(vec![-1.0; actions]);
        terminal.push(false);
    }
    let mut mdp = TabularMdp::from_tables(next, reward, terminal, gamma)?;
    mdp.states = states;
    Ok(mdp)
}

/// Optimal action set of every state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyTable {
    pub actions: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueSolution {
    pub values: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub policy: PolicyTable,
    pub iterations: usize,
}

/// Actions within this distance of the best Q-value count as optimal.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Sweeps allowed before [`value_iteration`] gives up.
pub const MAX_SWEEPS: usize = 1_000_000;

/// Synchronous value iteration until the sup-norm change drops below `tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<ValueSolution> {
    value_iteration_capped(mdp, tol, MAX_SWEEPS)
}

pub fn value_iteration_capped(mdp: &TabularMdp, tol: f64, max_sweeps: usize) -> Result<ValueSolution> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("value iteration tolerance must be positive, got {tol}")));
    }
    let n = mdp.len();
    let mut v = vec![0.0; n];
    let mut fresh = vec![0.0; n];
    let q_of = |v: &[f64], s: usize, a: usize| {
        if mdp.terminal[s] {
            0.0
        } else {
            mdp.reward[s][a] + mdp.gamma * v[mdp.next[s][a]]
        }
    };
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while residual >= tol {
        if iterations == max_sweeps {
            return Err(Error::NonConvergence { iterations, residual });
        }
        residual = 0.0;
        for s in 0..n {
            fresh[s] = (0..mdp.next[s].len()).map(|a| q_of(&v, s, a)).fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((fresh[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut fresh);
        iterations += 1;
    }
    let q: Vec<Vec<f64>> = (0..n)
        .map(|s| (0..mdp.next[s].len()).map(|a| q_of(&v, s, a)).collect())
        .collect();
    let actions = q
        .iter()
        .map(|row| {
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..row.len()).filter(|&a| row[a] >= best - TIE_TOLERANCE).collect()
        })
        .collect();
    Ok(ValueSolution {
        values: v,
        q,
        policy: PolicyTable { actions },
        iterations,
    })
}
