use std::fmt::Write as _;

use crate::envs::{ActionSet, AgentState, Cell, Facing, Task};
use crate::error::Result;
use crate::shaping::Shaping;

/// Potential over the walkable bounding box of a task. Row 0 is the
/// northernmost row; walls hold `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    /// Cell at `(row 0, col 0)`.
    pub origin: (usize, usize),
    pub values: Vec<Option<f64>>,
}

impl Heatmap {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.cols + col]
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        Cell::new(self.origin.0 + col, self.origin.1 + self.rows - 1 - row)
    }

    /// `(cell, value)` for every walkable cell, row by row.
    pub fn walkable(&self) -> Vec<(Cell, f64)> {
        let mut out = Vec::new();
        for row in 0..self.rows {
            for col in 0..self.cols {
                if let Some(v) = self.get(row, col) {
                    out.push((self.cell(row, col), v));
                }
            }
        }
        out
    }

    /// `row,col,value` lines for the walkable cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,value\n");
        for row in 0..self.rows {
            for col in 0..self.cols {
                if let Some(v) = self.get(row, col) {
                    writeln!(out, "{row},{col},{v}").unwrap();
                }
            }
        }
        out
    }
}

/// `φ(h(cell))` for every walkable cell of `task`. Rotational tasks average
/// the four headings. The goal cell is scored like any other cell.
pub fn potential_heatmap(task: &Task, shaping: &Shaping) -> Result<Heatmap> {
    let cells = task.grid().walkable_cells();
    let min_x = cells.iter().map(|c| c.x).min().unwrap_or(0);
    let max_x = cells.iter().map(|c| c.x).max().unwrap_or(0);
    let min_y = cells.iter().map(|c| c.y).min().unwrap_or(0);
    let max_y = cells.iter().map(|c| c.y).max().unwrap_or(0);
    let (rows, cols) = (max_y - min_y + 1, max_x - min_x + 1);
    let facings: &[Facing] = match task.env().action_set {
        ActionSet::Cardinal => &[Facing::North],
        ActionSet::Rotational => &Facing::ALL,
    };
    let mut values = vec![None; rows * cols];
    for c in cells {
        let mut total = 0.0;
        for &facing in facings {
            let state = AgentState {
                pos: c,
                facing,
                steps_used: 0,
                done: false,
            };
            total += shaping.potential_at(&state, task)?;
        }
        let row = max_y - c.y;
        let col = c.x - min_x;
        values[row * cols + col] = Some(total / facings.len() as f64);
    }
    Ok(Heatmap {
        rows,
        cols,
        origin: (min_x, min_y),
        values,
    })
}
