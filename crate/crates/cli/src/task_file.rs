use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use hmrl::envs::{catalog_by_name, sample_task, Cell, Task};

/// A task file:
///
/// ```toml
/// env = "hallway-heldout"   # environment name
/// seed = 3                  # draws the layout and endpoints
/// start = [0, 1]            # optional override
/// goal = [11, 1]            # optional override
/// ```
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub env: String,
    #[serde(default)]
    pub seed: u64,
    pub start: Option<[usize; 2]>,
    pub goal: Option<[usize; 2]>,
}

impl TaskFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn build(&self) -> Result<Task, String> {
        let envs = catalog_by_name(&self.env).ok_or_else(|| format!("env: unknown environment `{}`", self.env))?;
        if envs.len() != 1 {
            return Err(format!("env: `{}` names a catalog, not one environment", self.env));
        }
        let mut spec = sample_task(&mut ChaCha8Rng::seed_from_u64(self.seed), &envs[0]).map_err(|e| e.to_string())?;
        if let Some([x, y]) = self.start {
            spec.start = Cell::new(x, y);
        }
        if let Some([x, y]) = self.goal {
            spec.goal = Cell::new(x, y);
        }
        Task::new(spec).map_err(|e| e.to_string())
    }
}
