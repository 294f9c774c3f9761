use std::fmt::Write as _;

use rand::Rng;

use crate::diffcore::{MlpSpec, ParamVector};
use crate::envs::{Task, TaskSpec};
use crate::error::{Error, Result};
use crate::policy::{rollout, ActionSelection};

/// Episode statistics; failed episodes count the full horizon.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalStats {
    pub episodes: usize,
    pub mean_steps: f64,
    pub max_steps: usize,
    pub success_rate: f64,
}

impl EvalStats {
    fn push(&mut self, steps: usize, success: bool) {
        self.episodes += 1;
        self.mean_steps += steps as f64;
        self.max_steps = self.max_steps.max(steps);
        self.success_rate += success as u8 as f64;
    }

    fn finish(mut self) -> Self {
        if self.episodes > 0 {
            self.mean_steps /= self.episodes as f64;
            self.success_rate /= self.episodes as f64;
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSummary {
    pub task: TaskSpec,
    /// One episode of the most probable action (the greedy policy is
    /// deterministic).
    pub greedy: EvalStats,
    /// `episodes` sampled episodes.
    pub stochastic: EvalStats,
}

/// Runs the greedy policy once and the sampling policy `episodes` times on
/// every task.
pub fn evaluate<R: Rng + ?Sized>(
    policy: &MlpSpec,
    theta: &ParamVector,
    tasks: &[TaskSpec],
    episodes: usize,
    rng: &mut R,
) -> Result<Vec<TaskSummary>> {
    if episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode per task".into()));
    }
    tasks
        .iter()
        .map(|spec| {
            let task = Task::new(spec.clone())?;
            let mut greedy = EvalStats::default();
            let g = rollout(policy, theta, &task, ActionSelection::Greedy, rng)?;
            greedy.push(g.final_state.steps_used, g.reached_goal);
            let mut stochastic = EvalStats::default();
            for _ in 0..episodes {
                let t = rollout(policy, theta, &task, ActionSelection::Sample, rng)?;
                stochastic.push(t.final_state.steps_used, t.reached_goal);
            }
            Ok(TaskSummary {
                task: spec.clone(),
                greedy: greedy.finish(),
                stochastic: stochastic.finish(),
            })
        })
        .collect()
}

/// Mean over tasks of the stochastic mean steps.
pub fn mean_stochastic_steps(summaries: &[TaskSummary]) -> f64 {
    summaries.iter().map(|s| s.stochastic.mean_steps).sum::<f64>() / summaries.len().max(1) as f64
}

/// Mean over tasks of the stochastic success rate.
pub fn mean_stochastic_success(summaries: &[TaskSummary]) -> f64 {
    summaries.iter().map(|s| s.stochastic.success_rate).sum::<f64>() / summaries.len().max(1) as f64
}

pub fn evaluation_csv(summaries: &[TaskSummary]) -> String {
    let mut out = String::from(
        "task,env,layout_seed,start_x,start_y,goal_x,goal_y,greedy_steps,greedy_success,\
         mean_steps,max_steps,success_rate\n",
    );
    for (i, s) in summaries.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{},{},{}",
            s.task.env.name,
            s.task.layout_seed,
            s.task.start.x,
            s.task.start.y,
            s.task.goal.x,
            s.task.goal.y,
            s.greedy.mean_steps,
            s.greedy.success_rate,
            s.stochastic.mean_steps,
            s.stochastic.max_steps,
            s.stochastic.success_rate,
        )
        .unwrap();
    }
    out
}
