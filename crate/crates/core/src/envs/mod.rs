//! Deterministic gridworld families with sparse terminal reward.
//!
//! Two families are provided. A *hallway* is a straight corridor three cells
//! thick whose goal sits at the middle of the east end. A *maze* is a strip
//! of square rooms separated by walls with one doorway each. Both pay zero
//! reward until the episode ends, then pay `-steps_used` (or `-horizon` on
//! truncation).

mod catalog;
mod grid;

use std::collections::{HashSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use catalog::{catalog_by_name, desk_catalog, hallway_catalog, heldout_hallway, maze_catalog};
pub use grid::{Cell, GridMap};

/// Thickness of every hallway, in cells.
pub const HALLWAY_WIDTH: usize = 3;

/// Number of observation channels per grid cell: wall, free, agent, goal.
pub const CHANNELS: usize = 4;

const MAX_TASK_RETRIES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Hallway,
    Maze,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ObsMode {
    /// The whole scenario plus agent and goal coordinates.
    Full,
    /// A square window around the agent plus the agent's coordinates.
    Egocentric { window_radius: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionSet {
    /// up, down, left, right
    Cardinal,
    /// turn left, turn right, move forward, move back
    Rotational,
}

pub const NUM_ACTIONS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Facing {
    North,
    East,
    South,
    West,
}

impl Facing {
    pub const ALL: [Facing; 4] = [Facing::North, Facing::East, Facing::South, Facing::West];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Facing::North => (0, 1),
            Facing::East => (1, 0),
            Facing::South => (0, -1),
            Facing::West => (-1, 0),
        }
    }

    pub fn turn_left(self) -> Facing {
        match self {
            Facing::North => Facing::West,
            Facing::West => Facing::South,
            Facing::South => Facing::East,
            Facing::East => Facing::North,
        }
    }

    pub fn turn_right(self) -> Facing {
        self.turn_left().turn_left().turn_left()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Maps a window offset `(lateral, forward)` to a world offset.
    fn to_world(self, lateral: i64, forward: i64) -> (i64, i64) {
        match self {
            Facing::North => (lateral, forward),
            Facing::East => (forward, -lateral),
            Facing::South => (-lateral, -forward),
            Facing::West => (-forward, lateral),
        }
    }
}

/// Descriptor of one environment family member.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub name: String,
    pub family: Family,
    pub rooms: usize,
    /// Cells per room side (corridor length for a hallway room).
    pub room_size: usize,
    pub obs_mode: ObsMode,
    pub action_set: ActionSet,
    /// Cells travelled per move action.
    pub step_scale: usize,
    pub horizon: usize,
    #[serde(default)]
    pub goal_radius: usize,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("environment `{}`: {msg}", self.name)));
        if self.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if self.rooms < 1 {
            return bad("rooms must be at least 1");
        }
        if self.room_size < 2 {
            return bad("room_size must be at least 2");
        }
        if self.step_scale < 1 {
            return bad("step_scale must be at least 1");
        }
        if let ObsMode::Egocentric { window_radius } = self.obs_mode {
            if window_radius < 1 {
                return bad("window_radius must be at least 1");
            }
        }
        Ok(())
    }

    /// `(width, height)` of the instantiated scenario in cells.
    pub fn extents(&self) -> (usize, usize) {
        match self.family {
            Family::Hallway => (self.rooms * self.room_size, HALLWAY_WIDTH),
            Family::Maze => (
                self.rooms * self.room_size + self.rooms - 1,
                self.room_size,
            ),
        }
    }

    /// Domain knowledge `z`: the scenario extents as reals.
    pub fn domain_knowledge(&self) -> [f64; 2] {
        let (w, h) = self.extents();
        [w as f64, h as f64]
    }

    pub fn observation_len(&self) -> usize {
        let (w, h) = self.extents();
        match self.obs_mode {
            ObsMode::Full => CHANNELS * w * h + 4,
            ObsMode::Egocentric { window_radius } => {
                let side = 2 * window_radius + 1;
                CHANNELS * side * side + 2
            }
        }
    }

    pub fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    pub fn build_grid(&self, layout_seed: u64) -> GridMap {
        let (w, h) = self.extents();
        match self.family {
            Family::Hallway => GridMap::open(w, h),
            Family::Maze => {
                let mut rng = ChaCha8Rng::seed_from_u64(layout_seed);
                GridMap::maze(self.rooms, self.room_size, &mut rng)
            }
        }
    }
}

/// A concrete task: an environment, a layout and the episode endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub env: EnvSpec,
    pub layout_seed: u64,
    pub start: Cell,
    pub goal: Cell,
    #[serde(default = "default_facing")]
    pub start_facing: Facing,
}

fn default_facing() -> Facing {
    Facing::North
}

impl TaskSpec {
    pub fn label(&self) -> String {
        format!("{}[seed={} start={} goal={}]", self.env.name, self.layout_seed, self.start, self.goal)
    }
}

/// Agent position, heading and episode bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AgentState {
    pub pos: Cell,
    pub facing: Facing,
    pub steps_used: usize,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: AgentState,
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub steps_used: usize,
    pub reached_goal: bool,
}

/// An instantiated task: the spec plus its generated wall map.
#[derive(Clone, Debug)]
pub struct Task {
    spec: TaskSpec,
    grid: GridMap,
}

impl Task {
    /// Builds the layout and checks the endpoint invariants.
    pub fn new(spec: TaskSpec) -> Result<Self> {
        spec.env.validate()?;
        let grid = spec.env.build_grid(spec.layout_seed);
        let task = Task { spec, grid };
        let s = &task.spec;
        if s.start == s.goal {
            return Err(Error::Generation(format!("{}: start equals goal", s.label())));
        }
        for (what, c) in [("start", s.start), ("goal", s.goal)] {
            if !task.grid.is_walkable(c) {
                return Err(Error::Generation(format!("{}: {what} {c} is not walkable", s.label())));
            }
        }
        if !task.goal_reachable() {
            return Err(Error::Generation(format!("{}: goal unreachable", s.label())));
        }
        Ok(task)
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn env(&self) -> &EnvSpec {
        &self.spec.env
    }

    pub fn grid(&self) -> &GridMap {
        &self.grid
    }

    pub fn is_goal(&self, cell: Cell) -> bool {
        cell.chebyshev(self.spec.goal) <= self.spec.env.goal_radius
    }

    pub fn reset(&self) -> AgentState {
        AgentState {
            pos: self.spec.start,
            facing: self.spec.start_facing,
            steps_used: 0,
            done: false,
        }
    }

    /// Pure movement rule. Moves advance one cell at a time up to
    /// `step_scale` cells, stopping in front of walls and on entering the
    /// goal region.
    pub fn transition(&self, pos: Cell, facing: Facing, action: usize) -> (Cell, Facing) {
        let (dir, facing) = match self.spec.env.action_set {
            ActionSet::Cardinal => {
                let dir = match action {
                    0 => Facing::North,
                    1 => Facing::South,
                    2 => Facing::West,
                    _ => Facing::East,
                };
                (Some(dir), facing)
            }
            ActionSet::Rotational => match action {
                0 => (None, facing.turn_left()),
                1 => (None, facing.turn_right()),
                2 => (Some(facing), facing),
                _ => (Some(facing.turn_left().turn_left()), facing),
            },
        };
        let Some(dir) = dir else {
            return (pos, facing);
        };
        let (dx, dy) = dir.delta();
        let mut pos = pos;
        for _ in 0..self.spec.env.step_scale {
            let (nx, ny) = (pos.x as i64 + dx, pos.y as i64 + dy);
            if self.grid.blocked(nx, ny) {
                break;
            }
            pos = Cell::new(nx as usize, ny as usize);
            if self.is_goal(pos) {
                break;
            }
        }
        (pos, facing)
    }

    /// Advances the episode by one action without building an observation.
    pub fn advance(&self, state: &AgentState, action: usize) -> Result<(AgentState, f64, bool)> {
        if state.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        if action >= NUM_ACTIONS {
            return Err(Error::Usage(format!("action {action} outside 0..{NUM_ACTIONS}")));
        }
        let (pos, facing) = self.transition(state.pos, state.facing, action);
        let steps_used = state.steps_used + 1;
        let reached = self.is_goal(pos);
        let done = reached || steps_used >= self.spec.env.horizon;
        let reward = if done { -(steps_used as f64) } else { 0.0 };
        Ok((
            AgentState {
                pos,
                facing,
                steps_used,
                done,
            },
            reward,
            reached,
        ))
    }

    pub fn step(&self, state: &AgentState, action: usize) -> Result<StepOutcome> {
        let (next, reward, reached_goal) = self.advance(state, action)?;
        Ok(StepOutcome {
            observation: self.observe(&next),
            state: next,
            reward,
            done: next.done,
            steps_used: next.steps_used,
            reached_goal,
        })
    }

    pub fn observe(&self, state: &AgentState) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.env.observation_len());
        self.observe_into(state, &mut out);
        out
    }

    /// Writes the observation into `out`, replacing its contents.
    pub fn observe_into(&self, state: &AgentState, out: &mut Vec<f64>) {
        out.clear();
        let (w, h) = (self.grid.width(), self.grid.height());
        let goal = self.spec.goal;
        let push_cell = |out: &mut Vec<f64>, x: i64, y: i64| {
            let wall = self.grid.blocked(x, y);
            let here = |c: Cell| c.x as i64 == x && c.y as i64 == y;
            out.extend_from_slice(&[
                wall as u8 as f64,
                !wall as u8 as f64,
                here(state.pos) as u8 as f64,
                here(goal) as u8 as f64,
            ]);
        };
        match self.spec.env.obs_mode {
            ObsMode::Full => {
                for y in 0..h as i64 {
                    for x in 0..w as i64 {
                        push_cell(out, x, y);
                    }
                }
                out.extend_from_slice(&[
                    state.pos.x as f64 / w as f64,
                    state.pos.y as f64 / h as f64,
                    goal.x as f64 / w as f64,
                    goal.y as f64 / h as f64,
                ]);
            }
            ObsMode::Egocentric { window_radius } => {
                let r = window_radius as i64;
                let frame = match self.spec.env.action_set {
                    ActionSet::Cardinal => Facing::North,
                    ActionSet::Rotational => state.facing,
                };
                for forward in (-r..=r).rev() {
                    for lateral in -r..=r {
                        let (dx, dy) = frame.to_world(lateral, forward);
                        push_cell(out, state.pos.x as i64 + dx, state.pos.y as i64 + dy);
                    }
                }
                out.extend_from_slice(&[state.pos.x as f64 / w as f64, state.pos.y as f64 / h as f64]);
            }
        }
    }

    /// States `(cell, facing)` reachable from the start under the movement rule.
    pub fn reachable_states(&self) -> HashSet<(Cell, Facing)> {
        let start = (self.spec.start, self.spec.start_facing);
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some((pos, facing)) = queue.pop_front() {
            if self.is_goal(pos) {
                continue;
            }
            for a in 0..NUM_ACTIONS {
                let next = self.transition(pos, facing, a);
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    fn goal_reachable(&self) -> bool {
        self.reachable_states().iter().any(|(c, _)| self.is_goal(*c))
    }

    /// Shortest 4-connected path length from every cell to the goal.
    pub fn distances_to_goal(&self) -> Vec<Option<usize>> {
        self.grid.distances_from(self.spec.goal)
    }

    /// ASCII map: `#` wall, `.` free, `S` start, `G` goal; north row first.
    pub fn render_ascii(&self) -> String {
        let mut s = String::new();
        for y in (0..self.grid.height()).rev() {
            for x in 0..self.grid.width() {
                let c = Cell::new(x, y);
                s.push(if c == self.spec.goal {
                    'G'
                } else if c == self.spec.start {
                    'S'
                } else if self.grid.is_walkable(c) {
                    '.'
                } else {
                    '#'
                });
            }
            s.push('\n');
        }
        s
    }
}

/// Uniform draw from a non-empty catalog.
pub fn sample_environment<'a, R: Rng + ?Sized>(rng: &mut R, catalog: &'a [EnvSpec]) -> Result<&'a EnvSpec> {
    if catalog.is_empty() {
        return Err(Error::Config("environment catalog is empty".into()));
    }
    Ok(&catalog[rng.gen_range(0..catalog.len())])
}

/// Draws a layout and endpoints for `env`.
///
/// Hallway goals sit at the middle of the east end and starts are uniform
/// over the corridor; maze starts and goals are both uniform over walkable
/// cells. Rotational tasks also draw a uniform start heading.
pub fn sample_task<R: Rng + ?Sized>(rng: &mut R, env: &EnvSpec) -> Result<TaskSpec> {
    env.validate()?;
    for _ in 0..MAX_TASK_RETRIES {
        let layout_seed: u64 = rng.gen();
        let grid = env.build_grid(layout_seed);
        let cells = grid.walkable_cells();
        let goal = match env.family {
            Family::Hallway => Cell::new(grid.width() - 1, HALLWAY_WIDTH / 2),
            Family::Maze => cells[rng.gen_range(0..cells.len())],
        };
        let starts: Vec<Cell> = cells
            .iter()
            .copied()
            .filter(|c| c.chebyshev(goal) > env.goal_radius)
            .collect();
        if starts.is_empty() {
            continue;
        }
        let start = starts[rng.gen_range(0..starts.len())];
        let start_facing = match env.action_set {
            ActionSet::Cardinal => Facing::North,
            ActionSet::Rotational => Facing::ALL[rng.gen_range(0..4)],
        };
        let spec = TaskSpec {
            env: env.clone(),
            layout_seed,
            start,
            goal,
            start_facing,
        };
        if Task::new(spec.clone()).is_ok() {
            return Ok(spec);
        }
    }
    Err(Error::Generation(format!(
        "no reachable task for `{}` after {MAX_TASK_RETRIES} attempts",
        env.name
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_room(w: usize, action_set: ActionSet, obs_mode: ObsMode) -> EnvSpec {
        EnvSpec {
            name: "room".into(),
            family: Family::Maze,
            rooms: 1,
            room_size: w,
            obs_mode,
            action_set,
            step_scale: 1,
            horizon: 20,
            goal_radius: 0,
        }
    }

    fn task(env: EnvSpec, start: Cell, goal: Cell, facing: Facing) -> Task {
        Task::new(TaskSpec {
            env,
            layout_seed: 0,
            start,
            goal,
            start_facing: facing,
        })
        .unwrap()
    }

    #[test]
    fn up_moves_north() {
        let t = task(open_room(4, ActionSet::Cardinal, ObsMode::Full), Cell::new(1, 1), Cell::new(3, 3), Facing::North);
        let out = t.step(&t.reset(), 0).unwrap();
        assert_eq!(out.state.pos, Cell::new(1, 2));
        assert_eq!(out.reward, 0.0);
        assert!(!out.done);
    }

    #[test]
    fn reaching_goal_pays_minus_steps() {
        let t = task(open_room(8, ActionSet::Cardinal, ObsMode::Full), Cell::new(0, 0), Cell::new(7, 0), Facing::North);
        let mut s = t.reset();
        let mut last = None;
        for _ in 0..7 {
            let out = t.step(&s, 3).unwrap();
            s = out.state;
            last = Some(out);
        }
        let last = last.unwrap();
        assert!(last.done && last.reached_goal);
        assert_eq!(last.reward, -7.0);
        assert_eq!(last.steps_used, 7);
        assert!(t.step(&s, 0).is_err());
    }

    #[test]
    fn truncation_pays_minus_horizon() {
        let t = task(open_room(4, ActionSet::Cardinal, ObsMode::Full), Cell::new(0, 0), Cell::new(3, 3), Facing::North);
        let mut s = t.reset();
        let mut total = 0.0;
        while !s.done {
            let out = t.step(&s, 2).unwrap();
            total += out.reward;
            s = out.state;
        }
        assert_eq!(s.steps_used, 20);
        assert_eq!(total, -20.0);
        assert_eq!(s.pos, Cell::new(0, 0));
    }

    #[test]
    fn turn_left_from_east_faces_north() {
        let t = task(open_room(4, ActionSet::Rotational, ObsMode::Full), Cell::new(1, 1), Cell::new(3, 3), Facing::East);
        let out = t.step(&t.reset(), 0).unwrap();
        assert_eq!(out.state.facing, Facing::North);
        assert_eq!(out.state.pos, Cell::new(1, 1));
        let out = t.step(&out.state, 2).unwrap();
        assert_eq!(out.state.pos, Cell::new(1, 2));
        let out = t.step(&out.state, 3).unwrap();
        assert_eq!(out.state.pos, Cell::new(1, 1));
    }

    #[test]
    fn observation_lengths() {
        let t = task(open_room(4, ActionSet::Cardinal, ObsMode::Full), Cell::new(1, 1), Cell::new(3, 3), Facing::North);
        assert_eq!(t.observe(&t.reset()).len(), 4 * 4 * 4 + 4);
        let ego = open_room(4, ActionSet::Cardinal, ObsMode::Egocentric { window_radius: 2 });
        let t = task(ego, Cell::new(1, 1), Cell::new(3, 3), Facing::North);
        assert_eq!(t.observe(&t.reset()).len(), 4 * 25 + 2);
    }

    #[test]
    fn egocentric_pads_outside_with_wall() {
        let ego = open_room(4, ActionSet::Cardinal, ObsMode::Egocentric { window_radius: 2 });
        let t = task(ego, Cell::new(0, 2), Cell::new(3, 3), Facing::North);
        let obs = t.observe(&t.reset());
        // Window rows run forward (north) to back; columns west to east.
        for row in 0..5 {
            for col in 0..2 {
                let cell = &obs[(row * 5 + col) * 4..(row * 5 + col) * 4 + 4];
                assert_eq!(cell[0], 1.0, "row {row} col {col}");
                assert_eq!(cell[1], 0.0);
            }
        }
        let centre = &obs[12 * 4..12 * 4 + 4];
        assert_eq!(centre, &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn rotational_window_turns_with_agent() {
        // Facing east along the south wall, the wall lies to the agent's right.
        let ego = open_room(4, ActionSet::Rotational, ObsMode::Egocentric { window_radius: 1 });
        let t = task(ego, Cell::new(1, 0), Cell::new(3, 3), Facing::East);
        let obs = t.observe(&t.reset());
        let wall = |row: usize, col: usize| obs[(row * 3 + col) * 4];
        for row in 0..3 {
            assert_eq!(wall(row, 2), 1.0);
            assert_eq!(wall(row, 0), 0.0);
        }
    }

    #[test]
    fn scaled_steps_stop_at_goal_and_walls() {
        let mut env = open_room(6, ActionSet::Cardinal, ObsMode::Full);
        env.step_scale = 2;
        let t = task(env, Cell::new(0, 0), Cell::new(1, 0), Facing::North);
        assert_eq!(t.transition(Cell::new(0, 0), Facing::North, 3).0, Cell::new(1, 0));
        assert_eq!(t.transition(Cell::new(4, 0), Facing::North, 3).0, Cell::new(5, 0));
        assert_eq!(t.transition(Cell::new(2, 0), Facing::North, 3).0, Cell::new(4, 0));
    }

    #[test]
    fn invalid_endpoints_rejected() {
        let env = open_room(4, ActionSet::Cardinal, ObsMode::Full);
        let spec = |start, goal| TaskSpec {
            env: env.clone(),
            layout_seed: 0,
            start,
            goal,
            start_facing: Facing::North,
        };
        assert!(Task::new(spec(Cell::new(1, 1), Cell::new(1, 1))).is_err());
        assert!(Task::new(spec(Cell::new(1, 1), Cell::new(9, 1))).is_err());
    }

    #[test]
    fn empty_catalog_is_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_environment(&mut rng, &[]), Err(Error::Config(_))));
    }
}
