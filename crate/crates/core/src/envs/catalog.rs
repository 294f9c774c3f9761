use super::{ActionSet, EnvSpec, Family, ObsMode};

const HALLWAY_HORIZON: usize = 80;
const MAZE_HORIZON: usize = 150;
const WINDOW_RADIUS: usize = 2;

fn env(
    name: &str,
    family: Family,
    rooms: usize,
    room_size: usize,
    obs_mode: ObsMode,
    action_set: ActionSet,
    step_scale: usize,
    horizon: usize,
) -> EnvSpec {
    EnvSpec {
        name: name.to_string(),
        family,
        rooms,
        room_size,
        obs_mode,
        action_set,
        step_scale,
        horizon,
        goal_radius: 0,
    }
}

const EGO: ObsMode = ObsMode::Egocentric {
    window_radius: WINDOW_RADIUS,
};

/// The hallway pair: one fully observed, one egocentric. Both move in
/// cardinal directions along a 10-cell corridor.
pub fn hallway_catalog() -> Vec<EnvSpec> {
    vec![
        env("hallway-full", Family::Hallway, 1, 10, ObsMode::Full, ActionSet::Cardinal, 1, HALLWAY_HORIZON),
        env("hallway-ego", Family::Hallway, 1, 10, EGO, ActionSet::Cardinal, 1, HALLWAY_HORIZON),
    ]
}

/// The maze triple. Room sides are twice the nominal room size, and the
/// three-room maze moves two cells per step.
pub fn maze_catalog() -> Vec<EnvSpec> {
    vec![
        env("2rs3", Family::Maze, 2, 6, ObsMode::Full, ActionSet::Cardinal, 1, MAZE_HORIZON),
        env("2rs4", Family::Maze, 2, 8, EGO, ActionSet::Rotational, 1, MAZE_HORIZON),
        env("3rs3", Family::Maze, 3, 6, ObsMode::Full, ActionSet::Cardinal, 2, MAZE_HORIZON),
    ]
}

/// Hallway pair followed by the maze triple.
pub fn desk_catalog() -> Vec<EnvSpec> {
    let mut all = hallway_catalog();
    all.extend(maze_catalog());
    all
}

/// Transfer target never seen in training: a longer corridor, egocentric
/// view that turns with the agent, and turn/move actions.
pub fn heldout_hallway() -> EnvSpec {
    env("hallway-heldout", Family::Hallway, 1, 12, EGO, ActionSet::Rotational, 1, HALLWAY_HORIZON)
}

/// Looks up `hallway`, `maze`, `desk`, or a single environment name.
pub fn catalog_by_name(name: &str) -> Option<Vec<EnvSpec>> {
    match name {
        "hallway" => Some(hallway_catalog()),
        "maze" => Some(maze_catalog()),
        "desk" => Some(desk_catalog()),
        "hallway-heldout" => Some(vec![heldout_hallway()]),
        other => desk_catalog().into_iter().find(|e| e.name == other).map(|e| vec![e]),
    }
}
