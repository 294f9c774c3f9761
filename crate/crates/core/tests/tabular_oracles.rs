use hmrl::analysis::{potential_table, to_tabular, value_iteration, verify_consistency, TabularMdp};
use hmrl::envs::{desk_catalog, sample_task, ActionSet, Cell, EnvSpec, Facing, Family, ObsMode, Task, TaskSpec};
use hmrl::metastate::{EmbeddingMode, EmbeddingSpec};
use hmrl::policy::{policy_spec, rollout, ActionSelection};
use hmrl::shaping::{PotentialNet, Shaping};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn room(side: usize, horizon: usize) -> EnvSpec {
    EnvSpec {
        name: format!("room{side}"),
        family: Family::Maze,
        rooms: 1,
        room_size: side,
        obs_mode: ObsMode::Full,
        action_set: ActionSet::Cardinal,
        step_scale: 1,
        horizon,
        goal_radius: 0,
    }
}

fn room_task(side: usize, horizon: usize, start: Cell, goal: Cell) -> Task {
    Task::new(TaskSpec {
        env: room(side, horizon),
        layout_seed: 0,
        start,
        goal,
        start_facing: Facing::North,
    })
    .unwrap()
}

#[test]
fn tabular_successors_match_the_environment() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for env in desk_catalog() {
        for _ in 0..3 {
            let task = Task::new(sample_task(&mut rng, &env).unwrap()).unwrap();
            let mdp = to_tabular(&task, 0.99).unwrap();
            let facings = match env.action_set {
                ActionSet::Cardinal => 1,
                ActionSet::Rotational => 4,
            };
            assert_eq!(mdp.len(), facings * task.grid().walkable_cells().len());
            for (s, &(cell, facing)) in mdp.states.iter().enumerate() {
                assert_eq!(mdp.terminal[s], task.is_goal(cell));
                if mdp.terminal[s] {
                    continue;
                }
                for a in 0..4 {
                    let (c, f) = task.transition(cell, facing, a);
                    let f = if facings == 1 { Facing::North } else { f };
                    assert_eq!(mdp.next[s][a], mdp.index_of(c, f).unwrap(), "{} {cell:?} {facing:?} a={a}", env.name);
                    assert_eq!(mdp.reward[s][a], -1.0);
                }
            }
        }
    }
}

#[test]
fn uniform_policy_steps_match_a_linear_solve() {
    let (start, goal) = (Cell::new(0, 0), Cell::new(3, 3));
    let task = room_task(4, 10_000, start, goal);
    let mdp = to_tabular(&task, 1.0).unwrap();

    // Expected steps to the goal: E[s] = 1 + mean_a E[next(s, a)].
    let mut e = vec![0.0; mdp.len()];
    for _ in 0..200_000 {
        let mut delta: f64 = 0.0;
        for s in 0..mdp.len() {
            if mdp.terminal[s] {
                continue;
            }
            let v = 1.0 + mdp.next[s].iter().map(|&t| e[t]).sum::<f64>() / 4.0;
            delta = delta.max((v - e[s]).abs());
            e[s] = v;
        }
        if delta < 1e-12 {
            break;
        }
    }
    let exact = e[mdp.index_of(start, Facing::North).unwrap()];

    // All-zero parameters give uniform action probabilities.
    let spec = policy_spec(task.env().observation_len(), &[4]);
    let theta = spec.zeros();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let runs = 4000;
    let samples: Vec<f64> = (0..runs)
        .map(|_| {
            let t = rollout(&spec, &theta, &task, ActionSelection::Sample, &mut rng).unwrap();
            assert!(t.reached_goal);
            t.steps.len() as f64
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / runs as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    let stderr = (var / runs as f64).sqrt();
    assert!((mean - exact).abs() < 4.0 * stderr, "monte carlo {mean} vs exact {exact} (se {stderr})");
}

#[test]
fn corridor_values_are_geometric_sums() {
    // Five cells in a row, goal at the east end; actions west and east.
    let n: usize = 5;
    let gamma = 0.9;
    let next: Vec<Vec<usize>> = (0..n)
        .map(|s| if s == n - 1 { vec![s, s] } else { vec![s.saturating_sub(1), s + 1] })
        .collect();
    let reward: Vec<Vec<f64>> = (0..n).map(|s| if s == n - 1 { vec![0.0; 2] } else { vec![-1.0; 2] }).collect();
    let terminal: Vec<bool> = (0..n).map(|s| s == n - 1).collect();
    let mdp = TabularMdp::from_tables(next, reward, terminal, gamma).unwrap();
    let sol = value_iteration(&mdp, 1e-13).unwrap();
    for s in 0..n - 1 {
        let d = (n - 1 - s) as i32;
        let expected = -(1.0 - gamma.powi(d)) / (1.0 - gamma);
        assert!((sol.values[s] - expected).abs() < 1e-10, "state {s}: {} vs {expected}", sol.values[s]);
        assert_eq!(sol.policy.actions[s], vec![1]);
    }
    assert_eq!(sol.values[n - 1], 0.0);
}

#[test]
fn random_potentials_keep_optimal_actions_in_a_six_by_six_room() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let modes = [
        EmbeddingMode::ConcatFixed,
        EmbeddingMode::AffineByExtent,
        EmbeddingMode::LearnedAffine,
        EmbeddingMode::RawState,
    ];
    let task = room_task(6, 150, Cell::new(0, 5), Cell::new(4, 1));
    let mdp = to_tabular(&task, 0.99).unwrap();
    for (i, mode) in modes.iter().cycle().take(12).enumerate() {
        let shaping = Shaping::new(EmbeddingSpec::new(*mode), PotentialNet::init(&[32, 32], &mut rng));
        let phi = potential_table(&mdp, &task, &shaping).unwrap();
        let report = verify_consistency(&mdp, &phi).unwrap();
        assert!(report.passed, "net {i}: {}", report.to_text());
        assert_eq!(report.states, 36);
    }
}

#[test]
fn random_potentials_keep_optimal_actions_in_rotational_mazes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let env = desk_catalog().into_iter().find(|e| e.name == "2rs4").unwrap();
    for _ in 0..3 {
        let task = Task::new(sample_task(&mut rng, &env).unwrap()).unwrap();
        let mdp = to_tabular(&task, 0.99).unwrap();
        let shaping = Shaping::new(
            EmbeddingSpec::new(EmbeddingMode::AffineByExtent),
            PotentialNet::init(&[32, 32], &mut rng),
        );
        let phi = potential_table(&mdp, &task, &shaping).unwrap();
        let report = verify_consistency(&mdp, &phi).unwrap();
        assert!(report.passed, "{}", report.to_text());
    }
}
