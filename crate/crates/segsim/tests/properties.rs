//! Property tests over the environment, learner plumbing, and metrics.

use proptest::prelude::*;

use segsim::env::{
    compute_reward, neighbor_counts, observe, resolve_action, step_iteration, Action,
    MoveOutcome, NeighborCounts, RewardParams, UniformRandomPolicy,
};
use segsim::grid::{init_grid, AgentKind, EnvConfig, Grid, Pos, ToleranceMode, Topology};
use segsim::learner::EpsilonSchedule;
use segsim::metrics::discounted_return;
use segsim::replay::{ReplayBuffer, Transition};
use segsim::rng::rng_from_seed;

fn small_env(width: u32, height: u32, occupancy: f64) -> EnvConfig {
    EnvConfig {
        width,
        height,
        occupancy,
        window: 3,
        topology: Topology::Torus,
        tolerance_mode: ToleranceMode::UniformRandom,
    }
}

proptest! {
    /// Structural invariants survive arbitrary action sequences applied to
    /// arbitrary agents: the cell map stays a bijection, nobody leaves the
    /// lattice, and the only population changes are explicit kills.
    #[test]
    fn random_actions_preserve_grid_invariants(
        seed in 0u64..1000,
        actions in proptest::collection::vec((0usize..64, 0usize..5), 1..200),
    ) {
        let config = small_env(8, 6, 0.5);
        let mut rng = rng_from_seed(seed);
        let mut grid = init_grid(&config, &mut rng).unwrap();
        for (pick, action_idx) in actions {
            let ids: Vec<_> = grid.agent_ids().collect();
            let id = ids[pick % ids.len()];
            let action = Action::from_index(action_idx).unwrap();
            let before = grid.agent_count();
            let outcome = resolve_action(&mut grid, id, action).unwrap();
            grid.check_invariants().map_err(TestCaseError::fail)?;
            let after = grid.agent_count();
            match outcome {
                MoveOutcome::Killed(victim) => {
                    prop_assert_eq!(after, before - 1);
                    prop_assert!(!grid.contains(victim));
                }
                _ => prop_assert_eq!(after, before),
            }
        }
    }

    /// Full iterations conserve per-type populations at the boundary and
    /// keep every structural invariant.
    #[test]
    fn iterations_conserve_population(seed in 0u64..200) {
        let config = small_env(10, 10, 0.4);
        let mut rng = rng_from_seed(seed);
        let mut grid = init_grid(&config, &mut rng).unwrap();
        let pop_a = grid.count_kind(AgentKind::A);
        let pop_b = grid.count_kind(AgentKind::B);
        for _ in 0..30 {
            step_iteration(
                &mut grid,
                &mut UniformRandomPolicy,
                &mut UniformRandomPolicy,
                &RewardParams::default(),
                &config,
                &mut rng,
            )
            .unwrap();
            grid.check_invariants().map_err(TestCaseError::fail)?;
            prop_assert_eq!(grid.count_kind(AgentKind::A), pop_a);
            prop_assert_eq!(grid.count_kind(AgentKind::B), pop_b);
        }
    }

    /// Observations stay in the {-1, 0, +1} alphabet with the observer at
    /// the center, and observing is a pure read.
    #[test]
    fn observation_encoding_and_purity(seed in 0u64..500, window in prop_oneof![Just(3u32), Just(5u32)]) {
        let config = EnvConfig { window, ..small_env(9, 9, 0.5) };
        let mut rng = rng_from_seed(seed);
        let grid = init_grid(&config, &mut rng).unwrap();
        for id in grid.agent_ids() {
            let obs = observe(&grid, id, window).unwrap();
            prop_assert_eq!(obs.window.len(), (window * window) as usize);
            prop_assert!(obs.window.iter().all(|v| [-1, 0, 1].contains(v)));
            prop_assert_eq!(obs.window[(window * window / 2) as usize], 1);
            prop_assert!((0.0..=1.0).contains(&obs.age_norm));
            prop_assert_eq!(&observe(&grid, id, window).unwrap(), &obs);

            let counts = neighbor_counts(&obs);
            prop_assert!(counts.same + counts.other < window * window);
        }
    }

    /// Moving straight up for `height` steps on an otherwise empty torus
    /// returns to the start, and coordinates stay in range throughout.
    #[test]
    fn torus_vertical_walk_returns_home(x in 0u32..50, y in 0u32..50) {
        let mut grid = Grid::empty(50, 50, Topology::Torus).unwrap();
        let id = grid.place_agent(AgentKind::A, Pos::new(x, y), 0.0, 0).unwrap();
        for _ in 0..50 {
            resolve_action(&mut grid, id, Action::Up).unwrap();
            let pos = grid.agent(id).unwrap().pos;
            prop_assert!(pos.x < 50 && pos.y < 50);
        }
        prop_assert_eq!(grid.agent(id).unwrap().pos, Pos::new(x, y));
    }

    /// The reward total is the exact component sum for any parameter mix.
    #[test]
    fn reward_total_is_exact_component_sum(
        same in 0u32..25,
        other in 0u32..25,
        alpha_idx in 0usize..3,
        outcome_idx in 0usize..4,
        cost in 0.0f64..2.0,
        cost_on_stay in any::<bool>(),
        died in any::<bool>(),
    ) {
        let outcome = match outcome_idx {
            0 => MoveOutcome::Stayed,
            1 => MoveOutcome::Moved,
            2 => MoveOutcome::Blocked,
            _ => MoveOutcome::Killed(segsim::grid::AgentId(0)),
        };
        let params = RewardParams { move_cost: cost, cost_on_stay, ..RewardParams::default() };
        let alpha = [0.0, 0.5, 1.0][alpha_idx];
        let r = compute_reward(outcome, NeighborCounts { same, other }, alpha, &params, died);
        prop_assert_eq!(r.total, r.tolerance + r.interdependence + r.survival + r.moving);
    }

    /// The exploration schedule is non-increasing everywhere.
    #[test]
    fn epsilon_is_non_increasing(a in 0u64..200_000, b in 0u64..200_000) {
        let schedule = EpsilonSchedule::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(schedule.value(lo) >= schedule.value(hi));
    }

    /// Buffer contents after `p` pushes equal the last `min(p, capacity)`
    /// transitions in order.
    #[test]
    fn buffer_holds_the_most_recent_window(capacity in 1usize..20, pushes in 0usize..60) {
        let mut buffer = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buffer.push(Transition::terminal(vec![i as f64], 0, i as f64));
        }
        let got: Vec<f64> = buffer.iter_fifo().map(|t| t.reward).collect();
        let start = pushes.saturating_sub(capacity);
        let expect: Vec<f64> = (start..pushes).map(|i| i as f64).collect();
        prop_assert_eq!(got, expect);
    }

    /// Horner evaluation satisfies the return recursion exactly.
    #[test]
    fn discounted_return_recursion_holds(
        rewards in proptest::collection::vec(-5.0f64..5.0, 1..30),
        gamma in 0.0f64..1.0,
    ) {
        let whole = discounted_return(&rewards, gamma);
        let tail = discounted_return(&rewards[1..], gamma);
        prop_assert_eq!(whole, rewards[0] + gamma * tail);
    }

    /// The per-agent same-type share and its mixed complement sum to one.
    #[test]
    fn same_type_share_complement_sums_to_one(seed in 0u64..100) {
        let config = small_env(9, 9, 0.6);
        let mut rng = rng_from_seed(seed);
        let grid = init_grid(&config, &mut rng).unwrap();
        for agent in grid.agents() {
            let mut same = 0u32;
            let mut occupied = 0u32;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let pos = grid.offset(agent.pos, dx, dy).unwrap();
                    if let Some(id) = grid.cell(pos) {
                        occupied += 1;
                        if grid.agent(id).unwrap().kind == agent.kind {
                            same += 1;
                        }
                    }
                }
            }
            if occupied > 0 {
                let share = same as f64 / occupied as f64;
                let mixed = (occupied - same) as f64 / occupied as f64;
                prop_assert!((share + mixed - 1.0).abs() < 1e-15);
            }
        }
    }
}
