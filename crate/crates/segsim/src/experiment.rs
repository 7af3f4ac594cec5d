//! Full runs and sweeps: build a world and two learners from a seed, train,
//! evaluate greedily, record metrics, and persist everything.

use std::cell::Cell;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::env::{
    step_iteration, ActionSelector, Action, Observation, RewardParams, StepEvent,
    UniformRandomPolicy,
};
use crate::grid::{AgentKind, EnvConfig, EnvError, Grid};
use crate::learner::{select_action, EpsilonSchedule, Learner, TransitionAssembler};
use crate::metrics::{interface_density, same_type_fraction_with, MetricsRecord};
use crate::nn::{save_checkpoint, QNetwork, QlearnError};
use crate::rng::{rng_from_seed, split_seed, SimRng};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Qlearn(#[from] QlearnError),
    #[error("training diverged at iteration {iteration} ({side})")]
    Diverged { iteration: u64, side: char },
    #[error("failed to write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Everything a run produces, in memory. Persistence is separate; see
/// [`write_outputs`].
#[derive(Debug)]
pub struct RunResult {
    /// One record per iteration, training phase first.
    pub metrics: Vec<MetricsRecord>,
    /// World state after the last iteration.
    pub final_grid: Grid,
    /// Periodic snapshots as (iteration, text form).
    pub snapshots: Vec<(u64, String)>,
    pub net_a: QNetwork,
    pub net_b: QNetwork,
    pub train_steps_a: u64,
    pub train_steps_b: u64,
    pub seed: u64,
    pub duration: Duration,
}

/// Epsilon-greedy policy over a Q-network. The step counter is shared by
/// both types within a run and advances once per action selection during
/// training.
struct QPolicy<'a> {
    net: &'a QNetwork,
    schedule: &'a EpsilonSchedule,
    counter: &'a Cell<u64>,
}

impl ActionSelector for QPolicy<'_> {
    fn select(&mut self, obs: &Observation, rng: &mut SimRng) -> Action {
        let step = self.counter.get();
        self.counter.set(step + 1);
        let eps = self.schedule.value(step);
        let q = self.net.forward(&obs.to_state_vector()).expect("observation matches input layer");
        // The run loop verifies the networks stay finite, so q has no NaN.
        select_action(&q, eps, rng).expect("finite q-values")
    }
}

/// Greedy policy used during evaluation: exploration forced to zero.
struct GreedyPolicy<'a> {
    net: &'a QNetwork,
}

impl ActionSelector for GreedyPolicy<'_> {
    fn select(&mut self, obs: &Observation, rng: &mut SimRng) -> Action {
        let q = self.net.forward(&obs.to_state_vector()).expect("observation matches input layer");
        select_action(&q, 0.0, rng).expect("finite q-values")
    }
}

fn record_metrics(
    iteration: u64,
    grid: &Grid,
    report_rewards: (f64, f64),
    deaths: usize,
    kills: usize,
    epsilon: f64,
    config: &ExperimentConfig,
) -> MetricsRecord {
    MetricsRecord {
        iteration,
        same_type_fraction: same_type_fraction_with(grid, config.adjacency),
        interface_density: interface_density(grid),
        mean_reward_a: report_rewards.0,
        mean_reward_b: report_rewards.1,
        deaths: deaths as u64,
        kills: kills as u64,
        epsilon,
    }
}

/// Per-capita reward earned this iteration by each type: acting rewards
/// plus victim penalties, divided by the (constant) per-type population.
fn mean_rewards(events: &[StepEvent], pop_a: usize, pop_b: usize) -> (f64, f64) {
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    for event in events {
        let (kind, total) = match event {
            StepEvent::Acted(step) => (step.kind, step.reward.total),
            StepEvent::VictimPenalty { kind, penalty, .. } => (*kind, penalty.total),
        };
        match kind {
            AgentKind::A => sum_a += total,
            AgentKind::B => sum_b += total,
        }
    }
    (
        if pop_a > 0 { sum_a / pop_a as f64 } else { 0.0 },
        if pop_b > 0 { sum_b / pop_b as f64 } else { 0.0 },
    )
}

/// Run one simulation: a training phase with epsilon-greedy actions and one
/// training step per type per iteration once the buffers are warm, then a
/// greedy evaluation phase with learning frozen. Fully determined by the
/// config and its seed.
pub fn run_simulation(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    config.validate()?;
    let started = Instant::now();
    let seed = config.seed.expect("validated");
    let mut rng = rng_from_seed(seed);

    let env_config: EnvConfig = config.env_config();
    let params: RewardParams = config.reward_params();
    let mut grid = crate::grid::init_grid(&env_config, &mut rng)?;
    let pop_a = grid.count_kind(AgentKind::A);
    let pop_b = grid.count_kind(AgentKind::B);

    let sizes = [crate::env::state_dim(config.window), config.hidden1, config.hidden2, 5];
    let mut learner_a = Learner::new(
        &sizes,
        config.lr,
        config.buffer,
        config.batch,
        config.gamma,
        config.sync_interval,
        &mut rng,
    )?;
    let mut learner_b = Learner::new(
        &sizes,
        config.lr,
        config.buffer,
        config.batch,
        config.gamma,
        config.sync_interval,
        &mut rng,
    )?;

    let schedule = EpsilonSchedule {
        start: config.eps_start,
        end: config.eps_end,
        decay_steps: config.eps_decay,
    };
    let action_steps = Cell::new(0u64);
    let mut assembler = TransitionAssembler::new();

    let mut metrics = Vec::with_capacity((config.train_iterations + config.eval_iterations) as usize);
    let mut snapshots = Vec::new();
    let snap = |iteration: u64, grid: &Grid, snapshots: &mut Vec<(u64, String)>| {
        if config.snapshot_every > 0 && iteration % config.snapshot_every == 0 {
            snapshots.push((iteration, grid.to_text()));
        }
    };

    for iteration in 0..config.train_iterations {
        let eps_now = schedule.value(action_steps.get());
        let report = {
            let mut policy_a =
                QPolicy { net: &learner_a.net, schedule: &schedule, counter: &action_steps };
            let mut policy_b =
                QPolicy { net: &learner_b.net, schedule: &schedule, counter: &action_steps };
            step_iteration(&mut grid, &mut policy_a, &mut policy_b, &params, &env_config, &mut rng)?
        };

        for (kind, transition) in assembler.consume(&report) {
            match kind {
                AgentKind::A => learner_a.push(transition),
                AgentKind::B => learner_b.push(transition),
            }
        }
        learner_a.train_once(&mut rng)?;
        learner_b.train_once(&mut rng)?;
        if !learner_a.net.all_finite() {
            return Err(RunError::Diverged { iteration, side: 'A' });
        }
        if !learner_b.net.all_finite() {
            return Err(RunError::Diverged { iteration, side: 'B' });
        }

        let rewards = mean_rewards(&report.events, pop_a, pop_b);
        metrics.push(record_metrics(iteration, &grid, rewards, report.deaths, report.kills, eps_now, config));
        snap(iteration, &grid, &mut snapshots);
    }

    // Evaluation: exploration off, no pushes, no updates.
    assembler.clear();
    for offset in 0..config.eval_iterations {
        let iteration = config.train_iterations + offset;
        let report = {
            let mut policy_a = GreedyPolicy { net: &learner_a.net };
            let mut policy_b = GreedyPolicy { net: &learner_b.net };
            step_iteration(&mut grid, &mut policy_a, &mut policy_b, &params, &env_config, &mut rng)?
        };
        let rewards = mean_rewards(&report.events, pop_a, pop_b);
        metrics.push(record_metrics(iteration, &grid, rewards, report.deaths, report.kills, 0.0, config));
        snap(iteration, &grid, &mut snapshots);
    }

    Ok(RunResult {
        metrics,
        final_grid: grid,
        snapshots,
        train_steps_a: learner_a.train_steps(),
        train_steps_b: learner_b.train_steps(),
        net_a: learner_a.net,
        net_b: learner_b.net,
        seed,
        duration: started.elapsed(),
    })
}

/// Render the metrics series as CSV (LF line endings).
pub fn metrics_csv(metrics: &[MetricsRecord]) -> String {
    let mut out = String::from(
        "iteration,same_type_fraction,interface_density,mean_reward_a,mean_reward_b,deaths,kills,epsilon\n",
    );
    for m in metrics {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.iteration,
            m.same_type_fraction,
            m.interface_density,
            m.mean_reward_a,
            m.mean_reward_b,
            m.deaths,
            m.kills,
            m.epsilon
        );
    }
    out
}

/// Quote a CSV field if it contains a comma, quote or newline.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Persist a run under `config.out_dir`:
///
/// * `metrics.csv` — the per-iteration series
/// * `snapshot_NNNNNN.txt` — periodic grids in text form
/// * `snapshot_final.txt`, `agents_final.csv` — the final world
/// * `qnet_a.bin`, `qnet_b.bin` — network checkpoints
/// * `config.echo` — the fully resolved configuration
/// * `run.log` — wall-clock timing (the only non-deterministic file)
pub fn write_outputs(result: &RunResult, config: &ExperimentConfig) -> Result<(), RunError> {
    let dir = Path::new(&config.out_dir);
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let write = |name: &str, contents: &str| -> Result<(), RunError> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(io_err(&path))
    };

    write("metrics.csv", &metrics_csv(&result.metrics))?;
    for (iteration, text) in &result.snapshots {
        write(&format!("snapshot_{iteration:06}.txt"), text)?;
    }
    write("snapshot_final.txt", &result.final_grid.to_text())?;
    write("agents_final.csv", &result.final_grid.to_agent_csv())?;
    write("config.echo", &config.echo())?;
    write("run.log", &format!("duration_seconds={}\n", result.duration.as_secs_f64()))?;

    let path_a = dir.join("qnet_a.bin");
    save_checkpoint(&result.net_a, result.seed, result.train_steps_a, &path_a)?;
    let path_b = dir.join("qnet_b.bin");
    save_checkpoint(&result.net_b, result.seed, result.train_steps_b, &path_b)?;
    Ok(())
}

/// One sweep cell's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub cost: f64,
    pub seed_index: u64,
    pub derived_seed: u64,
    /// Final same-type fraction and interface density, or the failure text.
    pub outcome: Result<(f64, f64), String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    /// Summary CSV: one row per cell in sweep order; failed cells keep
    /// empty metric fields and carry the error in `status`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("alpha,cost,seed,final_same_type_fraction,final_interface_density,status\n");
        for row in &self.rows {
            match &row.outcome {
                Ok((stf, interface)) => {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},ok",
                        row.alpha, row.cost, row.seed_index, stf, interface
                    );
                }
                Err(message) => {
                    let _ = writeln!(
                        out,
                        "{},{},{},,,{}",
                        row.alpha,
                        row.cost,
                        row.seed_index,
                        csv_field(&format!("failed: {message}"))
                    );
                }
            }
        }
        out
    }
}

/// Resolve one sweep cell's config from the base: fixed tolerance `alpha`,
/// moving expense `cost`, a seed derived from the base seed and the cell
/// indices, and a cell subdirectory under the base output directory.
pub fn cell_config(
    base: &ExperimentConfig,
    alpha: f64,
    alpha_idx: usize,
    cost: f64,
    cost_idx: usize,
    seed_idx: u64,
) -> ExperimentConfig {
    let mut config = base.clone();
    config.tolerance_mode = crate::config::ToleranceModeKey::Fixed;
    config.alpha = alpha;
    config.move_cost = cost;
    config.seed = Some(split_seed(
        base.seed.unwrap_or(0),
        alpha_idx as u64,
        cost_idx as u64,
        seed_idx,
    ));
    config.out_dir = format!("{}/alpha{}_cost{}_seed{}", base.out_dir, alpha, cost, seed_idx);
    config
}

/// Run the full cross of `alphas` x `costs` x `seed_indices`, each cell an
/// independent simulation written to its own subdirectory. Cells run
/// concurrently (bounded by the available parallelism); a failing cell is
/// recorded in the summary without stopping the others. Writes
/// `summary.csv` under the base output directory.
pub fn run_sweep(
    base: &ExperimentConfig,
    alphas: &[f64],
    costs: &[f64],
    seed_indices: &[u64],
) -> Result<SweepSummary, RunError> {
    if base.seed.is_none() {
        return Err(RunError::Config(ConfigError::MissingSeed));
    }
    let mut cells: Vec<ExperimentConfig> = Vec::new();
    let mut labels: Vec<(f64, f64, u64, u64)> = Vec::new();
    for (ai, &alpha) in alphas.iter().enumerate() {
        for (ci, &cost) in costs.iter().enumerate() {
            for &si in seed_indices {
                let config = cell_config(base, alpha, ai, cost, ci, si);
                labels.push((alpha, cost, si, config.seed.unwrap()));
                cells.push(config);
            }
        }
    }

    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut outcomes: Vec<Option<Result<(f64, f64), String>>> = (0..cells.len()).map(|_| None).collect();
    for chunk_start in (0..cells.len()).step_by(workers.max(1)) {
        let chunk_end = (chunk_start + workers).min(cells.len());
        let results: Vec<Result<(f64, f64), String>> = std::thread::scope(|scope| {
            let handles: Vec<_> = cells[chunk_start..chunk_end]
                .iter()
                .map(|config| {
                    scope.spawn(move || {
                        let result = run_simulation(config).map_err(|e| e.to_string())?;
                        write_outputs(&result, config).map_err(|e| e.to_string())?;
                        let last = result
                            .metrics
                            .last()
                            .ok_or_else(|| "run produced no metrics".to_string())?;
                        Ok((last.same_type_fraction, last.interface_density))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        for (offset, result) in results.into_iter().enumerate() {
            outcomes[chunk_start + offset] = Some(result);
        }
    }

    let rows = labels
        .into_iter()
        .zip(outcomes)
        .map(|((alpha, cost, seed_index, derived_seed), outcome)| SweepRow {
            alpha,
            cost,
            seed_index,
            derived_seed,
            outcome: outcome.expect("every cell ran"),
        })
        .collect();
    let summary = SweepSummary { rows };

    let dir = Path::new(&base.out_dir);
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("summary.csv");
    fs::write(&path, summary.to_csv()).map_err(io_err(&path))?;
    Ok(summary)
}

/// A random-policy rollout used by tests and diagnostics: no learning, just
/// environment dynamics under uniformly random actions.
pub fn random_rollout(
    config: &EnvConfig,
    params: &RewardParams,
    iterations: u64,
    rng: &mut SimRng,
) -> Result<Grid, RunError> {
    let mut grid = crate::grid::init_grid(config, rng)?;
    for _ in 0..iterations {
        step_iteration(
            &mut grid,
            &mut UniformRandomPolicy,
            &mut UniformRandomPolicy,
            params,
            config,
            rng,
        )?;
    }
    Ok(grid)
}
