//! Environment dynamics: observation windows, action resolution, the reward
//! function, and the per-iteration update loop with aging and respawn.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::grid::{Agent, AgentId, AgentKind, EnvConfig, EnvError, Grid, MAX_AGE};
use crate::rng::SimRng;

/// What an agent sees: the `n x n` window around it, encoded relative to its
/// own type (+1 same, 0 empty, -1 other), plus its normalized age.
///
/// The window is stored row-major from the top-left corner of the
/// neighborhood, i.e. rows run from `y - r` to `y + r` and columns from
/// `x - r` to `x + r` where `r = (n - 1) / 2`. The observer itself sits at
/// the center and always reads +1.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub window: Vec<i8>,
    /// `age / MAX_AGE`, in `[0, 1]`.
    pub age_norm: f64,
}

impl Observation {
    /// Window side length.
    pub fn side(&self) -> u32 {
        (self.window.len() as f64).sqrt() as u32
    }

    /// Flatten into the learner's input layout: window entries in storage
    /// order followed by the normalized age. Length is `n^2 + 1`.
    pub fn to_state_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.window.len() + 1);
        v.extend(self.window.iter().map(|&c| c as f64));
        v.push(self.age_norm);
        v
    }
}

/// Learner input dimension for a given window side length.
pub fn state_dim(window: u32) -> usize {
    (window as usize) * (window as usize) + 1
}

/// Same-type and other-type occupants of a window, excluding the observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborCounts {
    pub same: u32,
    pub other: u32,
}

/// The five things an agent can do each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    /// Stable index used for Q-value vectors and stored transitions.
    pub fn index(self) -> usize {
        match self {
            Action::Up => 0,
            Action::Down => 1,
            Action::Left => 2,
            Action::Right => 3,
            Action::Stay => 4,
        }
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    /// Displacement in (dx, dy); `y` grows downward so `Up` is `dy = -1`.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }

    pub fn is_move(self) -> bool {
        self != Action::Stay
    }
}

/// How an action played out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveOutcome {
    /// Chose `Stay`.
    Stayed,
    /// Entered an empty cell.
    Moved,
    /// Target held a same-type agent (or lay off a clamped grid); position
    /// unchanged.
    Blocked,
    /// Target held an other-type agent: the victim was removed and the
    /// mover took its cell.
    Killed(AgentId),
}

/// Read the window around an agent. Pure: identical inputs give identical
/// observations.
pub fn observe(grid: &Grid, agent_id: AgentId, window: u32) -> Result<Observation, EnvError> {
    if window < 3 || window % 2 == 0 {
        return Err(EnvError::BadWindow(window));
    }
    let agent = grid.agent(agent_id).ok_or(EnvError::UnknownAgent(agent_id.0))?;
    let r = (window / 2) as i64;
    let mut cells = Vec::with_capacity((window * window) as usize);
    for dy in -r..=r {
        for dx in -r..=r {
            let value = match grid.offset(agent.pos, dx, dy) {
                None => 0, // off a clamped grid reads as empty
                Some(pos) => match grid.cell(pos) {
                    None => 0,
                    Some(id) => grid.agent(id).expect("cell points at live agent").kind.relative_to(agent.kind),
                },
            };
            cells.push(value);
        }
    }
    Ok(Observation {
        window: cells,
        age_norm: agent.age as f64 / MAX_AGE as f64,
    })
}

/// Count window occupants relative to the observer. The center +1 (the
/// observer itself) is excluded from the same-type count.
pub fn neighbor_counts(obs: &Observation) -> NeighborCounts {
    let same = obs.window.iter().filter(|&&c| c == 1).count() as u32 - 1;
    let other = obs.window.iter().filter(|&&c| c == -1).count() as u32;
    NeighborCounts { same, other }
}

/// Apply an action. All actions are total: every case maps to an outcome
/// and the grid invariants hold afterwards.
pub fn resolve_action(grid: &mut Grid, agent_id: AgentId, action: Action) -> Result<MoveOutcome, EnvError> {
    let agent = grid.agent(agent_id).ok_or(EnvError::UnknownAgent(agent_id.0))?;
    if action == Action::Stay {
        return Ok(MoveOutcome::Stayed);
    }
    let (dx, dy) = action.delta();
    let kind = agent.kind;
    let target = match grid.offset(agent.pos, dx, dy) {
        None => return Ok(MoveOutcome::Blocked),
        Some(pos) => pos,
    };
    match grid.cell(target) {
        None => {
            grid.move_agent(agent_id, target)?;
            Ok(MoveOutcome::Moved)
        }
        Some(occupant) => {
            let occupant_kind = grid.agent(occupant).expect("cell points at live agent").kind;
            if occupant_kind == kind {
                Ok(MoveOutcome::Blocked)
            } else {
                grid.remove_agent(occupant)?;
                grid.move_agent(agent_id, target)?;
                Ok(MoveOutcome::Killed(occupant))
            }
        }
    }
}

/// Scalar weights of the reward function.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams {
    /// Expense charged on movement actions (including blocked attempts).
    pub move_cost: f64,
    /// Penalty for choosing `Stay`.
    pub stay_penalty: f64,
    /// Bonus for surviving the iteration.
    pub survival_bonus: f64,
    /// Penalty for dying (age-out or killed), replacing the survival bonus.
    pub death_penalty: f64,
    /// Extra penalty delivered to the victim of a kill.
    pub victim_penalty: f64,
    /// When set, `Stay` is charged the moving expense as well.
    pub cost_on_stay: bool,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            move_cost: 0.3,
            stay_penalty: 1.0,
            survival_bonus: 0.1,
            death_penalty: 1.0,
            victim_penalty: 1.0,
            cost_on_stay: false,
        }
    }
}

/// One agent-iteration reward, split into its four components.
/// `total` is always the exact sum `tolerance + interdependence + survival
/// + moving`, computed once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub tolerance: f64,
    pub interdependence: f64,
    pub survival: f64,
    pub moving: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(tolerance: f64, interdependence: f64, survival: f64, moving: f64) -> Self {
        RewardBreakdown {
            tolerance,
            interdependence,
            survival,
            moving,
            total: tolerance + interdependence + survival + moving,
        }
    }

    /// Component-wise sum; `total` is recomputed from the merged parts.
    pub fn combine(&self, other: &RewardBreakdown) -> RewardBreakdown {
        RewardBreakdown::new(
            self.tolerance + other.tolerance,
            self.interdependence + other.interdependence,
            self.survival + other.survival,
            self.moving + other.moving,
        )
    }
}

/// Reward for an agent that acted this iteration.
///
/// `counts` must come from the post-action window, so that moving toward
/// same-type clusters is what earns the tolerance term. The tolerance term
/// is observer-relative: same-type neighbors minus `alpha` times other-type
/// neighbors, whichever type the agent is.
pub fn compute_reward(
    outcome: MoveOutcome,
    counts: NeighborCounts,
    alpha: f64,
    params: &RewardParams,
    died_this_step: bool,
) -> RewardBreakdown {
    let tolerance = counts.same as f64 - alpha * counts.other as f64;
    let interdependence = if outcome == MoveOutcome::Stayed { -params.stay_penalty } else { 0.0 };
    let moving = match outcome {
        MoveOutcome::Stayed => {
            if params.cost_on_stay {
                -params.move_cost
            } else {
                0.0
            }
        }
        _ => -params.move_cost,
    };
    let survival = if died_this_step { -params.death_penalty } else { params.survival_bonus };
    RewardBreakdown::new(tolerance, interdependence, survival, moving)
}

/// The separate reward event delivered to the victim of a kill: the victim
/// penalty (interdependence) and the death penalty (survival) stack.
pub fn victim_reward(params: &RewardParams) -> RewardBreakdown {
    RewardBreakdown::new(0.0, -params.victim_penalty, -params.death_penalty, 0.0)
}

/// Chooses an action from an observation. Implemented by the learner's
/// epsilon-greedy policies and by test stubs; closures work directly.
pub trait ActionSelector {
    fn select(&mut self, obs: &Observation, rng: &mut SimRng) -> Action;
}

impl<F: FnMut(&Observation, &mut SimRng) -> Action> ActionSelector for F {
    fn select(&mut self, obs: &Observation, rng: &mut SimRng) -> Action {
        self(obs, rng)
    }
}

/// Picks uniformly among the five actions.
pub struct UniformRandomPolicy;

impl ActionSelector for UniformRandomPolicy {
    fn select(&mut self, _obs: &Observation, rng: &mut SimRng) -> Action {
        Action::from_index(rng.random_range(0..Action::COUNT)).unwrap()
    }
}

/// Record of one agent's turn within an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    pub agent_id: AgentId,
    pub kind: AgentKind,
    /// Pre-action observation: the state the policy acted on.
    pub observation: Observation,
    pub action: Action,
    pub outcome: MoveOutcome,
    pub reward: RewardBreakdown,
    /// The agent reached the age cap this turn and was removed.
    pub terminal: bool,
}

/// Ordered event stream of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum StepEvent {
    Acted(AgentStep),
    /// An agent was removed by a kill; the penalty attaches to the victim's
    /// most recent step.
    VictimPenalty {
        victim: AgentId,
        kind: AgentKind,
        penalty: RewardBreakdown,
    },
}

/// Everything that happened in one iteration, in order, plus death/kill
/// tallies for metrics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationReport {
    pub events: Vec<StepEvent>,
    /// Agents removed this iteration (age-outs plus kill victims).
    pub deaths: usize,
    /// Kill events (a subset of `deaths`).
    pub kills: usize,
}

impl IterationReport {
    pub fn steps(&self) -> impl Iterator<Item = &AgentStep> {
        self.events.iter().filter_map(|e| match e {
            StepEvent::Acted(step) => Some(step),
            StepEvent::VictimPenalty { .. } => None,
        })
    }
}

/// Advance the world by one iteration.
///
/// Living agents act once each, in a uniformly shuffled order. Each turn:
/// observe, select an action with the policy for the agent's type, resolve
/// it, compute the reward from the post-action window, then age the agent.
/// An agent reaching [`MAX_AGE`] is removed at the end of its own turn (its
/// reward carries the death penalty in place of the survival bonus). Agents
/// killed before their turn simply never act. All agents that died are
/// replaced at the end of the iteration by brand-new agents of the same
/// type at random empty cells, so per-type populations are conserved at
/// iteration boundaries.
pub fn step_iteration(
    grid: &mut Grid,
    policy_a: &mut dyn ActionSelector,
    policy_b: &mut dyn ActionSelector,
    params: &RewardParams,
    config: &EnvConfig,
    rng: &mut SimRng,
) -> Result<IterationReport, EnvError> {
    let mut order: Vec<AgentId> = grid.agent_ids().collect();
    order.shuffle(rng);

    let mut report = IterationReport::default();
    let mut dead: Vec<(AgentId, AgentKind)> = Vec::new();

    for id in order {
        // Skip agents killed earlier in this iteration.
        let Some(agent) = grid.agent(id) else { continue };
        let Agent { kind, alpha, .. } = *agent;

        let observation = observe(grid, id, config.window)?;
        let action = match kind {
            AgentKind::A => policy_a.select(&observation, rng),
            AgentKind::B => policy_b.select(&observation, rng),
        };
        let outcome = resolve_action(grid, id, action)?;
        if let MoveOutcome::Killed(victim) = outcome {
            report.kills += 1;
            dead.push((victim, kind.other()));
            report.events.push(StepEvent::VictimPenalty {
                victim,
                kind: kind.other(),
                penalty: victim_reward(params),
            });
        }

        let counts = neighbor_counts(&observe(grid, id, config.window)?);
        let age = grid.age_agent(id)?;
        let died = age >= MAX_AGE;
        let reward = compute_reward(outcome, counts, alpha, params, died);
        report.events.push(StepEvent::Acted(AgentStep {
            agent_id: id,
            kind,
            observation,
            action,
            outcome,
            reward,
            terminal: died,
        }));
        if died {
            grid.remove_agent(id)?;
            dead.push((id, kind));
        }
    }

    report.deaths = dead.len();
    for (_, kind) in dead {
        grid.respawn(kind, config.tolerance_mode, rng)?;
    }
    Ok(report)
}
