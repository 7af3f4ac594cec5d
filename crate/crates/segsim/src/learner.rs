//! Q-learning glue: exploration schedule, action selection, Bellman
//! targets, the batched training step, and the assembler that turns
//! environment reports into replay transitions.
//!
//! Each agent type gets its own [`Learner`] (network, target network,
//! optimizer state, replay buffer); the two never share parameters.

use std::collections::BTreeMap;

use rand::Rng;

use crate::adam::Adam;
use crate::env::{Action, IterationReport, StepEvent};
use crate::grid::{AgentId, AgentKind};
use crate::nn::{sync_target, QNetwork, QlearnError};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::SimRng;

/// Linearly decaying exploration rate: `value(0) = start`, reaching `end`
/// at `decay_steps` and staying there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule { start: 0.9, end: 0.0, decay_steps: 100_000 }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Epsilon-greedy selection over the five action values: explore uniformly
/// with probability `eps`, otherwise take the argmax, ties broken by the
/// lowest action index.
pub fn select_action(q_values: &[f64], eps: f64, rng: &mut SimRng) -> Result<Action, QlearnError> {
    if q_values.iter().any(|q| q.is_nan()) {
        return Err(QlearnError::NanQValues);
    }
    debug_assert_eq!(q_values.len(), Action::COUNT);
    let explore = rng.random::<f64>() < eps;
    if explore {
        return Ok(Action::from_index(rng.random_range(0..Action::COUNT)).unwrap());
    }
    let mut best = 0usize;
    for (i, &q) in q_values.iter().enumerate().skip(1) {
        if q > q_values[best] {
            best = i;
        }
    }
    Ok(Action::from_index(best).unwrap())
}

/// Regression targets: `r` for terminal transitions, otherwise
/// `r + gamma * max_a Q_target(s', a)`. Targets are constants; no gradient
/// reaches the target network.
pub fn bellman_targets(
    batch: &[&Transition],
    target_net: &QNetwork,
    gamma: f64,
) -> Result<Vec<f64>, QlearnError> {
    let mut targets = Vec::with_capacity(batch.len());
    for t in batch {
        let target = match &t.next_state {
            None => t.reward,
            Some(next) => {
                let q = target_net.forward(next)?;
                let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                t.reward + gamma * max
            }
        };
        targets.push(target);
    }
    Ok(targets)
}

/// One gradient step on the mean squared Bellman error of a batch.
/// Returns the loss measured before the parameter update.
pub fn train_batch(
    net: &mut QNetwork,
    target_net: &QNetwork,
    adam: &mut Adam,
    batch: &[&Transition],
    gamma: f64,
) -> Result<f64, QlearnError> {
    let targets = bellman_targets(batch, target_net, gamma)?;
    let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let (loss, grads) = net.loss_and_gradients(&states, &actions, &targets)?;
    adam.step(net.params_mut(), &grads)?;
    Ok(loss)
}

/// Everything one agent type needs to learn: online and target networks,
/// optimizer state, and a replay buffer.
#[derive(Debug, Clone)]
pub struct Learner {
    pub net: QNetwork,
    pub target: QNetwork,
    pub adam: Adam,
    pub buffer: ReplayBuffer,
    pub batch_size: usize,
    pub gamma: f64,
    /// Copy the online network into the target every this many training
    /// steps; 1 means targets always come from the current network.
    pub sync_interval: u64,
}

impl Learner {
    pub fn new(
        sizes: &[usize],
        learning_rate: f64,
        buffer_capacity: usize,
        batch_size: usize,
        gamma: f64,
        sync_interval: u64,
        rng: &mut SimRng,
    ) -> Result<Learner, QlearnError> {
        let net = QNetwork::new(sizes, rng)?;
        let target = net.clone();
        let adam = Adam::new(net.param_count(), learning_rate);
        Ok(Learner {
            net,
            target,
            adam,
            buffer: ReplayBuffer::new(buffer_capacity),
            batch_size,
            gamma,
            sync_interval: sync_interval.max(1),
        })
    }

    pub fn push(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// Train once if the buffer is warm; returns the batch loss when a step
    /// was taken. The target network refreshes on the sync interval.
    pub fn train_once(&mut self, rng: &mut SimRng) -> Result<Option<f64>, QlearnError> {
        if self.buffer.len() < self.batch_size {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.batch_size, rng)?;
        let loss = train_batch(&mut self.net, &self.target, &mut self.adam, &batch, self.gamma)?;
        if self.adam.t() % self.sync_interval == 0 {
            sync_target(&self.net, &mut self.target)?;
        }
        if !loss.is_finite() {
            return Err(QlearnError::NonFiniteLoss);
        }
        Ok(Some(loss))
    }

    pub fn train_steps(&self) -> u64 {
        self.adam.t()
    }
}

#[derive(Debug, Clone)]
struct Pending {
    kind: AgentKind,
    state: Vec<f64>,
    action: usize,
    tolerance: f64,
    interdependence: f64,
    survival: f64,
    moving: f64,
}

impl Pending {
    fn total(&self) -> f64 {
        self.tolerance + self.interdependence + self.survival + self.moving
    }
}

/// Builds transitions across iteration boundaries.
///
/// An acting agent opens a pending transition; its observation at the start
/// of its next turn (after every other agent moved) closes it as the
/// successor state. Deaths close pending transitions as terminal: an
/// age-out is terminal on the turn itself, while a kill folds the victim's
/// penalty into its pending reward and closes it with no successor. A
/// victim that never acted leaves no transition.
#[derive(Debug, Default)]
pub struct TransitionAssembler {
    pending: BTreeMap<AgentId, Pending>,
}

impl TransitionAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drop any half-built transitions (used at phase boundaries).
    pub fn clear(&mut self) {
        self.pending.clear();
    }

    /// Fold one iteration's events into completed transitions, in event
    /// order.
    pub fn consume(&mut self, report: &IterationReport) -> Vec<(AgentKind, Transition)> {
        let mut done = Vec::new();
        for event in &report.events {
            match event {
                StepEvent::Acted(step) => {
                    let state = step.observation.to_state_vector();
                    if let Some(prev) = self.pending.remove(&step.agent_id) {
                        let reward = prev.total();
                        done.push((
                            prev.kind,
                            Transition::step(prev.state, prev.action, reward, state.clone()),
                        ));
                    }
                    if step.terminal {
                        done.push((
                            step.kind,
                            Transition::terminal(state, step.action.index(), step.reward.total),
                        ));
                    } else {
                        self.pending.insert(
                            step.agent_id,
                            Pending {
                                kind: step.kind,
                                state,
                                action: step.action.index(),
                                tolerance: step.reward.tolerance,
                                interdependence: step.reward.interdependence,
                                survival: step.reward.survival,
                                moving: step.reward.moving,
                            },
                        );
                    }
                }
                StepEvent::VictimPenalty { victim, penalty, .. } => {
                    if let Some(prev) = self.pending.remove(victim) {
                        let reward = prev.total()
                            + (penalty.tolerance
                                + penalty.interdependence
                                + penalty.survival
                                + penalty.moving);
                        done.push((
                            prev.kind,
                            Transition::terminal(prev.state, prev.action, reward),
                        ));
                    }
                }
            }
        }
        done
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{AgentStep, MoveOutcome, Observation, RewardBreakdown};
    use crate::rng::rng_from_seed;

    #[test]
    fn schedule_hits_the_published_endpoints() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.value(0), 0.9);
        assert_eq!(s.value(100_000), 0.0);
        assert_eq!(s.value(200_000), 0.0);
        assert!((s.value(50_000) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn schedule_never_increases() {
        let s = EpsilonSchedule::default();
        let mut last = f64::INFINITY;
        for step in (0..=120_000).step_by(37) {
            let v = s.value(step);
            assert!(v <= last);
            assert!((0.0..=0.9).contains(&v));
            last = v;
        }
    }

    #[test]
    fn greedy_selection_takes_the_argmax() {
        let mut rng = rng_from_seed(0);
        let action = select_action(&[1.0, 2.0, 5.0, 0.0, -1.0], 0.0, &mut rng).unwrap();
        assert_eq!(action.index(), 2);
    }

    #[test]
    fn ties_break_toward_the_lowest_index() {
        let mut rng = rng_from_seed(0);
        let action = select_action(&[3.0, 3.0, 0.0, 0.0, 0.0], 0.0, &mut rng).unwrap();
        assert_eq!(action.index(), 0);
    }

    #[test]
    fn nan_q_values_are_an_error() {
        let mut rng = rng_from_seed(0);
        assert!(matches!(
            select_action(&[0.0, f64::NAN, 0.0, 0.0, 0.0], 0.5, &mut rng),
            Err(QlearnError::NanQValues)
        ));
    }

    #[test]
    fn full_exploration_is_uniform_within_3_sigma() {
        let mut rng = rng_from_seed(23);
        let draws = 100_000usize;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            let a = select_action(&[9.0, 0.0, 0.0, 0.0, 0.0], 1.0, &mut rng).unwrap();
            counts[a.index()] += 1;
        }
        let p = 0.2;
        let sigma = (p * (1.0 - p) * draws as f64).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - p * draws as f64).abs() <= 3.0 * sigma,
                "counts {counts:?}"
            );
        }
    }

    #[test]
    fn argmax_is_invariant_under_positive_scaling() {
        let mut rng = rng_from_seed(1);
        let q = [0.3, -1.0, 0.7, 0.2, 0.69];
        let base = select_action(&q, 0.0, &mut rng).unwrap();
        for scale in [0.5, 2.0, 100.0] {
            let scaled: Vec<f64> = q.iter().map(|v| v * scale).collect();
            let mut rng2 = rng_from_seed(1);
            assert_eq!(select_action(&scaled, 0.0, &mut rng2).unwrap(), base);
        }
    }

    #[test]
    fn bellman_targets_cover_terminal_and_discounted_cases() {
        // A target net that outputs max Q = 2 for any input: zero weights,
        // biases set on the output layer.
        let mut target = QNetwork::zeros(&[3, 5]).unwrap();
        let n = target.param_count();
        target.params_mut()[n - 5] = 2.0; // bias of output 0

        let terminal = Transition::terminal(vec![0.0; 3], 1, -2.0);
        let step = Transition::step(vec![0.0; 3], 0, 1.0, vec![0.0; 3]);
        let batch = [&terminal, &step];

        let t = bellman_targets(&batch, &target, 0.99).unwrap();
        assert_eq!(t[0], -2.0);
        assert!((t[1] - 2.98).abs() < 1e-12);

        let myopic = bellman_targets(&batch, &target, 0.0).unwrap();
        assert_eq!(myopic, vec![-2.0, 1.0]);
    }

    #[test]
    fn perfect_predictions_are_a_fixed_point() {
        // Terminal transitions whose rewards equal the network's output:
        // zero loss, zero gradient, parameters unchanged.
        let mut rng = rng_from_seed(2);
        let mut net = QNetwork::new(&[3, 4, 5], &mut rng).unwrap();
        let target = net.clone();
        let mut adam = Adam::new(net.param_count(), 0.001);

        let state = vec![0.5, -0.25, 1.0];
        let q = net.forward(&state).unwrap();
        let batch_owned: Vec<Transition> =
            (0..5).map(|a| Transition::terminal(state.clone(), a, q[a])).collect();
        let batch: Vec<&Transition> = batch_owned.iter().collect();

        let before = net.params().to_vec();
        let loss = train_batch(&mut net, &target, &mut adam, &batch, 0.99).unwrap();
        assert_eq!(loss, 0.0);
        for (a, b) in net.params().iter().zip(&before) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_weight_update_matches_the_hand_trace() {
        // Network [1,1]: q = w*x + b. One terminal transition, action 0.
        let mut net = QNetwork::zeros(&[1, 1]).unwrap();
        net.params_mut()[0] = 1.0; // w
        net.params_mut()[1] = 0.0; // b
        let target = net.clone();
        let mut adam = Adam::new(2, 0.001);

        let x = 2.0;
        let r = 0.5;
        let tr = Transition::terminal(vec![x], 0, r);
        let loss = train_batch(&mut net, &target, &mut adam, &[&tr], 0.99).unwrap();

        let q = 1.0 * x + 0.0;
        let err = q - r;
        assert!((loss - err * err).abs() < 1e-15);

        // Hand-computed Adam step for both parameters.
        let expect = |p0: f64, g: f64| {
            let m = (1.0 - 0.9) * g;
            let v = (1.0 - 0.999) * g * g;
            let m_hat = m / (1.0 - 0.9f64);
            let v_hat = v / (1.0 - 0.999f64);
            p0 - 0.001 * m_hat / (v_hat.sqrt() + 1e-8)
        };
        let gw = 2.0 * err * x;
        let gb = 2.0 * err;
        assert!((net.params()[0] - expect(1.0, gw)).abs() <= 1e-12);
        assert!((net.params()[1] - expect(0.0, gb)).abs() <= 1e-12);
    }

    #[test]
    fn loss_is_never_negative() {
        let mut rng = rng_from_seed(5);
        let mut net = QNetwork::new(&[4, 6, 5], &mut rng).unwrap();
        let target = net.clone();
        let mut adam = Adam::new(net.param_count(), 0.001);
        for _ in 0..50 {
            let batch_owned: Vec<Transition> = (0..8)
                .map(|_| {
                    let s: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                    let a = rng.random_range(0..5);
                    let r = rng.random::<f64>() * 4.0 - 2.0;
                    if rng.random::<bool>() {
                        Transition::terminal(s, a, r)
                    } else {
                        let s2: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                        Transition::step(s, a, r, s2)
                    }
                })
                .collect();
            let batch: Vec<&Transition> = batch_owned.iter().collect();
            let loss = train_batch(&mut net, &target, &mut adam, &batch, 0.99).unwrap();
            assert!(loss >= 0.0);
        }
    }

    #[test]
    fn target_sync_interval_one_tracks_the_online_net() {
        let mut rng = rng_from_seed(6);
        let mut learner = Learner::new(&[3, 4, 5], 0.01, 100, 4, 0.99, 1, &mut rng).unwrap();
        for i in 0..8 {
            learner.push(Transition::terminal(vec![i as f64 * 0.1, 0.0, 0.0], i % 5, 1.0));
        }
        learner.train_once(&mut rng).unwrap().unwrap();
        assert_eq!(learner.net, learner.target);

        // With a long interval the two diverge after one step.
        let mut rng = rng_from_seed(6);
        let mut learner = Learner::new(&[3, 4, 5], 0.01, 100, 4, 0.99, 500, &mut rng).unwrap();
        for i in 0..8 {
            learner.push(Transition::terminal(vec![i as f64 * 0.1, 0.0, 0.0], i % 5, 1.0));
        }
        learner.train_once(&mut rng).unwrap().unwrap();
        assert_ne!(learner.net.params(), learner.target.params());
    }

    #[test]
    fn parameters_stay_finite_over_many_steps() {
        // Stability smoke test: 10^4 training steps on random data.
        let mut rng = rng_from_seed(7);
        let mut learner = Learner::new(&[10, 16, 16, 5], 0.001, 5_000, 32, 0.99, 500, &mut rng).unwrap();
        for _ in 0..2_000 {
            let s: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let s2: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let a = rng.random_range(0..5);
            let r = rng.random::<f64>() * 6.0 - 3.0;
            if rng.random::<f64>() < 0.05 {
                learner.push(Transition::terminal(s, a, r));
            } else {
                learner.push(Transition::step(s, a, r, s2));
            }
        }
        for step in 0..10_000 {
            learner.train_once(&mut rng).unwrap().unwrap();
            if step % 1000 == 0 {
                assert!(learner.net.all_finite(), "diverged at step {step}");
            }
        }
        assert!(learner.net.all_finite());
    }

    fn obs(tag: f64) -> Observation {
        Observation { window: vec![0, 0, 0, 0, 1, 0, 0, 0, 0], age_norm: tag }
    }

    fn acted(id: u64, kind: AgentKind, tag: f64, reward: f64, terminal: bool) -> StepEvent {
        StepEvent::Acted(AgentStep {
            agent_id: AgentId(id),
            kind,
            observation: obs(tag),
            action: Action::Stay,
            outcome: MoveOutcome::Stayed,
            reward: RewardBreakdown::new(reward, 0.0, 0.0, 0.0),
            terminal,
        })
    }

    #[test]
    fn assembler_links_consecutive_turns() {
        let mut asm = TransitionAssembler::new();
        let r1 = IterationReport {
            events: vec![acted(1, AgentKind::A, 0.1, 2.0, false)],
            deaths: 0,
            kills: 0,
        };
        assert!(asm.consume(&r1).is_empty());

        let r2 = IterationReport {
            events: vec![acted(1, AgentKind::A, 0.2, 3.0, false)],
            deaths: 0,
            kills: 0,
        };
        let done = asm.consume(&r2);
        assert_eq!(done.len(), 1);
        let (kind, t) = &done[0];
        assert_eq!(*kind, AgentKind::A);
        assert_eq!(t.reward, 2.0);
        assert!(!t.terminal);
        assert_eq!(t.state.last(), Some(&0.1));
        assert_eq!(t.next_state.as_ref().unwrap().last(), Some(&0.2));
    }

    #[test]
    fn assembler_emits_terminal_on_age_out() {
        let mut asm = TransitionAssembler::new();
        let r = IterationReport {
            events: vec![acted(1, AgentKind::B, 0.5, -0.9, true)],
            deaths: 1,
            kills: 0,
        };
        let done = asm.consume(&r);
        assert_eq!(done.len(), 1);
        assert!(done[0].1.terminal);
        assert_eq!(done[0].1.reward, -0.9);
    }

    #[test]
    fn assembler_folds_victim_penalty_into_the_pending_step() {
        let mut asm = TransitionAssembler::new();
        asm.consume(&IterationReport {
            events: vec![acted(1, AgentKind::A, 0.1, 1.5, false)],
            deaths: 0,
            kills: 0,
        });
        let done = asm.consume(&IterationReport {
            events: vec![StepEvent::VictimPenalty {
                victim: AgentId(1),
                kind: AgentKind::A,
                penalty: RewardBreakdown::new(0.0, -1.0, -1.0, 0.0),
            }],
            deaths: 1,
            kills: 1,
        });
        assert_eq!(done.len(), 1);
        let t = &done[0].1;
        assert!(t.terminal);
        assert_eq!(t.reward, 1.5 - 2.0);
        assert!(t.next_state.is_none());
    }

    #[test]
    fn victim_that_never_acted_leaves_nothing() {
        let mut asm = TransitionAssembler::new();
        let done = asm.consume(&IterationReport {
            events: vec![StepEvent::VictimPenalty {
                victim: AgentId(9),
                kind: AgentKind::B,
                penalty: RewardBreakdown::new(0.0, -1.0, -1.0, 0.0),
            }],
            deaths: 1,
            kills: 1,
        });
        assert!(done.is_empty());
    }

    #[test]
    fn training_one_learner_never_touches_the_other() {
        let mut rng = rng_from_seed(8);
        let mut a = Learner::new(&[3, 4, 5], 0.01, 100, 4, 0.99, 500, &mut rng).unwrap();
        let b = Learner::new(&[3, 4, 5], 0.01, 100, 4, 0.99, 500, &mut rng).unwrap();
        let b_before = b.net.params().to_vec();
        for i in 0..8 {
            a.push(Transition::terminal(vec![0.1 * i as f64, 0.0, 0.0], i % 5, -1.0));
        }
        a.train_once(&mut rng).unwrap().unwrap();
        assert_eq!(b.net.params(), b_before.as_slice());
    }
}
