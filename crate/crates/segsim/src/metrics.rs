//! Segregation and learning-progress measurements.
//!
//! Two spatial indices summarize how mixed the population is:
//!
//! * **Same-type neighbor fraction** — mean over agents of the share of
//!   same-type agents among their occupied adjacent cells. 1.0 is full
//!   segregation, 0.5 is a well-mixed population.
//! * **Interface density** — the fraction of adjacent occupied pairs that
//!   are mixed-type, each unordered pair counted once. Low values indicate
//!   segregation.
//!
//! Both use 8-cell (Moore) adjacency by default; the fraction also comes in
//! a 4-cell (von Neumann) variant. Adjacency follows the grid's topology.

use std::collections::BTreeSet;

use crate::grid::{AgentKind, Grid, Pos};

/// Neighborhood used by the spatial indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjacency {
    /// 8 surrounding cells.
    Moore,
    /// 4 orthogonal cells.
    VonNeumann,
}

impl Adjacency {
    fn offsets(self) -> &'static [(i64, i64)] {
        const MOORE: [(i64, i64); 8] =
            [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        const VON_NEUMANN: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        match self {
            Adjacency::Moore => &MOORE,
            Adjacency::VonNeumann => &VON_NEUMANN,
        }
    }
}

/// Per-iteration measurement row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub same_type_fraction: f64,
    pub interface_density: f64,
    pub mean_reward_a: f64,
    pub mean_reward_b: f64,
    pub deaths: u64,
    pub kills: u64,
    pub epsilon: f64,
}

/// Distinct neighbor cells of a position, excluding the position itself.
/// On tiny tori several offsets can land on the same cell; they count once.
fn neighbor_cells(grid: &Grid, pos: Pos, adjacency: Adjacency) -> Vec<Pos> {
    let mut cells = BTreeSet::new();
    for &(dx, dy) in adjacency.offsets() {
        if let Some(p) = grid.offset(pos, dx, dy) {
            if p != pos {
                cells.insert(p);
            }
        }
    }
    cells.into_iter().collect()
}

/// Same-type neighbor fraction with Moore adjacency.
pub fn same_type_fraction(grid: &Grid) -> f64 {
    same_type_fraction_with(grid, Adjacency::Moore)
}

/// Mean over agents of same-type / occupied adjacent cells. Agents with no
/// occupied neighbor are excluded; if no agent has one, returns the 0.5
/// well-mixed convention.
pub fn same_type_fraction_with(grid: &Grid, adjacency: Adjacency) -> f64 {
    let mut sum = 0.0;
    let mut counted = 0usize;
    for agent in grid.agents() {
        let mut same = 0u32;
        let mut occupied = 0u32;
        for cell in neighbor_cells(grid, agent.pos, adjacency) {
            if let Some(id) = grid.cell(cell) {
                occupied += 1;
                if grid.agent(id).expect("cell points at live agent").kind == agent.kind {
                    same += 1;
                }
            }
        }
        if occupied > 0 {
            sum += same as f64 / occupied as f64;
            counted += 1;
        }
    }
    if counted == 0 {
        0.5
    } else {
        sum / counted as f64
    }
}

/// Mixed-type share of adjacent occupied pairs under Moore adjacency, each
/// unordered pair counted once; 0 when no occupied pair exists.
pub fn interface_density(grid: &Grid) -> f64 {
    let mut pairs: BTreeSet<(Pos, Pos)> = BTreeSet::new();
    for agent in grid.agents() {
        for cell in neighbor_cells(grid, agent.pos, Adjacency::Moore) {
            if grid.cell(cell).is_some() {
                let key = if agent.pos < cell { (agent.pos, cell) } else { (cell, agent.pos) };
                pairs.insert(key);
            }
        }
    }
    if pairs.is_empty() {
        return 0.0;
    }
    let kind_at = |p: Pos| -> AgentKind {
        grid.agent(grid.cell(p).unwrap()).expect("cell points at live agent").kind
    };
    let mixed = pairs.iter().filter(|(a, b)| kind_at(*a) != kind_at(*b)).count();
    mixed as f64 / pairs.len() as f64
}

/// Discounted return `sum_k gamma^k * rewards[k]`, evaluated right-to-left
/// (Horner form) so the recursion `R_t = r_t + gamma * R_{t+1}` holds
/// exactly. Used as a diagnostic oracle, not in training.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, &r| r + gamma * acc)
}
