//! World state: the cell lattice and the agents living on it.
//!
//! The grid is a 2-D lattice where each cell is empty or holds exactly one
//! agent. Coordinates use `x` for the column and `y` for the row; `y` grows
//! downward, so [`crate::env::Action::Up`] decreases `y`. Snapshot exports
//! print row `y = 0` first.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::rng::SimRng;

/// Iterations an agent lives before it is removed and replaced.
pub const MAX_AGE: u32 = 80;

/// The tolerance levels agents can be assigned.
pub const ALPHA_LEVELS: [f64; 3] = [0.0, 0.5, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("occupancy must lie strictly between 0 and 1, got {0}")]
    BadOccupancy(f64),
    #[error("{width}x{height} grid at occupancy {occupancy} holds no agents")]
    NoAgents { width: u32, height: u32, occupancy: f64 },
    #[error("grid dimensions must be at least 1x1, got {width}x{height}")]
    BadDimensions { width: u32, height: u32 },
    #[error("observation window must be odd and at least 3, got {0}")]
    BadWindow(u32),
    #[error("observation window {window} exceeds grid dimensions {width}x{height}")]
    WindowTooLarge { window: u32, width: u32, height: u32 },
    #[error("tolerance level must be one of 0.0, 0.5, 1.0, got {0}")]
    BadAlpha(f64),
    #[error("unknown agent id {0}")]
    UnknownAgent(u64),
    #[error("cell ({x},{y}) is already occupied")]
    CellOccupied { x: u32, y: u32 },
    #[error("position ({x},{y}) lies outside the {width}x{height} grid")]
    OutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("no empty cell available for respawn")]
    GridFull,
}

/// Cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub x: u32,
    pub y: u32,
}

impl Pos {
    pub fn new(x: u32, y: u32) -> Self {
        Pos { x, y }
    }
}

/// Stable agent handle. Ids are never reused within a simulation; a
/// respawned agent is a brand-new individual with a fresh id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub u64);

/// The two agent populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    A,
    B,
}

impl AgentKind {
    pub fn other(self) -> AgentKind {
        match self {
            AgentKind::A => AgentKind::B,
            AgentKind::B => AgentKind::A,
        }
    }

    /// Window encoding of `self` as seen by `observer`: +1 same type,
    /// -1 other type.
    pub fn relative_to(self, observer: AgentKind) -> i8 {
        if self == observer {
            1
        } else {
            -1
        }
    }

    pub fn symbol(self) -> char {
        match self {
            AgentKind::A => 'A',
            AgentKind::B => 'B',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    pub kind: AgentKind,
    pub pos: Pos,
    /// Iterations lived so far; reaching [`MAX_AGE`] removes the agent in
    /// the same iteration.
    pub age: u32,
    /// Tolerance weight on other-type neighbors, one of [`ALPHA_LEVELS`].
    pub alpha: f64,
}

/// Boundary handling for movement and window extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Edges wrap; every cell has a full neighborhood.
    Torus,
    /// Hard borders; off-grid moves are blocked and off-grid window cells
    /// read as empty.
    Clamped,
}

/// How tolerance levels are assigned at spawn time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToleranceMode {
    /// Every agent shares the given level.
    Fixed(f64),
    /// Each agent draws uniformly from [`ALPHA_LEVELS`].
    UniformRandom,
}

impl ToleranceMode {
    pub fn draw(self, rng: &mut SimRng) -> f64 {
        match self {
            ToleranceMode::Fixed(alpha) => alpha,
            ToleranceMode::UniformRandom => ALPHA_LEVELS[rng.random_range(0..ALPHA_LEVELS.len())],
        }
    }
}

/// Static parameters of the world.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub width: u32,
    pub height: u32,
    /// Fraction of cells occupied at start, split evenly between types.
    pub occupancy: f64,
    /// Side length of the square observation window; odd, at least 3.
    pub window: u32,
    pub topology: Topology,
    pub tolerance_mode: ToleranceMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            width: 50,
            height: 50,
            occupancy: 0.5,
            window: 5,
            topology: Topology::Torus,
            tolerance_mode: ToleranceMode::UniformRandom,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.width == 0 || self.height == 0 {
            return Err(EnvError::BadDimensions { width: self.width, height: self.height });
        }
        if !(self.occupancy > 0.0 && self.occupancy < 1.0) {
            return Err(EnvError::BadOccupancy(self.occupancy));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(EnvError::BadWindow(self.window));
        }
        if self.window > self.width || self.window > self.height {
            return Err(EnvError::WindowTooLarge {
                window: self.window,
                width: self.width,
                height: self.height,
            });
        }
        if let ToleranceMode::Fixed(alpha) = self.tolerance_mode {
            if !ALPHA_LEVELS.contains(&alpha) {
                return Err(EnvError::BadAlpha(alpha));
            }
        }
        Ok(())
    }

    /// Agents per type at the configured occupancy.
    pub fn agents_per_type(&self) -> usize {
        let cells = self.width as f64 * self.height as f64;
        (self.occupancy * cells / 2.0).floor() as usize
    }
}

/// The authoritative world state. Cell contents and the agent table are
/// kept in lockstep: every agent's position maps back to its own id.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: u32,
    height: u32,
    topology: Topology,
    cells: Vec<Option<AgentId>>,
    agents: BTreeMap<AgentId, Agent>,
    next_id: u64,
}

impl Grid {
    /// An empty grid with no agents.
    pub fn empty(width: u32, height: u32, topology: Topology) -> Result<Grid, EnvError> {
        if width == 0 || height == 0 {
            return Err(EnvError::BadDimensions { width, height });
        }
        Ok(Grid {
            width,
            height,
            topology,
            cells: vec![None; width as usize * height as usize],
            agents: BTreeMap::new(),
            next_id: 0,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    fn idx(&self, pos: Pos) -> usize {
        pos.y as usize * self.width as usize + pos.x as usize
    }

    pub fn in_bounds(&self, pos: Pos) -> bool {
        pos.x < self.width && pos.y < self.height
    }

    /// The occupant of a cell, if any.
    pub fn cell(&self, pos: Pos) -> Option<AgentId> {
        self.cells[self.idx(pos)]
    }

    pub fn agent(&self, id: AgentId) -> Option<&Agent> {
        self.agents.get(&id)
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.agents.contains_key(&id)
    }

    /// Agents in ascending id order.
    pub fn agents(&self) -> impl Iterator<Item = &Agent> {
        self.agents.values()
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.keys().copied()
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn count_kind(&self, kind: AgentKind) -> usize {
        self.agents.values().filter(|a| a.kind == kind).count()
    }

    pub fn empty_cell_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// Apply an (dx, dy) offset under the grid's topology. Returns `None`
    /// when a clamped grid would leave the lattice.
    pub fn offset(&self, pos: Pos, dx: i64, dy: i64) -> Option<Pos> {
        let (w, h) = (self.width as i64, self.height as i64);
        let nx = pos.x as i64 + dx;
        let ny = pos.y as i64 + dy;
        match self.topology {
            Topology::Torus => Some(Pos::new(
                nx.rem_euclid(w) as u32,
                ny.rem_euclid(h) as u32,
            )),
            Topology::Clamped => {
                if nx < 0 || nx >= w || ny < 0 || ny >= h {
                    None
                } else {
                    Some(Pos::new(nx as u32, ny as u32))
                }
            }
        }
    }

    /// Place a new agent and return its id.
    pub fn place_agent(
        &mut self,
        kind: AgentKind,
        pos: Pos,
        alpha: f64,
        age: u32,
    ) -> Result<AgentId, EnvError> {
        if !self.in_bounds(pos) {
            return Err(EnvError::OutOfBounds {
                x: pos.x,
                y: pos.y,
                width: self.width,
                height: self.height,
            });
        }
        if self.cell(pos).is_some() {
            return Err(EnvError::CellOccupied { x: pos.x, y: pos.y });
        }
        let id = AgentId(self.next_id);
        self.next_id += 1;
        let idx = self.idx(pos);
        self.cells[idx] = Some(id);
        self.agents.insert(id, Agent { id, kind, pos, age, alpha });
        Ok(id)
    }

    pub fn remove_agent(&mut self, id: AgentId) -> Result<Agent, EnvError> {
        let agent = self.agents.remove(&id).ok_or(EnvError::UnknownAgent(id.0))?;
        let idx = self.idx(agent.pos);
        self.cells[idx] = None;
        Ok(agent)
    }

    /// Move an agent to an empty cell.
    pub(crate) fn move_agent(&mut self, id: AgentId, to: Pos) -> Result<(), EnvError> {
        if self.cell(to).is_some() {
            return Err(EnvError::CellOccupied { x: to.x, y: to.y });
        }
        let agent = self.agents.get_mut(&id).ok_or(EnvError::UnknownAgent(id.0))?;
        let from_idx = agent.pos.y as usize * self.width as usize + agent.pos.x as usize;
        agent.pos = to;
        let to_idx = self.idx(to);
        self.cells[from_idx] = None;
        self.cells[to_idx] = Some(id);
        Ok(())
    }

    pub(crate) fn age_agent(&mut self, id: AgentId) -> Result<u32, EnvError> {
        let agent = self.agents.get_mut(&id).ok_or(EnvError::UnknownAgent(id.0))?;
        agent.age += 1;
        Ok(agent.age)
    }

    /// Spawn an agent of `kind` at a uniformly random empty cell with age 0.
    pub fn respawn(
        &mut self,
        kind: AgentKind,
        tolerance_mode: ToleranceMode,
        rng: &mut SimRng,
    ) -> Result<AgentId, EnvError> {
        let empties: Vec<usize> = self
            .cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.is_none().then_some(i))
            .collect();
        if empties.is_empty() {
            return Err(EnvError::GridFull);
        }
        let idx = empties[rng.random_range(0..empties.len())];
        let pos = Pos::new((idx % self.width as usize) as u32, (idx / self.width as usize) as u32);
        let alpha = tolerance_mode.draw(rng);
        self.place_agent(kind, pos, alpha, 0)
    }

    /// Verify the structural invariants; returns a description of the first
    /// violation found. Intended for tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = 0usize;
        for (i, cell) in self.cells.iter().enumerate() {
            if let Some(id) = cell {
                seen += 1;
                let agent = self
                    .agents
                    .get(id)
                    .ok_or_else(|| format!("cell {i} holds unknown agent {}", id.0))?;
                let expect = agent.pos.y as usize * self.width as usize + agent.pos.x as usize;
                if expect != i {
                    return Err(format!(
                        "agent {} stored at cell {i} but claims position ({},{})",
                        id.0, agent.pos.x, agent.pos.y
                    ));
                }
            }
        }
        if seen != self.agents.len() {
            return Err(format!(
                "{} occupied cells but {} agents in the table",
                seen,
                self.agents.len()
            ));
        }
        for agent in self.agents.values() {
            if !self.in_bounds(agent.pos) {
                return Err(format!("agent {} out of bounds", agent.id.0));
            }
            if agent.age > MAX_AGE {
                return Err(format!("agent {} has age {} > {MAX_AGE}", agent.id.0, agent.age));
            }
            if !ALPHA_LEVELS.contains(&agent.alpha) {
                return Err(format!("agent {} has alpha {}", agent.id.0, agent.alpha));
            }
        }
        Ok(())
    }

    /// Plain-text snapshot: one row per grid line, `.` empty, `A`/`B` for
    /// occupants, LF after every row. Row `y = 0` comes first.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width as usize + 1) * self.height as usize);
        for y in 0..self.height {
            for x in 0..self.width {
                match self.cell(Pos::new(x, y)) {
                    None => out.push('.'),
                    Some(id) => out.push(self.agents[&id].kind.symbol()),
                }
            }
            out.push('\n');
        }
        out
    }

    /// CSV snapshot with header `x,y,type,alpha,age`, one row per agent,
    /// sorted by (y, x).
    pub fn to_agent_csv(&self) -> String {
        let mut rows: Vec<&Agent> = self.agents.values().collect();
        rows.sort_by_key(|a| (a.pos.y, a.pos.x));
        let mut out = String::from("x,y,type,alpha,age\n");
        for a in rows {
            let _ = writeln!(out, "{},{},{},{},{}", a.pos.x, a.pos.y, a.kind.symbol(), a.alpha, a.age);
        }
        out
    }
}

/// Populate a fresh grid: `agents_per_type` agents of each type at distinct
/// uniformly random cells, ages uniform in `[0, MAX_AGE)` so deaths are not
/// synchronized, tolerance levels per the configured mode.
pub fn init_grid(config: &EnvConfig, rng: &mut SimRng) -> Result<Grid, EnvError> {
    config.validate()?;
    let per_type = config.agents_per_type();
    if per_type == 0 {
        return Err(EnvError::NoAgents {
            width: config.width,
            height: config.height,
            occupancy: config.occupancy,
        });
    }
    let cell_count = config.width as usize * config.height as usize;
    if per_type * 2 > cell_count {
        return Err(EnvError::BadOccupancy(config.occupancy));
    }

    let mut grid = Grid::empty(config.width, config.height, config.topology)?;
    let mut indices: Vec<usize> = (0..cell_count).collect();
    indices.shuffle(rng);

    for (slot, &idx) in indices.iter().take(per_type * 2).enumerate() {
        let kind = if slot < per_type { AgentKind::A } else { AgentKind::B };
        let pos = Pos::new(
            (idx % config.width as usize) as u32,
            (idx / config.width as usize) as u32,
        );
        let age = rng.random_range(0..MAX_AGE);
        let alpha = config.tolerance_mode.draw(rng);
        grid.place_agent(kind, pos, alpha, age)?;
    }
    Ok(grid)
}
