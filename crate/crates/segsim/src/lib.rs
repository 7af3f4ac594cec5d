//! Deterministic two-population grid simulator where agents learn movement
//! policies by deep Q-learning, plus the harness that sweeps tolerance and
//! moving-cost settings and records segregation metrics.
//!
//! The crate is organized around the run pipeline:
//!
//! * [`grid`] / [`mod@env`] — world state, observations, action resolution,
//!   the reward function, aging and respawn
//! * [`nn`] / [`adam`] / [`replay`] / [`learner`] — a from-scratch dense
//!   Q-network, its optimizer, experience replay, and the training step
//! * [`metrics`] — segregation indices and diagnostic returns
//! * [`config`] / [`experiment`] — run configuration, the training and
//!   evaluation loop, sweeps, and output files
//! * [`snapshot`] / [`cli`] — text snapshots, image rendering, and the
//!   `segsim` binary's verbs
//!
//! Every run is fully determined by its configuration, including the seed.

pub mod adam;
pub mod cli;
pub mod config;
pub mod env;
pub mod experiment;
pub mod grid;
pub mod learner;
pub mod metrics;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod snapshot;

pub use config::ExperimentConfig;
pub use experiment::{run_simulation, run_sweep, write_outputs, RunResult};
pub use grid::{Agent, AgentId, AgentKind, EnvConfig, Grid, Pos};
