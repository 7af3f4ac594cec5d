//! Run configuration: defaults, the flat `key=value` file format, command
//! line overrides, and the canonical echo used for `config.echo`.
//!
//! Config files hold one `key=value` pair per line; blank lines and lines
//! starting with `#` are ignored, whitespace around keys and values is
//! trimmed, later assignments win. Unknown keys are errors. The echo prints
//! every key in a fixed order and parses back to an identical config.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::grid::{EnvConfig, ToleranceMode, Topology};
use crate::metrics::Adjacency;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("line {line}: expected key=value, got `{text}`")]
    MalformedLine { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: `{value}` ({expect})")]
    BadValue { key: String, value: String, expect: &'static str },
    #[error("seed is mandatory: set `seed=<u64>` in the config or via --set")]
    MissingSeed,
    #[error("{0}")]
    Invalid(String),
}

/// Every knob of a run. Defaults mirror the published training setup:
/// discount 0.99, batch 256, learning rate 0.001, buffer 10^6, exploration
/// 0.9 -> 0 over 10^5 steps, 3000 training iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub width: u32,
    pub height: u32,
    pub occupancy: f64,
    pub window: u32,
    pub topology: Topology,
    /// `fixed` uses `alpha` for every agent; `uniform_random` draws each
    /// agent's level from {0, 0.5, 1}.
    pub tolerance_mode: ToleranceModeKey,
    pub alpha: f64,
    pub move_cost: f64,
    pub stay_penalty: f64,
    pub survival_bonus: f64,
    pub death_penalty: f64,
    pub victim_penalty: f64,
    pub cost_on_stay: bool,
    pub gamma: f64,
    pub batch: usize,
    pub lr: f64,
    pub hidden1: usize,
    pub hidden2: usize,
    pub train_iterations: u64,
    pub eval_iterations: u64,
    pub buffer: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay: u64,
    pub sync_interval: u64,
    pub seed: Option<u64>,
    pub snapshot_every: u64,
    pub adjacency: Adjacency,
    pub out_dir: String,
}

/// Serialized form of the tolerance assignment mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToleranceModeKey {
    Fixed,
    UniformRandom,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            width: 50,
            height: 50,
            occupancy: 0.5,
            window: 5,
            topology: Topology::Torus,
            tolerance_mode: ToleranceModeKey::UniformRandom,
            alpha: 1.0,
            move_cost: 0.3,
            stay_penalty: 1.0,
            survival_bonus: 0.1,
            death_penalty: 1.0,
            victim_penalty: 1.0,
            cost_on_stay: false,
            gamma: 0.99,
            batch: 256,
            lr: 0.001,
            hidden1: 64,
            hidden2: 64,
            train_iterations: 3000,
            eval_iterations: 1000,
            buffer: 1_000_000,
            eps_start: 0.9,
            eps_end: 0.0,
            eps_decay: 100_000,
            sync_interval: 500,
            seed: None,
            snapshot_every: 100,
            adjacency: Adjacency::Moore,
            out_dir: "out".to_string(),
        }
    }
}

impl ExperimentConfig {
    /// Parse a config file over the defaults.
    pub fn from_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_str_over_defaults(&text)
    }

    pub fn from_str_over_defaults(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut config = ExperimentConfig::default();
        config.apply_str(text)?;
        Ok(config)
    }

    /// Apply `key=value` lines to this config.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::MalformedLine { line: i + 1, text: line.to_string() });
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Set a single key. Used for file lines and `--set` overrides alike.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(
            key: &str,
            value: &str,
            expect: &'static str,
        ) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                expect,
            })
        }
        match key {
            "width" => self.width = parse(key, value, "positive integer")?,
            "height" => self.height = parse(key, value, "positive integer")?,
            "occupancy" => self.occupancy = parse(key, value, "number in (0,1)")?,
            "window" => self.window = parse(key, value, "odd integer >= 3")?,
            "topology" => {
                self.topology = match value {
                    "torus" => Topology::Torus,
                    "clamped" => Topology::Clamped,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            expect: "torus|clamped",
                        })
                    }
                }
            }
            "tolerance_mode" => {
                self.tolerance_mode = match value {
                    "fixed" => ToleranceModeKey::Fixed,
                    "uniform_random" => ToleranceModeKey::UniformRandom,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            expect: "fixed|uniform_random",
                        })
                    }
                }
            }
            "alpha" => self.alpha = parse(key, value, "0, 0.5 or 1")?,
            "move_cost" => self.move_cost = parse(key, value, "number >= 0")?,
            "stay_penalty" => self.stay_penalty = parse(key, value, "number >= 0")?,
            "survival_bonus" => self.survival_bonus = parse(key, value, "number >= 0")?,
            "death_penalty" => self.death_penalty = parse(key, value, "number >= 0")?,
            "victim_penalty" => self.victim_penalty = parse(key, value, "number >= 0")?,
            "cost_on_stay" => self.cost_on_stay = parse(key, value, "true|false")?,
            "gamma" => self.gamma = parse(key, value, "number in [0,1]")?,
            "batch" => self.batch = parse(key, value, "positive integer")?,
            "lr" => self.lr = parse(key, value, "positive number")?,
            "hidden1" => self.hidden1 = parse(key, value, "positive integer")?,
            "hidden2" => self.hidden2 = parse(key, value, "positive integer")?,
            "train_iterations" => self.train_iterations = parse(key, value, "integer")?,
            "eval_iterations" => self.eval_iterations = parse(key, value, "integer")?,
            "buffer" => self.buffer = parse(key, value, "positive integer")?,
            "eps_start" => self.eps_start = parse(key, value, "number in [0,1]")?,
            "eps_end" => self.eps_end = parse(key, value, "number in [0,1]")?,
            "eps_decay" => self.eps_decay = parse(key, value, "positive integer")?,
            "sync_interval" => self.sync_interval = parse(key, value, "positive integer")?,
            "seed" => self.seed = Some(parse(key, value, "u64")?),
            "snapshot_every" => self.snapshot_every = parse(key, value, "integer (0 disables)")?,
            "adjacency" => {
                self.adjacency = match value {
                    "moore" => Adjacency::Moore,
                    "von_neumann" => Adjacency::VonNeumann,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            expect: "moore|von_neumann",
                        })
                    }
                }
            }
            "out_dir" => self.out_dir = value.to_string(),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Validate cross-field constraints and the mandatory seed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seed.is_none() {
            return Err(ConfigError::MissingSeed);
        }
        self.env_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid(msg.to_string()))
            }
        };
        check(self.move_cost >= 0.0 && self.move_cost.is_finite(), "move_cost must be >= 0")?;
        check(self.stay_penalty >= 0.0, "stay_penalty must be >= 0")?;
        check(self.survival_bonus >= 0.0, "survival_bonus must be >= 0")?;
        check(self.death_penalty >= 0.0, "death_penalty must be >= 0")?;
        check(self.victim_penalty >= 0.0, "victim_penalty must be >= 0")?;
        check((0.0..=1.0).contains(&self.gamma), "gamma must lie in [0,1]")?;
        check(self.batch > 0, "batch must be positive")?;
        check(self.lr > 0.0 && self.lr.is_finite(), "lr must be positive")?;
        check(self.hidden1 > 0 && self.hidden2 > 0, "hidden sizes must be positive")?;
        check(self.buffer >= self.batch, "buffer must hold at least one batch")?;
        check((0.0..=1.0).contains(&self.eps_start), "eps_start must lie in [0,1]")?;
        check((0.0..=1.0).contains(&self.eps_end), "eps_end must lie in [0,1]")?;
        check(self.eps_decay > 0, "eps_decay must be positive")?;
        check(self.sync_interval > 0, "sync_interval must be positive")?;
        Ok(())
    }

    /// The environment slice of the config.
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            width: self.width,
            height: self.height,
            occupancy: self.occupancy,
            window: self.window,
            topology: self.topology,
            tolerance_mode: match self.tolerance_mode {
                ToleranceModeKey::Fixed => ToleranceMode::Fixed(self.alpha),
                ToleranceModeKey::UniformRandom => ToleranceMode::UniformRandom,
            },
        }
    }

    pub fn reward_params(&self) -> crate::env::RewardParams {
        crate::env::RewardParams {
            move_cost: self.move_cost,
            stay_penalty: self.stay_penalty,
            survival_bonus: self.survival_bonus,
            death_penalty: self.death_penalty,
            victim_penalty: self.victim_penalty,
            cost_on_stay: self.cost_on_stay,
        }
    }

    /// Canonical text form: every key on its own line, fixed order,
    /// reparses to an identical config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "height={}", self.height);
        let _ = writeln!(s, "occupancy={}", self.occupancy);
        let _ = writeln!(s, "window={}", self.window);
        let _ = writeln!(
            s,
            "topology={}",
            match self.topology {
                Topology::Torus => "torus",
                Topology::Clamped => "clamped",
            }
        );
        let _ = writeln!(
            s,
            "tolerance_mode={}",
            match self.tolerance_mode {
                ToleranceModeKey::Fixed => "fixed",
                ToleranceModeKey::UniformRandom => "uniform_random",
            }
        );
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "move_cost={}", self.move_cost);
        let _ = writeln!(s, "stay_penalty={}", self.stay_penalty);
        let _ = writeln!(s, "survival_bonus={}", self.survival_bonus);
        let _ = writeln!(s, "death_penalty={}", self.death_penalty);
        let _ = writeln!(s, "victim_penalty={}", self.victim_penalty);
        let _ = writeln!(s, "cost_on_stay={}", self.cost_on_stay);
        let _ = writeln!(s, "gamma={}", self.gamma);
        let _ = writeln!(s, "batch={}", self.batch);
        let _ = writeln!(s, "lr={}", self.lr);
        let _ = writeln!(s, "hidden1={}", self.hidden1);
        let _ = writeln!(s, "hidden2={}", self.hidden2);
        let _ = writeln!(s, "train_iterations={}", self.train_iterations);
        let _ = writeln!(s, "eval_iterations={}", self.eval_iterations);
        let _ = writeln!(s, "buffer={}", self.buffer);
        let _ = writeln!(s, "eps_start={}", self.eps_start);
        let _ = writeln!(s, "eps_end={}", self.eps_end);
        let _ = writeln!(s, "eps_decay={}", self.eps_decay);
        let _ = writeln!(s, "sync_interval={}", self.sync_interval);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed={}", seed);
        }
        let _ = writeln!(s, "snapshot_every={}", self.snapshot_every);
        let _ = writeln!(
            s,
            "adjacency={}",
            match self.adjacency {
                Adjacency::Moore => "moore",
                Adjacency::VonNeumann => "von_neumann",
            }
        );
        let _ = writeln!(s, "out_dir={}", self.out_dir);
        s
    }
}
