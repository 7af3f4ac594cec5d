//! Command line interface.
//!
//! Verbs:
//!
//! * `train --config PATH [--set KEY=VALUE]... --out DIR`
//! * `sweep --config PATH --seeds N --out DIR`
//! * `render --snapshot PATH --out PATH`
//! * `validate-config --config PATH`
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime
//! failure. No environment variables are consulted.

use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::experiment::{run_simulation, run_sweep, write_outputs};
use crate::snapshot::{parse_snapshot, snapshot_to_pgm};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const USAGE: &str = "\
usage: segsim <verb> [flags]

verbs:
  train            run one simulation and write its outputs
                   flags: --config PATH [--set KEY=VALUE]... --out DIR
  sweep            run the tolerance x moving-cost grid (alpha in {0,0.5,1},
                   cost in {0.3,0.6,0.9}) with N replicate seeds per cell
                   flags: --config PATH --seeds N --out DIR
  render           convert a snapshot text file to a PGM image
                   (empty=white, A=black, B=mid-gray)
                   flags: --snapshot PATH --out PATH
  validate-config  parse a config, fill defaults, and echo it without running
                   flags: --config PATH
";

/// A parsed invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Train { config: PathBuf, sets: Vec<(String, String)>, out: PathBuf },
    Sweep { config: PathBuf, seeds: u64, out: PathBuf },
    Render { snapshot: PathBuf, out: PathBuf },
    ValidateConfig { config: PathBuf },
}

fn usage_error(message: &str) -> String {
    format!("error: {message}\n\n{USAGE}")
}

/// Parse `argv` (without the program name).
pub fn parse_args(args: &[String]) -> Result<Command, String> {
    let Some(verb) = args.first() else {
        return Err(usage_error("missing verb"));
    };

    let mut config: Option<PathBuf> = None;
    let mut out: Option<PathBuf> = None;
    let mut snapshot: Option<PathBuf> = None;
    let mut seeds: Option<u64> = None;
    let mut sets: Vec<(String, String)> = Vec::new();

    let mut i = 1;
    while i < args.len() {
        let flag = args[i].as_str();
        let value = args.get(i + 1).ok_or_else(|| usage_error(&format!("{flag} needs a value")))?;
        match flag {
            "--config" => config = Some(PathBuf::from(value)),
            "--out" => out = Some(PathBuf::from(value)),
            "--snapshot" => snapshot = Some(PathBuf::from(value)),
            "--seeds" => {
                seeds = Some(
                    value
                        .parse()
                        .map_err(|_| usage_error(&format!("--seeds expects an integer, got `{value}`")))?,
                )
            }
            "--set" => {
                let (k, v) = value
                    .split_once('=')
                    .ok_or_else(|| usage_error(&format!("--set expects KEY=VALUE, got `{value}`")))?;
                sets.push((k.trim().to_string(), v.trim().to_string()));
            }
            _ => return Err(usage_error(&format!("unknown flag `{flag}` for `{verb}`"))),
        }
        i += 2;
    }

    let need = |opt: Option<PathBuf>, flag: &str| {
        opt.ok_or_else(|| usage_error(&format!("`{verb}` requires {flag}")))
    };
    match verb.as_str() {
        "train" => Ok(Command::Train {
            config: need(config, "--config")?,
            sets,
            out: need(out, "--out")?,
        }),
        "sweep" => Ok(Command::Sweep {
            config: need(config, "--config")?,
            seeds: seeds.ok_or_else(|| usage_error("`sweep` requires --seeds N"))?,
            out: need(out, "--out")?,
        }),
        "render" => Ok(Command::Render {
            snapshot: need(snapshot, "--snapshot")?,
            out: need(out, "--out")?,
        }),
        "validate-config" => Ok(Command::ValidateConfig { config: need(config, "--config")? }),
        other => Err(usage_error(&format!("unknown verb `{other}`"))),
    }
}

/// Load a config file, apply `--set` overrides (command line wins over the
/// file, the file over defaults), and optionally redirect the output dir.
fn resolve_config(
    path: &Path,
    sets: &[(String, String)],
    out: Option<&Path>,
) -> Result<ExperimentConfig, String> {
    let mut config = ExperimentConfig::from_file(path).map_err(|e| e.to_string())?;
    for (key, value) in sets {
        config.set(key, value).map_err(|e| e.to_string())?;
    }
    if let Some(dir) = out {
        config.out_dir = dir.to_string_lossy().into_owned();
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

/// Figure-defaults for the sweep axes.
pub const SWEEP_ALPHAS: [f64; 3] = [0.0, 0.5, 1.0];
pub const SWEEP_COSTS: [f64; 3] = [0.3, 0.6, 0.9];

/// Execute a command; returns the process exit code and writes any error to
/// stderr. The resolved config is echoed to stdout before a run starts.
pub fn run(args: &[String]) -> i32 {
    let command = match parse_args(args) {
        Ok(c) => c,
        Err(message) => {
            eprintln!("{message}");
            return EXIT_USAGE;
        }
    };

    match command {
        Command::Train { config, sets, out } => {
            let config = match resolve_config(&config, &sets, Some(&out)) {
                Ok(c) => c,
                Err(message) => {
                    eprintln!("error: {message}");
                    return EXIT_USAGE;
                }
            };
            print!("{}", config.echo());
            let result = match run_simulation(&config) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_RUNTIME;
                }
            };
            if let Err(e) = write_outputs(&result, &config) {
                eprintln!("error: {e}");
                return EXIT_RUNTIME;
            }
            println!("wrote {} iterations to {}", result.metrics.len(), config.out_dir);
            EXIT_OK
        }
        Command::Sweep { config, seeds, out } => {
            if seeds == 0 {
                eprintln!("{}", usage_error("--seeds must be at least 1"));
                return EXIT_USAGE;
            }
            let base = match resolve_config(&config, &[], Some(&out)) {
                Ok(c) => c,
                Err(message) => {
                    eprintln!("error: {message}");
                    return EXIT_USAGE;
                }
            };
            print!("{}", base.echo());
            let seed_indices: Vec<u64> = (0..seeds).collect();
            match run_sweep(&base, &SWEEP_ALPHAS, &SWEEP_COSTS, &seed_indices) {
                Ok(summary) => {
                    let failed = summary.rows.iter().filter(|r| r.outcome.is_err()).count();
                    println!(
                        "swept {} cells ({} failed); summary at {}/summary.csv",
                        summary.rows.len(),
                        failed,
                        base.out_dir
                    );
                    if failed == 0 {
                        EXIT_OK
                    } else {
                        EXIT_RUNTIME
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_RUNTIME
                }
            }
        }
        Command::Render { snapshot, out } => {
            let text = match std::fs::read_to_string(&snapshot) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", snapshot.display());
                    return EXIT_RUNTIME;
                }
            };
            let parsed = match parse_snapshot(&text) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            if let Err(e) = std::fs::write(&out, snapshot_to_pgm(&parsed)) {
                eprintln!("error: cannot write {}: {e}", out.display());
                return EXIT_RUNTIME;
            }
            EXIT_OK
        }
        Command::ValidateConfig { config } => match resolve_config(&config, &[], None) {
            Ok(c) => {
                print!("{}", c.echo());
                EXIT_OK
            }
            Err(message) => {
                eprintln!("error: {message}");
                EXIT_USAGE
            }
        },
    }
}
