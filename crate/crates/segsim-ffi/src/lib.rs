//! C ABI over the simulator: configuration handles, full runs, metric
//! access, and snapshot export. The generated header lives at
//! `include/segsim.h`.
//!
//! Conventions:
//!
//! * Handles (`SegConfig`, `SegRun`) are opaque; create/free in pairs.
//! * Fallible calls return [`SegStatus`] (or NULL for constructors) and
//!   store a message retrievable with [`seg_last_error`] on the calling
//!   thread.
//! * Strings cross the boundary as NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use segsim::config::{ConfigError, ExperimentConfig};
use segsim::experiment::{run_simulation, write_outputs, RunError, RunResult};
use segsim::grid::Pos;

/// Result codes for fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument was malformed (bad UTF-8, out-of-range index, ...).
    InvalidArgument = 2,
    /// The configuration failed to parse or validate.
    Config = 3,
    /// A filesystem operation failed.
    Io = 4,
    /// The simulation itself failed.
    Runtime = 5,
}

/// Per-iteration metric selector for [`seg_run_metric`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegMetric {
    SameTypeFraction = 0,
    InterfaceDensity = 1,
    MeanRewardA = 2,
    MeanRewardB = 3,
    Deaths = 4,
    Kills = 5,
    Epsilon = 6,
}

/// Opaque configuration handle.
pub struct SegConfig(ExperimentConfig);

/// Opaque handle over a finished run.
pub struct SegRun(RunResult, ExperimentConfig);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of_run_error(e: &RunError) -> SegStatus {
    match e {
        RunError::Config(_) => SegStatus::Config,
        RunError::Io { .. } => SegStatus::Io,
        _ => SegStatus::Runtime,
    }
}

/// # Safety
/// `ptr` must be NULL or a valid NUL-terminated string.
unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, SegStatus> {
    if ptr.is_null() {
        set_error("argument is NULL".to_string());
        return Err(SegStatus::NullPointer);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("argument is not UTF-8".to_string());
        SegStatus::InvalidArgument
    })
}

/// Message describing the most recent failure on this thread, or NULL if
/// none. The pointer stays valid until the next failing call on the same
/// thread.
#[no_mangle]
pub extern "C" fn seg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn seg_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// New configuration with all defaults (seed unset). Free with
/// [`seg_config_free`].
#[no_mangle]
pub extern "C" fn seg_config_new() -> *mut SegConfig {
    clear_error();
    Box::into_raw(Box::new(SegConfig(ExperimentConfig::default())))
}

/// Parse a config file over the defaults; NULL on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn seg_config_from_file(path: *const c_char) -> *mut SegConfig {
    clear_error();
    let Ok(path) = (unsafe { str_arg(path) }) else { return ptr::null_mut() };
    match ExperimentConfig::from_file(Path::new(path)) {
        Ok(config) => Box::into_raw(Box::new(SegConfig(config))),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Set one configuration key (same names as the config file format).
///
/// # Safety
/// `config` must come from a `seg_config_*` constructor; `key` and `value`
/// must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn seg_config_set(
    config: *mut SegConfig,
    key: *const c_char,
    value: *const c_char,
) -> SegStatus {
    clear_error();
    let Some(config) = (unsafe { config.as_mut() }) else {
        set_error("config handle is NULL".to_string());
        return SegStatus::NullPointer;
    };
    let key = match unsafe { str_arg(key) } {
        Ok(k) => k,
        Err(status) => return status,
    };
    let value = match unsafe { str_arg(value) } {
        Ok(v) => v,
        Err(status) => return status,
    };
    match config.0.set(key, value) {
        Ok(()) => SegStatus::Ok,
        Err(e @ ConfigError::UnknownKey(_)) => {
            set_error(e.to_string());
            SegStatus::InvalidArgument
        }
        Err(e) => {
            set_error(e.to_string());
            SegStatus::Config
        }
    }
}

/// Write the fully resolved configuration as NUL-terminated text into
/// `buffer` (truncating if needed) and return the untruncated length.
///
/// # Safety
/// `config` must be a live handle; `buffer` must point at `len` writable
/// bytes (or be NULL with `len` 0 to query the size).
#[no_mangle]
pub unsafe extern "C" fn seg_config_echo(
    config: *const SegConfig,
    buffer: *mut c_char,
    len: usize,
) -> usize {
    let Some(config) = (unsafe { config.as_ref() }) else { return 0 };
    let echo = config.0.echo();
    let bytes = echo.as_bytes();
    if !buffer.is_null() && len > 0 {
        let n = bytes.len().min(len - 1);
        unsafe {
            ptr::copy_nonoverlapping(bytes.as_ptr(), buffer.cast(), n);
            *buffer.add(n) = 0;
        }
    }
    bytes.len() + 1
}

/// # Safety
/// `config` must be NULL or a pointer from a `seg_config_*` constructor;
/// it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn seg_config_free(config: *mut SegConfig) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Run a full simulation (training plus evaluation). Returns a run handle,
/// or NULL with an error message.
///
/// # Safety
/// `config` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn seg_run(config: *const SegConfig) -> *mut SegRun {
    clear_error();
    let Some(config) = (unsafe { config.as_ref() }) else {
        set_error("config handle is NULL".to_string());
        return ptr::null_mut();
    };
    match run_simulation(&config.0) {
        Ok(result) => Box::into_raw(Box::new(SegRun(result, config.0.clone()))),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Number of recorded iterations in a run.
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn seg_run_iterations(run: *const SegRun) -> u64 {
    unsafe { run.as_ref() }.map_or(0, |r| r.0.metrics.len() as u64)
}

/// Read one metric of one iteration into `out`.
///
/// # Safety
/// `run` must be a live run handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seg_run_metric(
    run: *const SegRun,
    iteration: u64,
    metric: SegMetric,
    out: *mut f64,
) -> SegStatus {
    clear_error();
    let Some(run) = (unsafe { run.as_ref() }) else {
        set_error("run handle is NULL".to_string());
        return SegStatus::NullPointer;
    };
    let Some(out) = (unsafe { out.as_mut() }) else {
        set_error("out pointer is NULL".to_string());
        return SegStatus::NullPointer;
    };
    let Some(record) = run.0.metrics.get(iteration as usize) else {
        set_error(format!(
            "iteration {iteration} out of range ({} recorded)",
            run.0.metrics.len()
        ));
        return SegStatus::InvalidArgument;
    };
    *out = match metric {
        SegMetric::SameTypeFraction => record.same_type_fraction,
        SegMetric::InterfaceDensity => record.interface_density,
        SegMetric::MeanRewardA => record.mean_reward_a,
        SegMetric::MeanRewardB => record.mean_reward_b,
        SegMetric::Deaths => record.deaths as f64,
        SegMetric::Kills => record.kills as f64,
        SegMetric::Epsilon => record.epsilon,
    };
    SegStatus::Ok
}

/// Final grid dimensions.
///
/// # Safety
/// `run` must be a live run handle; `width`/`height` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seg_run_grid_size(
    run: *const SegRun,
    width: *mut u32,
    height: *mut u32,
) -> SegStatus {
    let Some(run) = (unsafe { run.as_ref() }) else { return SegStatus::NullPointer };
    if width.is_null() || height.is_null() {
        return SegStatus::NullPointer;
    }
    unsafe {
        *width = run.0.final_grid.width();
        *height = run.0.final_grid.height();
    }
    SegStatus::Ok
}

/// Final cell contents at (x, y): 0 empty, 1 type A, 2 type B; -1 on a bad
/// handle or coordinates.
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn seg_run_cell(run: *const SegRun, x: u32, y: u32) -> i32 {
    let Some(run) = (unsafe { run.as_ref() }) else { return -1 };
    let grid = &run.0.final_grid;
    if x >= grid.width() || y >= grid.height() {
        return -1;
    }
    match grid.cell(Pos::new(x, y)) {
        None => 0,
        Some(id) => match grid.agent(id).expect("live agent").kind {
            segsim::grid::AgentKind::A => 1,
            segsim::grid::AgentKind::B => 2,
        },
    }
}

/// Persist the run's outputs under the directory its configuration names
/// (metrics CSV, snapshots, checkpoints, config echo).
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn seg_run_save(run: *const SegRun) -> SegStatus {
    clear_error();
    let Some(run) = (unsafe { run.as_ref() }) else {
        set_error("run handle is NULL".to_string());
        return SegStatus::NullPointer;
    };
    match write_outputs(&run.0, &run.1) {
        Ok(()) => SegStatus::Ok,
        Err(e) => {
            let status = status_of_run_error(&e);
            set_error(e.to_string());
            status
        }
    }
}

/// # Safety
/// `run` must be NULL or a pointer from [`seg_run`]; it must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn seg_run_free(run: *mut SegRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}
