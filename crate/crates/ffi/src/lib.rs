//! C interface to `bubbly-core`.
//!
//! Objects are opaque handles created by `bubbly_*_new`/`bubbly_*_load`/
//! solver calls and released with the matching `*_free`. Every fallible call
//! returns a [`BubblyStatus`]; on failure, [`bubbly_last_error_message`]
//! describes the error for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use bubbly_core::bubble_solver::{scattered_field, solve_coupled, TrajectorySet};
use bubbly_core::config::ExperimentConfig;
use bubbly_core::harness::{emit_outputs, point_source, run_comparison, setup_delta, ComparisonResult};
use bubbly_core::placement::BubbleCloud;
use bubbly_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BubblyStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidInput = 4,
    Infeasible = 5,
    SolverFailure = 6,
    Io = 7,
    /// The requested quantity does not exist (e.g. a rate fit with too few entries).
    Unavailable = 8,
    Panic = 9,
}

pub struct BubblyConfig(ExperimentConfig);
pub struct BubblyCloud(BubbleCloud);
pub struct BubblyTrajectories(TrajectorySet);
pub struct BubblyComparison(ComparisonResult);

/// One sweep entry. Errors are NaN for entries skipped by the cost budget.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubblyEntry {
    pub delta: f64,
    pub m: usize,
    pub d: f64,
    pub eps: f64,
    pub e_max: f64,
    pub e_l2: f64,
    pub runtime_s: f64,
    /// 1 when C1 to C3 hold.
    pub conditions_pass: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> BubblyStatus {
    match e {
        Error::Config(_) | Error::Parse { .. } => BubblyStatus::InvalidConfig,
        Error::InvalidInput(_) | Error::PointInside(_) => BubblyStatus::InvalidInput,
        Error::Infeasible { .. } => BubblyStatus::Infeasible,
        Error::StepTooLarge { .. } | Error::NonFinite { .. } | Error::NoConvergence { .. } | Error::Singular { .. } => {
            BubblyStatus::SolverFailure
        }
        Error::AtDelta { source, .. } => status_of(source),
        Error::Io(_) => BubblyStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (BubblyStatus, String)>) -> BubblyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BubblyStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            BubblyStatus::Panic
        }
    }
}

fn core<T>(r: bubbly_core::Result<T>) -> Result<T, (BubblyStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (BubblyStatus, String) {
    (BubblyStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, (BubblyStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (BubblyStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, (BubblyStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (BubblyStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (BubblyStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bubbly_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn bubbly_status_name(status: BubblyStatus) -> *const c_char {
    let s: &'static CStr = match status {
        BubblyStatus::Ok => c"ok",
        BubblyStatus::NullPointer => c"null pointer",
        BubblyStatus::InvalidUtf8 => c"invalid utf-8",
        BubblyStatus::InvalidConfig => c"invalid config",
        BubblyStatus::InvalidInput => c"invalid input",
        BubblyStatus::Infeasible => c"infeasible placement",
        BubblyStatus::SolverFailure => c"solver failure",
        BubblyStatus::Io => c"i/o error",
        BubblyStatus::Unavailable => c"unavailable",
        BubblyStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Built-in default configuration. Never returns null.
#[no_mangle]
pub extern "C" fn bubbly_config_new() -> *mut BubblyConfig {
    Box::into_raw(Box::new(BubblyConfig(ExperimentConfig::default())))
}

/// Parses a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bubbly_config_from_toml(toml: *const c_char, out: *mut *mut BubblyConfig) -> BubblyStatus {
    guard(|| {
        let text = string(toml, "toml")?;
        let cfg = core(ExperimentConfig::from_toml_str(text))?;
        put(out, BubblyConfig(cfg))
    })
}

/// Reads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bubbly_config_load(path: *const c_char, out: *mut *mut BubblyConfig) -> BubblyStatus {
    guard(|| {
        let path = string(path, "path")?;
        let cfg = core(ExperimentConfig::load(Path::new(path)))?;
        put(out, BubblyConfig(cfg))
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bubbly_config_free(cfg: *mut BubblyConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a valid configuration handle.
#[no_mangle]
pub unsafe extern "C" fn bubbly_config_set_seed(cfg: *mut BubblyConfig, seed: u64) -> BubblyStatus {
    guard(|| {
        borrow_mut(cfg, "config")?.0.seed = seed;
        Ok(())
    })
}

/// Replaces the bubble sizes of the sweep; they must be strictly decreasing.
///
/// # Safety
/// `cfg` must be a valid handle and `deltas` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bubbly_config_set_deltas(cfg: *mut BubblyConfig, deltas: *const f64, len: usize) -> BubblyStatus {
    guard(|| {
        let cfg = borrow_mut(cfg, "config")?;
        if deltas.is_null() && len > 0 {
            return Err(null("deltas"));
        }
        let mut next = cfg.0.clone();
        next.deltas = if len == 0 { vec![] } else { std::slice::from_raw_parts(deltas, len).to_vec() };
        core(next.validate())?;
        cfg.0 = next;
        Ok(())
    })
}

/// Sets the end of the simulated time window.
///
/// # Safety
/// `cfg` must be a valid configuration handle.
#[no_mangle]
pub unsafe extern "C" fn bubbly_config_set_t_end(cfg: *mut BubblyConfig, t_end: f64) -> BubblyStatus {
    guard(|| {
        let cfg = borrow_mut(cfg, "config")?;
        let mut next = cfg.0.clone();
        next.times.t_end = t_end;
        core(next.validate())?;
        cfg.0 = next;
        Ok(())
    })
}

/// Builds the bubble cloud of one bubble size.
///
/// # Safety
/// `cfg` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bubbly_cloud_generate(cfg: *const BubblyConfig, delta: f64, out: *mut *mut BubblyCloud) -> BubblyStatus {
    guard(|| {
        let cfg = borrow(cfg, "config")?;
        let setup = core(setup_delta(&cfg.0, delta))?;
        put(out, BubblyCloud(setup.cloud))
    })
}

/// Number of bubbles; 0 for null.
///
/// # Safety
/// `cloud` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn bubbly_cloud_len(cloud: *const BubblyCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// Copies the centres as x, y, z triples into `xyz` (capacity `cap` doubles).
///
/// # Safety
/// `cloud` must be a valid handle and `xyz` point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bubbly_cloud_centers(cloud: *const BubblyCloud, xyz: *mut f64, cap: usize) -> BubblyStatus {
    guard(|| {
        let cloud = borrow(cloud, "cloud")?;
        let need = 3 * cloud.0.len();
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        if cap < need {
            return Err((BubblyStatus::InvalidInput, format!("buffer holds {cap} doubles, {need} needed")));
        }
        let dst = std::slice::from_raw_parts_mut(xyz, need);
        for (chunk, c) in dst.chunks_exact_mut(3).zip(&cloud.0.centers) {
            chunk.copy_from_slice(c);
        }
        Ok(())
    })
}

/// # Safety
/// `cloud` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bubbly_cloud_free(cloud: *mut BubblyCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Solves the discrete system for one bubble size.
///
/// # Safety
/// `cfg` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bubbly_solve_bubbles(cfg: *const BubblyConfig, delta: f64, out: *mut *mut BubblyTrajectories) -> BubblyStatus {
    guard(|| {
        let cfg = borrow(cfg, "config")?;
        let setup = core(setup_delta(&cfg.0, delta))?;
        let src = core(point_source(&cfg.0))?;
        let traj = core(solve_coupled(&setup.system, &src, &setup.time))?;
        put(out, BubblyTrajectories(traj))
    })
}

/// Number of bubbles in a solution; 0 for null.
///
/// # Safety
/// `traj` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn bubbly_trajectories_len(traj: *const BubblyTrajectories) -> usize {
    traj.as_ref().map_or(0, |t| t.0.len())
}

/// Y_i(t), interpolated; zero before the incident wave arrives.
///
/// # Safety
/// `traj` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bubbly_trajectories_y(traj: *const BubblyTrajectories, i: usize, t: f64, out: *mut f64) -> BubblyStatus {
    guard(|| {
        let traj = borrow(traj, "trajectories")?;
        if i >= traj.0.len() {
            return Err((BubblyStatus::InvalidInput, format!("bubble {i} out of range")));
        }
        *borrow_mut(out, "out")? = traj.0.y(i, t);
        Ok(())
    })
}

/// Scattered field at a point outside the cloud.
///
/// # Safety
/// `traj` must be a valid handle, `x` point to three doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn bubbly_trajectories_scattered(
    traj: *const BubblyTrajectories,
    x: *const f64,
    t: f64,
    out: *mut f64,
) -> BubblyStatus {
    guard(|| {
        let traj = borrow(traj, "trajectories")?;
        if x.is_null() {
            return Err(null("x"));
        }
        let p = [*x, *x.add(1), *x.add(2)];
        *borrow_mut(out, "out")? = core(scattered_field(&traj.0, p, t))?;
        Ok(())
    })
}

/// # Safety
/// `traj` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bubbly_trajectories_free(traj: *mut BubblyTrajectories) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Runs the discrete-versus-effective comparison over the configured sizes.
///
/// # Safety
/// `cfg` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bubbly_run_comparison(cfg: *const BubblyConfig, out: *mut *mut BubblyComparison) -> BubblyStatus {
    guard(|| {
        let cfg = borrow(cfg, "config")?;
        let r = core(run_comparison(&cfg.0))?;
        put(out, BubblyComparison(r))
    })
}

/// Number of sweep entries; 0 for null.
///
/// # Safety
/// `cmp` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn bubbly_comparison_len(cmp: *const BubblyComparison) -> usize {
    cmp.as_ref().map_or(0, |c| c.0.entries.len())
}

/// # Safety
/// `cmp` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bubbly_comparison_entry(cmp: *const BubblyComparison, k: usize, out: *mut BubblyEntry) -> BubblyStatus {
    guard(|| {
        let cmp = borrow(cmp, "comparison")?;
        let e = cmp
            .0
            .entries
            .get(k)
            .ok_or_else(|| (BubblyStatus::InvalidInput, format!("entry {k} out of range")))?;
        *borrow_mut(out, "out")? = BubblyEntry {
            delta: e.delta,
            m: e.m,
            d: e.d,
            eps: e.eps,
            e_max: e.e_max,
            e_l2: e.e_l2,
            runtime_s: e.runtime_s,
            conditions_pass: e.conditions.invertibility_pass() as i32,
        };
        Ok(())
    })
}

/// Fitted log-log slope and intercept; `Unavailable` when fewer than three
/// entries have a positive error.
///
/// # Safety
/// `cmp` must be a valid handle; `slope` and `intercept` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bubbly_comparison_fit(cmp: *const BubblyComparison, slope: *mut f64, intercept: *mut f64) -> BubblyStatus {
    guard(|| {
        let cmp = borrow(cmp, "comparison")?;
        let fit = cmp
            .0
            .fit
            .ok_or_else(|| (BubblyStatus::Unavailable, "rate fit needs three positive errors".to_string()))?;
        *borrow_mut(slope, "slope")? = fit.slope;
        *borrow_mut(intercept, "intercept")? = fit.intercept;
        Ok(())
    })
}

/// Writes errors.csv, conditions.csv, rate_plot.csv and the probe files.
///
/// # Safety
/// `cmp` must be a valid handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bubbly_comparison_write(cmp: *const BubblyComparison, dir: *const c_char) -> BubblyStatus {
    guard(|| {
        let cmp = borrow(cmp, "comparison")?;
        let dir = string(dir, "dir")?;
        core(emit_outputs(&cmp.0, Path::new(dir)))
    })
}

/// # Safety
/// `cmp` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bubbly_comparison_free(cmp: *mut BubblyComparison) {
    if !cmp.is_null() {
        drop(Box::from_raw(cmp));
    }
}
