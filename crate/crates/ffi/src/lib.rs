//! C ABI over `mfg-core`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Every fallible call returns an [`MfgStatus`]; the text
//! of the last error on the calling thread is available through
//! [`mfg_last_error`]. Output buffers are caller-allocated with explicit
//! lengths.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mfg_core::cgo::{verify_decay, CgoOptions};
use mfg_core::commands::{self, Context};
use mfg_core::config::RunConfig;
use mfg_core::forward::{build_stationary_baseline, StationarySolution};
use mfg_core::inverse::stationary::{forward_reduced, invert_fourier, probe_plan, probing_record, recover_fourier_samples};
use mfg_core::{Error, Grid, GridSpec};

#[repr(i32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MfgStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad grid, lengths, configuration, expression or archive.
    InvalidInput = 2,
    /// A solver failed to converge or produced non-finite values.
    SolverFailure = 3,
    /// A verified property did not hold.
    PropertyViolation = 4,
    Panic = 5,
}

pub struct MfgGrid {
    inner: Grid,
}

pub struct MfgBaseline {
    inner: StationarySolution,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MfgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MfgStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            MfgStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            match e.exit_code() {
                2 => MfgStatus::InvalidInput,
                4 => MfgStatus::PropertyViolation,
                _ => MfgStatus::SolverFailure,
            }
        }
        Err(_) => {
            set_error("internal panic".into());
            MfgStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map(str::to_string).map_err(|_| Fail::Core(Error::Config(format!("{what} is not UTF-8"))))
}

fn expect_len(want: usize, got: usize) -> Result<(), Fail> {
    if want != got {
        return Err(Fail::Core(Error::ShapeMismatch { expected: want, got }));
    }
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`) and returns its full length in bytes.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mfg_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            ptr::copy_nonoverlapping(e.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Uniform grid on `[lower, upper]^dim` with `nx` interior nodes per axis and
/// `nt` time steps (`0` for stationary). Null `lower`/`upper` mean the unit box.
///
/// # Safety
/// `lower` and `upper` must be null or point to `dim` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mfg_grid_new(
    dim: usize,
    nx: usize,
    nt: usize,
    horizon: f64,
    lower: *const f64,
    upper: *const f64,
    out: *mut *mut MfgGrid,
) -> MfgStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let mut spec = GridSpec::unit_box(dim, nx, nt);
        spec.horizon = horizon;
        if !lower.is_null() {
            spec.lower = std::slice::from_raw_parts(lower, dim).to_vec();
        }
        if !upper.is_null() {
            spec.upper = std::slice::from_raw_parts(upper, dim).to_vec();
        }
        let g = Grid::new(spec)?;
        *out = Box::into_raw(Box::new(MfgGrid { inner: g }));
        Ok(())
    })
}

/// # Safety
/// `grid` must come from [`mfg_grid_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mfg_grid_free(grid: *mut MfgGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Spatial nodes, boundary included. Zero for a null handle.
///
/// # Safety
/// `grid` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn mfg_grid_npts(grid: *const MfgGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.inner.npts)
}

/// Time levels (`nt + 1`, or 1 when stationary).
///
/// # Safety
/// `grid` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn mfg_grid_nlev(grid: *const MfgGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.inner.nlev())
}

/// Boundary points per time level.
///
/// # Safety
/// `grid` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn mfg_grid_face_points(grid: *const MfgGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.inner.face_points())
}

/// Node coordinates as `npts` triples (unused axes are zero).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mfg_grid_coords(grid: *const MfgGrid, out: *mut f64, len: usize) -> MfgStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.inner;
        let out = slice_mut(out, len, "out")?;
        expect_len(3 * g.npts, len)?;
        for p in 0..g.npts {
            out[3 * p..3 * p + 3].copy_from_slice(&g.coords(p));
        }
        Ok(())
    })
}

/// Stationary baseline: the Gibbs density of `seed_v0`, or the constant state
/// when `seed_v0` is null.
///
/// # Safety
/// `seed_v0` must be null or point to `len` doubles; `grid` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mfg_baseline_new(
    grid: *const MfgGrid,
    seed_v0: *const f64,
    len: usize,
    out: *mut *mut MfgBaseline,
) -> MfgStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.inner;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let seed = if seed_v0.is_null() { None } else { Some(std::slice::from_raw_parts(seed_v0, len)) };
        let b = build_stationary_baseline(g, seed)?;
        *out = Box::into_raw(Box::new(MfgBaseline { inner: b }));
        Ok(())
    })
}

/// # Safety
/// `baseline` must come from [`mfg_baseline_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mfg_baseline_free(baseline: *mut MfgBaseline) {
    if !baseline.is_null() {
        drop(Box::from_raw(baseline));
    }
}

/// Ergodic constant of the baseline; NaN for a null handle.
///
/// # Safety
/// `baseline` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn mfg_baseline_lambda(baseline: *const MfgBaseline) -> f64 {
    baseline.as_ref().map_or(f64::NAN, |b| b.inner.lambda)
}

/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mfg_baseline_density(baseline: *const MfgBaseline, out: *mut f64, len: usize) -> MfgStatus {
    guard(|| {
        let b = &deref(baseline, "baseline")?.inner;
        let out = slice_mut(out, len, "out")?;
        expect_len(b.m0.len(), len)?;
        out.copy_from_slice(&b.m0);
        Ok(())
    })
}

/// Remainder sizes of complex geometric optics solutions of the reduced
/// stationary equation with coefficient `f1`, at frequency `2 pi k` and the
/// given radii. Writes `|omega|_2` per radius and the log-log slope.
///
/// # Safety
/// `f1` has `npts` values, `k` has `dim` values, `radii` and `omega_out` have `nr`.
#[no_mangle]
pub unsafe extern "C" fn mfg_remainder_decay(
    grid: *const MfgGrid,
    baseline: *const MfgBaseline,
    f1: *const f64,
    k: *const f64,
    radii: *const f64,
    nr: usize,
    omega_out: *mut f64,
    slope_out: *mut f64,
) -> MfgStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.inner;
        let b = &deref(baseline, "baseline")?.inner;
        let f1 = slice(f1, g.npts, "f1")?;
        let k: Vec<f64> = slice(k, g.dim(), "k")?.iter().map(|x| 2.0 * std::f64::consts::PI * x).collect();
        let radii = slice(radii, nr, "radii")?;
        let omega = slice_mut(omega_out, nr, "omega_out")?;
        if slope_out.is_null() {
            return Err(Fail::Null("slope_out"));
        }
        let eq = forward_reduced(g, b, f1)?;
        let rep = verify_decay(g, &eq, &k, radii, &CgoOptions::default(), true)?;
        for (o, row) in omega.iter_mut().zip(&rep.rows) {
            *o = row.omega_l2;
        }
        *slope_out = rep.slope;
        Ok(())
    })
}

/// Synthesises boundary records for the probe plan `(jmax, r)` with the true
/// coefficient `f1_true` and reconstructs it from those records alone.
///
/// # Safety
/// `f1_true` and `out` have `npts` values.
#[no_mangle]
pub unsafe extern "C" fn mfg_probe_and_recover_f1(
    grid: *const MfgGrid,
    baseline: *const MfgBaseline,
    f1_true: *const f64,
    jmax: i64,
    r: f64,
    out: *mut f64,
) -> MfgStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.inner;
        let b = &deref(baseline, "baseline")?.inner;
        let f1 = slice(f1_true, g.npts, "f1_true")?;
        let out = slice_mut(out, g.npts, "out")?;
        let opts = CgoOptions::default();
        let plan = probe_plan(g, jmax, r, 2.0 * std::f64::consts::PI * r);
        let recs = plan.iter().map(|p| probing_record(g, b, f1, p, &opts).map(|x| x.0)).collect::<Result<Vec<_>, _>>()?;
        let smp = recover_fourier_samples(g, b, &plan, &recs, &opts, true)?;
        out.copy_from_slice(&invert_fourier(g, &smp, b, 1e-6)?);
        Ok(())
    })
}

/// Runs one of `forward`, `linearize`, `probe`, `measure`, `reconstruct`,
/// `verify` with a TOML configuration, writing results under `out_dir`.
///
/// # Safety
/// `command`, `config_path` and `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mfg_run(
    command: *const c_char,
    config_path: *const c_char,
    out_dir: *const c_char,
    serial: bool,
) -> MfgStatus {
    guard(|| {
        let cmd = string(command, "command")?;
        let cfg = RunConfig::load(&PathBuf::from(string(config_path, "config_path")?))?;
        let ctx = Context { out: PathBuf::from(string(out_dir, "out_dir")?), parallel: !serial, ground_truth: None, archive: None };
        commands::execute(&cmd, Some(&cfg), cfg.seed, &ctx)?;
        Ok(())
    })
}
