//! C interface to the msvgd engine.
//!
//! Every function returns an [`MsvgdStatus`]. On failure the message of the
//! most recent error on the calling thread is available from
//! [`msvgd_last_error_message`]. Handles are opaque and must be released
//! with the matching `_free` function.
//!
//! Arrays are row-major `double` buffers with explicit lengths.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use msvgd::harness::{execute, parse_config, write_outputs, RunRecord, TargetSpec};
use msvgd::metrics::mmd_sq;
use msvgd::targets::TargetModel;
use msvgd::{Error, ParticleSet};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsvgdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    IndexOutOfRange = 4,
    InvalidInput = 10,
    Domain = 11,
    Config = 12,
    Validation = 13,
    Io = 14,
    Data = 15,
    Numerical = 16,
    Panic = 99,
}

/// A target density built from a kind name or a JSON target object.
pub struct MsvgdTarget {
    model: TargetModel,
}

/// A finished run: snapshots and the metrics document.
pub struct MsvgdRun {
    record: RunRecord,
    metrics_json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

enum Failure {
    Status(MsvgdStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn core_status(e: &Error) -> MsvgdStatus {
    match e {
        Error::InvalidInput(_) => MsvgdStatus::InvalidInput,
        Error::Domain(_) => MsvgdStatus::Domain,
        Error::Config(_) => MsvgdStatus::Config,
        Error::Validation { .. } => MsvgdStatus::Validation,
        Error::Io { .. } => MsvgdStatus::Io,
        Error::Data { .. } => MsvgdStatus::Data,
        Error::Numerical { .. } => MsvgdStatus::Numerical,
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> MsvgdStatus {
    let (status, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return MsvgdStatus::Ok,
        Ok(Err(Failure::Status(s, m))) => (s, m),
        Ok(Err(Failure::Core(e))) => (core_status(&e), format!("error[{}]: {e}", e.category())),
        Err(panic) => {
            let what = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (MsvgdStatus::Panic, format!("internal panic: {what}"))
        }
    };
    set_last_error(message);
    status
}

fn null(name: &str) -> Failure {
    Failure::Status(MsvgdStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure::Status(
            MsvgdStatus::InvalidUtf8,
            format!("`{name}` is not valid UTF-8"),
        )
    })
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(
    p: *mut f64,
    len: usize,
    needed: usize,
    name: &str,
) -> Result<&'a mut [f64], Failure> {
    if len < needed {
        return Err(Failure::Status(
            MsvgdStatus::BufferTooSmall,
            format!("`{name}` holds {len} values, {needed} needed"),
        ));
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn write_out<T>(p: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    p.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn msvgd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn msvgd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a target from `spec`: a kind name (`"star"`, `"sine"`,
/// `"double_banana"`, `"gaussian"`) or a JSON target object.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msvgd_target_new(
    spec: *const c_char,
    out: *mut *mut MsvgdTarget,
) -> MsvgdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = TargetSpec::parse(str_arg(spec, "spec")?)?;
        let (model, _) = spec.build()?;
        out.write(Box::into_raw(Box::new(MsvgdTarget { model })));
        Ok(())
    })
}

/// # Safety
/// `target` must come from [`msvgd_target_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msvgd_target_free(target: *mut MsvgdTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// # Safety
/// `target` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msvgd_target_dim(
    target: *const MsvgdTarget,
    out: *mut usize,
) -> MsvgdStatus {
    guard(|| {
        let t = handle(target, "target")?;
        write_out(out, t.model.dim(), "out")
    })
}

/// Unnormalized log density at `x` (length `dim`).
///
/// # Safety
/// `x` must point to `dim` readable values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn msvgd_target_log_density(
    target: *const MsvgdTarget,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> MsvgdStatus {
    guard(|| {
        let t = handle(target, "target")?;
        let x = slice_arg(x, dim, "x")?;
        write_out(out, t.model.log_density(x)?, "out")
    })
}

/// Gradient of the log density at `x`, written to `grad` (both length `dim`).
///
/// # Safety
/// `x` must point to `dim` readable values and `grad` to `dim` writable ones.
#[no_mangle]
pub unsafe extern "C" fn msvgd_target_grad(
    target: *const MsvgdTarget,
    x: *const f64,
    dim: usize,
    grad: *mut f64,
) -> MsvgdStatus {
    guard(|| {
        let t = handle(target, "target")?;
        let x = slice_arg(x, dim, "x")?;
        let g = t.model.grad_log_density(x)?;
        out_slice(grad, dim, g.len(), "grad")?.copy_from_slice(&g);
        Ok(())
    })
}

/// Draws `n` reference samples into `out` (row-major, `n * dim` values).
///
/// # Safety
/// `out` must point to `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn msvgd_target_sample(
    target: *const MsvgdTarget,
    n: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> MsvgdStatus {
    guard(|| {
        let t = handle(target, "target")?;
        let needed = n * t.model.dim();
        let buf = out_slice(out, out_len, needed, "out")?;
        let sample = t.model.reference_sample(n, seed)?;
        buf.copy_from_slice(&sample.to_row_major());
        Ok(())
    })
}

/// Parses a JSON run config and executes it in memory. Nothing is written
/// to disk; see [`msvgd_run_write`].
///
/// A run that stops on a numerical failure still yields a handle; its
/// metrics document carries `"partial": true`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msvgd_run_new(
    config_json: *const c_char,
    out: *mut *mut MsvgdRun,
) -> MsvgdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = parse_config(str_arg(config_json, "config_json")?)?;
        let record = execute(&config)?;
        let metrics_json = CString::new(record.to_json()).expect("JSON has no NUL bytes");
        out.write(Box::into_raw(Box::new(MsvgdRun {
            record,
            metrics_json,
        })));
        Ok(())
    })
}

/// # Safety
/// `run` must come from [`msvgd_run_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msvgd_run_free(run: *mut MsvgdRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of snapshots reached, and the particle count and dimension.
///
/// # Safety
/// `run` must be a live handle; each output pointer must be valid.
#[no_mangle]
pub unsafe extern "C" fn msvgd_run_shape(
    run: *const MsvgdRun,
    snapshots: *mut usize,
    n: *mut usize,
    dim: *mut usize,
) -> MsvgdStatus {
    guard(|| {
        let r = &handle(run, "run")?.record;
        write_out(snapshots, r.snapshots.len(), "snapshots")?;
        write_out(n, r.config.n, "n")?;
        write_out(dim, r.config.init.mean.len(), "dim")
    })
}

/// Copies snapshot `index` into `out` (row-major, `n * dim` values) and its
/// checkpoint iteration into `iteration`.
///
/// # Safety
/// `out` must point to `out_len` writable values; `iteration` must be valid.
#[no_mangle]
pub unsafe extern "C" fn msvgd_run_snapshot(
    run: *const MsvgdRun,
    index: usize,
    iteration: *mut usize,
    out: *mut f64,
    out_len: usize,
) -> MsvgdStatus {
    guard(|| {
        let r = &handle(run, "run")?.record;
        let snap: &ParticleSet = r.snapshots.get(index).ok_or_else(|| {
            Failure::Status(
                MsvgdStatus::IndexOutOfRange,
                format!("snapshot {index} requested, run has {}", r.snapshots.len()),
            )
        })?;
        let flat = snap.to_row_major();
        out_slice(out, out_len, flat.len(), "out")?.copy_from_slice(&flat);
        write_out(iteration, r.config.checkpoints[index], "iteration")
    })
}

/// The metrics document. The pointer lives as long as the handle.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msvgd_run_metrics_json(
    run: *const MsvgdRun,
    out: *mut *const c_char,
) -> MsvgdStatus {
    guard(|| {
        let r = handle(run, "run")?;
        write_out(out, r.metrics_json.as_ptr(), "out")
    })
}

/// Writes particle files, `metrics.json` and `timing.csv` into `dir`.
///
/// # Safety
/// `run` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn msvgd_run_write(run: *const MsvgdRun, dir: *const c_char) -> MsvgdStatus {
    guard(|| {
        let r = handle(run, "run")?;
        write_outputs(&r.record, Path::new(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// Squared MMD between `x` (`nx * dim`) and `y` (`ny * dim`), row-major.
/// A `bandwidth` of 0 uses the median trick on the pooled sample; the
/// bandwidth used is written to `used_bandwidth` when it is not null.
///
/// # Safety
/// `x` and `y` must point to `nx * dim` and `ny * dim` readable values.
#[no_mangle]
pub unsafe extern "C" fn msvgd_mmd_sq(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    dim: usize,
    bandwidth: f64,
    out: *mut f64,
    used_bandwidth: *mut f64,
) -> MsvgdStatus {
    guard(|| {
        let to_set = |data: &[f64], n: usize| -> Result<ParticleSet, Failure> {
            if n == 0 || dim == 0 {
                return Err(Failure::Core(Error::InvalidInput(
                    "samples need at least one point and one dimension".into(),
                )));
            }
            let rows: Vec<Vec<f64>> = data.chunks(dim).map(<[f64]>::to_vec).collect();
            Ok(ParticleSet::from_rows(&rows)?)
        };
        let xs = to_set(slice_arg(x, nx * dim, "x")?, nx)?;
        let ys = to_set(slice_arg(y, ny * dim, "y")?, ny)?;
        let report = mmd_sq(&xs, &ys, bandwidth)?;
        write_out(out, report.value, "out")?;
        if !used_bandwidth.is_null() {
            used_bandwidth.write(report.bandwidth);
        }
        Ok(())
    })
}
