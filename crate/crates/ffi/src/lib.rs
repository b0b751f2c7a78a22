//! C ABI over the `apshare` library.
//!
//! Instances and profiles cross the boundary as opaque handles created and
//! destroyed by this library. Every fallible call returns an [`ApsStatus`];
//! on failure a message for the calling thread is available through
//! [`aps_last_error_message`]. Matrices are passed row-major as `N·K` doubles
//! (row `i` is user `i`). Panics never unwind into C: they are caught and
//! reported as [`ApsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use apshare::dynamics::{self, StepSchedule, StoppingRule};
use apshare::scenario::{self, ScenarioSpec};
use apshare::{model, oracle, waterfill, Error, NetworkInstance, PowerProfile};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    NotConverged = 4,
    Io = 5,
    Panic = 6,
}

/// A network: gains, noise, budgets and optional per-channel power caps.
pub struct ApsInstance(NetworkInstance);

/// A power profile, one row per user.
pub struct ApsProfile(PowerProfile);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> ApsStatus {
    match e {
        Error::Infeasible(_) | Error::SlackBudget { .. } | Error::InfeasibleMask { .. } => ApsStatus::Infeasible,
        Error::NotConverged { .. } | Error::NotEquilibrium { .. } => ApsStatus::NotConverged,
        Error::Io(_) => ApsStatus::Io,
        Error::Replicate { source, .. } => status_of(source),
        _ => ApsStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ApsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            ApsStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            ApsStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ApsStatus::Panic
        }
    }
}

unsafe fn slice<'a>(data: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn rows(data: &[f64], n: usize, k: usize) -> Result<Vec<Vec<f64>>, Failure> {
    if n.checked_mul(k) != Some(data.len()) || k == 0 {
        return Err(Error::InvalidInstance(format!("bad matrix shape {n}x{k}")).into());
    }
    Ok(data.chunks(k).map(<[f64]>::to_vec).collect())
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes, excluding
/// the terminator, so callers can size a second attempt.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn aps_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates an instance from row-major `gain` (`n_users·n_channels`), `noise`
/// (`n_channels`) and `budget` (`n_users`).
///
/// # Safety
/// Array arguments must point to the stated number of doubles; `out_instance` must be
/// writable. The handle must be released with [`aps_instance_free`].
#[no_mangle]
pub unsafe extern "C" fn aps_instance_new(
    n_users: usize,
    n_channels: usize,
    gain: *const f64,
    noise: *const f64,
    budget: *const f64,
    out_instance: *mut *mut ApsInstance,
) -> ApsStatus {
    guard(|| {
        let dest = out(out_instance, "out_instance")?;
        let len = n_users.checked_mul(n_channels).ok_or(Error::InvalidInstance("size overflow".into()))?;
        let gain = rows(slice(gain, len, "gain")?, n_users, n_channels)?;
        let noise = slice(noise, n_channels, "noise")?.to_vec();
        let budget = slice(budget, n_users, "budget")?.to_vec();
        let inst = NetworkInstance::from_rows(&gain, noise, budget)?;
        *dest = Box::into_raw(Box::new(ApsInstance(inst)));
        Ok(())
    })
}

/// The two-user, two-channel example network with gains `[[1, 2], [1, 2]]`.
///
/// # Safety
/// `out_instance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aps_instance_example(out_instance: *mut *mut ApsInstance) -> ApsStatus {
    guard(|| {
        *out(out_instance, "out_instance")? = Box::into_raw(Box::new(ApsInstance(scenario::make_example1())));
        Ok(())
    })
}

/// Draws a random network with independent Rayleigh fading and the default
/// geometry; `noise` is the per-channel noise power.
///
/// # Safety
/// `out_instance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aps_instance_generate(
    n_users: usize,
    n_channels: usize,
    noise: f64,
    seed: u64,
    out_instance: *mut *mut ApsInstance,
) -> ApsStatus {
    guard(|| {
        let dest = out(out_instance, "out_instance")?;
        let mut spec = ScenarioSpec::new(n_users, n_channels, seed);
        spec.noise = noise;
        *dest = Box::into_raw(Box::new(ApsInstance(scenario::generate(&spec)?)));
        Ok(())
    })
}

/// Loads an instance from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out_instance` writable.
#[no_mangle]
pub unsafe extern "C" fn aps_instance_load(path: *const c_char, out_instance: *mut *mut ApsInstance) -> ApsStatus {
    guard(|| {
        let dest = out(out_instance, "out_instance")?;
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::Config("path is not UTF-8".into()))?;
        *dest = Box::into_raw(Box::new(ApsInstance(NetworkInstance::load(Path::new(path))?)));
        Ok(())
    })
}

/// # Safety
/// `instance` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aps_instance_free(instance: *mut ApsInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Number of users, or 0 for a null handle.
///
/// # Safety
/// `instance` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aps_instance_n_users(instance: *const ApsInstance) -> usize {
    instance.as_ref().map_or(0, |i| i.0.n_users())
}

/// Number of channels, or 0 for a null handle.
///
/// # Safety
/// `instance` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aps_instance_n_channels(instance: *const ApsInstance) -> usize {
    instance.as_ref().map_or(0, |i| i.0.n_channels())
}

/// Creates a profile from row-major `data` (`n_users·n_channels`).
///
/// # Safety
/// `data` must point to the stated number of doubles; `out_profile` writable.
#[no_mangle]
pub unsafe extern "C" fn aps_profile_new(
    n_users: usize,
    n_channels: usize,
    data: *const f64,
    out_profile: *mut *mut ApsProfile,
) -> ApsStatus {
    guard(|| {
        let dest = out(out_profile, "out_profile")?;
        let len = n_users.checked_mul(n_channels).ok_or(Error::InvalidInstance("size overflow".into()))?;
        let p = PowerProfile::from_rows(&rows(slice(data, len, "data")?, n_users, n_channels)?)?;
        *dest = Box::into_raw(Box::new(ApsProfile(p)));
        Ok(())
    })
}

/// Each user's budget spread evenly over the channels it may use.
///
/// # Safety
/// `instance` must be a live handle; `out_profile` writable.
#[no_mangle]
pub unsafe extern "C" fn aps_profile_uniform(instance: *const ApsInstance, out_profile: *mut *mut ApsProfile) -> ApsStatus {
    guard(|| {
        let inst = handle(instance, "instance")?;
        *out(out_profile, "out_profile")? = Box::into_raw(Box::new(ApsProfile(inst.0.uniform_profile())));
        Ok(())
    })
}

/// # Safety
/// `profile` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aps_profile_free(profile: *mut ApsProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Copies the profile row-major into `buf`, which must hold exactly
/// `n_users·n_channels` doubles.
///
/// # Safety
/// `profile` must be a live handle and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn aps_profile_read(profile: *const ApsProfile, buf: *mut f64, len: usize) -> ApsStatus {
    guard(|| {
        let p = &handle(profile, "profile")?.0;
        let expected = p.n_users() * p.n_channels();
        if len != expected {
            return Err(Error::DimensionMismatch {
                what: "profile buffer length",
                expected,
                found: len,
            }
            .into());
        }
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        let dest = std::slice::from_raw_parts_mut(buf, len);
        for (i, chunk) in dest.chunks_mut(p.n_channels()).enumerate() {
            chunk.copy_from_slice(p.row(i));
        }
        Ok(())
    })
}

/// Potential `P(p)` in nats.
///
/// # Safety
/// Handles must be live; `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn aps_potential(
    instance: *const ApsInstance,
    profile: *const ApsProfile,
    out_value: *mut f64,
) -> ApsStatus {
    guard(|| {
        let v = model::potential(&handle(instance, "instance")?.0, &handle(profile, "profile")?.0)?;
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}

/// Sum of the users' single-user-decoding rates in nats.
///
/// # Safety
/// Handles must be live; `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn aps_sum_rate(
    instance: *const ApsInstance,
    profile: *const ApsProfile,
    out_value: *mut f64,
) -> ApsStatus {
    guard(|| {
        let v = model::sum_rate(&handle(instance, "instance")?.0, &handle(profile, "profile")?.0)?;
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}

/// `‖Φ(p) − p‖_∞`; zero exactly at an equilibrium.
///
/// # Safety
/// Handles must be live; `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn aps_residual_inf(
    instance: *const ApsInstance,
    profile: *const ApsProfile,
    out_value: *mut f64,
) -> ApsStatus {
    guard(|| {
        let v = waterfill::residual_inf(&handle(instance, "instance")?.0, &handle(profile, "profile")?.0)?;
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}

/// Water-filling over `n` channels with effective noise `effective_noise`
/// (`n(k)/|h(k)|²` plus interference): writes the allocation to
/// `out_allocation` (`n` doubles) and the water level to `out_level`
/// (may be null).
///
/// # Safety
/// `effective_noise` and `out_allocation` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn aps_water_fill(
    effective_noise: *const f64,
    n: usize,
    budget: f64,
    out_allocation: *mut f64,
    out_level: *mut f64,
) -> ApsStatus {
    guard(|| {
        let r = waterfill::water_fill(slice(effective_noise, n, "effective_noise")?, budget, None)?;
        if out_allocation.is_null() {
            return Err(Failure::Null("out_allocation"));
        }
        std::slice::from_raw_parts_mut(out_allocation, n).copy_from_slice(&r.allocation);
        if let Some(level) = out_level.as_mut() {
            *level = r.water_level;
        }
        Ok(())
    })
}

/// Certified maximum of the potential. Writes the value and the duality-gap
/// bound; `out_profile` may be null, otherwise it receives the maximizer.
///
/// # Safety
/// `instance` must be live; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn aps_solve_max_potential(
    instance: *const ApsInstance,
    tol: f64,
    out_value: *mut f64,
    out_gap_bound: *mut f64,
    out_profile: *mut *mut ApsProfile,
) -> ApsStatus {
    guard(|| {
        let cert = oracle::solve_max_potential(&handle(instance, "instance")?.0, tol)?;
        *out(out_value, "out_value")? = cert.value;
        if let Some(g) = out_gap_bound.as_mut() {
            *g = cert.gap_bound;
        }
        if let Some(p) = out_profile.as_mut() {
            *p = Box::into_raw(Box::new(ApsProfile(cert.p_star)));
        }
        Ok(())
    })
}

unsafe fn start_profile(inst: &NetworkInstance, start: *const ApsProfile) -> PowerProfile {
    match start.as_ref() {
        Some(p) => p.0.clone(),
        None => inst.uniform_profile(),
    }
}

/// Averaged iterative water-filling with steps `1/(t + 2)` for `max_iters`
/// iterations from `start` (uniform when null).
///
/// # Safety
/// `instance` must be live, `start` null or live, `out_profile` writable.
#[no_mangle]
pub unsafe extern "C" fn aps_run_aiwf(
    instance: *const ApsInstance,
    start: *const ApsProfile,
    max_iters: usize,
    out_profile: *mut *mut ApsProfile,
) -> ApsStatus {
    guard(|| {
        let inst = &handle(instance, "instance")?.0;
        let dest = out(out_profile, "out_profile")?;
        let p0 = start_profile(inst, start);
        let trace = dynamics::run_aiwf(inst, &p0, StepSchedule::harmonic(), None, StoppingRule::max_iters(max_iters))?;
        *dest = Box::into_raw(Box::new(ApsProfile(trace.final_profile)));
        Ok(())
    })
}

/// Sequential iterative water-filling (round robin) until the residual drops
/// to `residual_tol` or `max_iters` single-user updates have been made.
///
/// # Safety
/// `instance` must be live, `start` null or live, `out_profile` writable.
#[no_mangle]
pub unsafe extern "C" fn aps_run_siwf(
    instance: *const ApsInstance,
    start: *const ApsProfile,
    max_iters: usize,
    residual_tol: f64,
    out_profile: *mut *mut ApsProfile,
) -> ApsStatus {
    guard(|| {
        let inst = &handle(instance, "instance")?.0;
        let dest = out(out_profile, "out_profile")?;
        let p0 = start_profile(inst, start);
        let stop = StoppingRule::max_iters(max_iters).with_residual_tol(residual_tol);
        let trace = dynamics::run_siwf(inst, &p0, stop)?;
        *dest = Box::into_raw(Box::new(ApsProfile(trace.final_profile)));
        Ok(())
    })
}
