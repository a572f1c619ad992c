//! C ABI for the simulator.
//!
//! Every function returns a [`BaxosStatus`]; on failure the message is
//! available from [`baxos_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use baxos::backoff::{baxos_backoff, monte_carlo_single_winner, termination_probability};
use baxos::runner::{export_run, run_to_dir, simulate, RunReport};
use baxos::scenario::{Protocol, Scenario};
use baxos::verify::verify;
use baxos::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaxosStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    Parse = 4,
    Io = 5,
    Replay = 6,
    /// A safety check failed.
    Violation = 7,
    Panic = 8,
}

/// Requested protocol for [`baxos_scenario_set_protocol`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaxosProtocol {
    Baxos = 0,
    MultiPaxos = 1,
}

/// Opaque scenario handle.
pub struct BaxosScenario {
    inner: Scenario,
}

/// Opaque handle to a finished run.
pub struct BaxosRun {
    report: RunReport,
    safe: bool,
    first_violation: Option<CString>,
}

/// Headline numbers of a run. Latencies are microseconds, negative when no
/// request committed; `retries_per_commit` is negative when nothing was
/// proposed.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct BaxosSummary {
    pub submitted: u64,
    pub committed: u64,
    pub failed: u64,
    pub censored: u64,
    pub throughput: f64,
    pub median_us: i64,
    pub p99_us: i64,
    pub retries_per_commit: f64,
    pub commit_gini: f64,
    pub byte_rate_stddev_kbps: f64,
    pub bytes_sent: u64,
    pub bytes_delivered: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BaxosStatus {
    match e {
        Error::Validation(_) | Error::Cluster(_) => BaxosStatus::Validation,
        Error::Domain(_) => BaxosStatus::InvalidArgument,
        Error::Parse { .. } | Error::UnknownPreset(_) => BaxosStatus::Parse,
        Error::Io { .. } => BaxosStatus::Io,
        Error::Replay(_) => BaxosStatus::Replay,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (BaxosStatus, String)>) -> BaxosStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BaxosStatus::Ok,
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
            BaxosStatus::Panic
        }
    }
}

fn lift(e: Error) -> (BaxosStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (BaxosStatus, String) {
    (BaxosStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (BaxosStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (BaxosStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (BaxosStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn baxos_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn baxos_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Closed-form termination probability for `proposers` proposers at retry
/// level `level`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn baxos_termination_probability(
    level: u32,
    proposers: u32,
    out: *mut f64,
) -> BaxosStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = termination_probability(level, proposers).map_err(lift)?;
        Ok(())
    })
}

/// Monte Carlo estimate of the same probability.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn baxos_termination_monte_carlo(
    level: u32,
    proposers: u32,
    trials: u64,
    seed: u64,
    out: *mut f64,
) -> BaxosStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = monte_carlo_single_winner(level, proposers, trials, seed).map_err(lift)?;
        Ok(())
    })
}

/// Backoff in microseconds: `k * 2^retries * 2 * rtt_us`, `k` in (0, 1).
///
/// # Safety
/// `out_us` must be null or point to writable memory for one `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn baxos_backoff_us(
    retries: u32,
    rtt_us: u64,
    k: f64,
    out_us: *mut u64,
) -> BaxosStatus {
    guard(|| {
        let out = out_arg(out_us, "out_us")?;
        let d =
            baxos_backoff(retries, std::time::Duration::from_micros(rtt_us), k).map_err(lift)?;
        *out = d.as_micros() as u64;
        Ok(())
    })
}

/// Loads a preset by name or a TOML file by path.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn baxos_scenario_resolve(
    name: *const c_char,
    out: *mut *mut BaxosScenario,
) -> BaxosStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let name = str_arg(name, "name")?;
        let inner = Scenario::resolve(name).map_err(lift)?;
        *out = Box::into_raw(Box::new(BaxosScenario { inner }));
        Ok(())
    })
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn baxos_scenario_from_toml(
    toml: *const c_char,
    out: *mut *mut BaxosScenario,
) -> BaxosStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(toml, "toml")?;
        let inner = Scenario::from_toml(text).map_err(lift)?;
        *out = Box::into_raw(Box::new(BaxosScenario { inner }));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from this library that was not freed.
#[no_mangle]
pub unsafe extern "C" fn baxos_scenario_set_seed(s: *mut BaxosScenario, seed: u64) -> BaxosStatus {
    guard(|| {
        let s = out_arg(s, "scenario")?;
        s.inner = s.inner.clone().with_seed(seed);
        Ok(())
    })
}

/// Shortens or extends the run; attack windows and clients are clipped.
///
/// # Safety
/// `s` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn baxos_scenario_set_horizon_us(
    s: *mut BaxosScenario,
    horizon_us: u64,
) -> BaxosStatus {
    guard(|| {
        let s = out_arg(s, "scenario")?;
        let next = s.inner.clone().with_horizon(horizon_us);
        next.validate().map_err(lift)?;
        s.inner = next;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn baxos_scenario_set_protocol(
    s: *mut BaxosScenario,
    protocol: BaxosProtocol,
) -> BaxosStatus {
    guard(|| {
        let s = out_arg(s, "scenario")?;
        let p = match protocol {
            BaxosProtocol::Baxos => Protocol::Baxos,
            BaxosProtocol::MultiPaxos => Protocol::Multipaxos,
        };
        s.inner = s.inner.clone().with_protocol(p);
        Ok(())
    })
}

/// Per-client arrival rate in requests per second.
///
/// # Safety
/// `s` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn baxos_scenario_set_rate(s: *mut BaxosScenario, rate: f64) -> BaxosStatus {
    guard(|| {
        let s = out_arg(s, "scenario")?;
        let next = s.inner.clone().with_rate(rate);
        next.validate().map_err(lift)?;
        s.inner = next;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from this library that was not freed.
#[no_mangle]
pub unsafe extern "C" fn baxos_scenario_free(s: *mut BaxosScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs the scenario in memory and checks the decided logs.
///
/// # Safety
/// `s` must be a live scenario handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn baxos_run(
    s: *const BaxosScenario,
    out: *mut *mut BaxosRun,
) -> BaxosStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = s.as_ref().ok_or_else(|| null("scenario"))?;
        let (sim, report) = simulate(&s.inner).map_err(lift)?;
        let checked = verify(&export_run(&sim));
        *out = Box::into_raw(Box::new(BaxosRun {
            report,
            safe: checked.ok(),
            first_violation: checked
                .first()
                .map(|v| CString::new(v.to_string()).expect("no nul in report")),
        }));
        Ok(())
    })
}

/// Runs the scenario and writes its artifact files into `dir`.
///
/// # Safety
/// `s` must be a live scenario handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn baxos_run_to_dir(
    s: *const BaxosScenario,
    dir: *const c_char,
) -> BaxosStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("scenario"))?;
        let dir = str_arg(dir, "dir")?;
        run_to_dir(&s.inner, Path::new(dir)).map_err(lift)?;
        Ok(())
    })
}

/// # Safety
/// `run` must be a live run handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn baxos_run_summary(
    run: *const BaxosRun,
    out: *mut BaxosSummary,
) -> BaxosStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let out = out_arg(out, "out")?;
        let r = &run.report;
        let lat = |v: Option<u64>| v.map_or(-1, |v| v as i64);
        let mut s = BaxosSummary {
            retries_per_commit: r.retries_per_commit.unwrap_or(-1.0),
            commit_gini: r.commit_gini,
            byte_rate_stddev_kbps: r.byte_rate_stddev_kbps,
            bytes_sent: r.bytes.sent,
            bytes_delivered: r.bytes.delivered,
            median_us: -1,
            p99_us: -1,
            ..Default::default()
        };
        if let Some(m) = &r.summary {
            s.submitted = m.submitted;
            s.committed = m.committed;
            s.failed = m.failed;
            s.censored = m.censored;
            s.throughput = m.throughput;
            s.median_us = lat(m.median_us);
            s.p99_us = lat(m.p99_us);
        }
        *out = s;
        Ok(())
    })
}

/// `Ok` when every safety check passed, `Violation` otherwise with the
/// first counterexample as the last error.
///
/// # Safety
/// `run` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn baxos_run_safety(run: *const BaxosRun) -> BaxosStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        if run.safe {
            Ok(())
        } else {
            let msg = run
                .first_violation
                .as_ref()
                .map_or(String::new(), |c| c.to_string_lossy().into_owned());
            Err((BaxosStatus::Violation, msg))
        }
    })
}

/// Copies the hex trace digest (64 characters plus NUL) into `buf`.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn baxos_run_trace_digest(
    run: *const BaxosRun,
    buf: *mut c_char,
    len: usize,
) -> BaxosStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let d = run.report.trace_digest.as_bytes();
        if len < d.len() + 1 {
            return Err((
                BaxosStatus::InvalidArgument,
                format!("buffer holds {len} bytes, need {}", d.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(d.as_ptr(), buf as *mut u8, d.len());
        *buf.add(d.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from this library that was not freed.
#[no_mangle]
pub unsafe extern "C" fn baxos_run_free(run: *mut BaxosRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
