//! C ABI for `regime-kernel`.
//!
//! Every fallible function returns an [`RkStatus`] and writes its result
//! through an out-pointer. On failure the message is available from
//! [`rk_last_error`] on the same thread. Handles are opaque and must be
//! released with the matching `_free` function; strings returned by the
//! library are released with [`rk_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use regime_kernel::admissibility::pac_chain_bound;
use regime_kernel::runner::{emit_report, run_compiled, ReportFormat, RunReport, Verdict};
use regime_kernel::scenario::{CompiledScenario, Scenario};
use regime_kernel::stability::{theorem_bound, DriftParams};
use regime_kernel::symbolic::{entails, Goal, Theory};
use regime_kernel::witness::{covering_bound, epsilon_range, transport_overhead, CapacityCheck};
use regime_kernel::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidScenario = 4,
    ParseError = 5,
    Io = 6,
    Panic = 7,
}

/// Outcome of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkVerdict {
    Completed = 0,
    CompletedWithViolations = 1,
    Terminated = 2,
}

/// A validated scenario.
pub struct RkScenario(CompiledScenario);

/// The report of a finished run.
pub struct RkRunReport(RunReport);

/// A Horn theory.
pub struct RkTheory(Theory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).expect("interior nul bytes were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RkStatus {
    match e {
        Error::InvalidScenario(_) => RkStatus::InvalidScenario,
        Error::Parse { .. } => RkStatus::ParseError,
        _ => RkStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (RkStatus, String)>) -> RkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RkStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RkStatus::Panic
        }
    }
}

fn lib<T>(r: regime_kernel::Result<T>) -> Result<T, (RkStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (RkStatus, String) {
    (RkStatus::NullPointer, format!("`{name}` is null"))
}

/// # Safety
/// `p` must be null or a valid nul-terminated string.
unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, (RkStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (RkStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

/// # Safety
/// `p` must be null only when `len` is 0, otherwise valid for `len` reads.
unsafe fn floats<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], (RkStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `out` must be null or valid for one write.
unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), (RkStatus, String)> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

fn owned_string(bytes: Vec<u8>) -> Result<*mut c_char, (RkStatus, String)> {
    CString::new(bytes)
        .map(CString::into_raw)
        .map_err(|_| (RkStatus::InvalidArgument, "output contains a nul byte".into()))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a TOML scenario.
///
/// # Safety
/// `toml` must be a valid nul-terminated string; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_scenario_parse(toml: *const c_char, out: *mut *mut RkScenario) -> RkStatus {
    guard(|| {
        let scenario: Scenario = lib(text(toml, "toml")?.parse())?;
        let compiled = lib(scenario.compile())?;
        write(out, Box::into_raw(Box::new(RkScenario(compiled))), "out")
    })
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a valid nul-terminated string; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_scenario_load(path: *const c_char, out: *mut *mut RkScenario) -> RkStatus {
    guard(|| {
        let path = Path::new(text(path, "path")?);
        let body = std::fs::read_to_string(path).map_err(|e| (RkStatus::Io, format!("{}: {e}", path.display())))?;
        let scenario: Scenario = lib(body.parse())?;
        let compiled = lib(scenario.compile())?;
        write(out, Box::into_raw(Box::new(RkScenario(compiled))), "out")
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rk_scenario_free(scenario: *mut RkScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Executes a scenario. A terminated run still succeeds with a report.
///
/// # Safety
/// `scenario` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_run(scenario: *const RkScenario, out: *mut *mut RkRunReport) -> RkStatus {
    guard(|| {
        let scenario = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let report = lib(run_compiled(&scenario.0))?;
        write(out, Box::into_raw(Box::new(RkRunReport(report))), "out")
    })
}

/// # Safety
/// `report` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rk_report_free(report: *mut RkRunReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Verdict of a run; `step` receives the termination step, or the horizon
/// for completed runs.
///
/// # Safety
/// `report` must be a live handle; `verdict` and `step` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_report_verdict(
    report: *const RkRunReport,
    verdict: *mut RkVerdict,
    step: *mut usize,
) -> RkStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        let (v, s) = match &r.verdict {
            Verdict::TerminatedAt { step, .. } => (RkVerdict::Terminated, *step),
            Verdict::Completed if r.succeeded() => (RkVerdict::Completed, r.horizon),
            Verdict::Completed => (RkVerdict::CompletedWithViolations, r.horizon),
        };
        write(verdict, v, "verdict")?;
        write(step, s, "step")
    })
}

/// Number of step records in the report.
///
/// # Safety
/// `report` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_report_len(report: *const RkRunReport, out: *mut usize) -> RkStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        write(out, r.records.len(), "out")
    })
}

/// Drift value `W_t` of record `index`; NaN when the regime has no anchor.
///
/// # Safety
/// `report` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_report_w(report: *const RkRunReport, index: usize, out: *mut f64) -> RkStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        let rec = r
            .records
            .get(index)
            .ok_or_else(|| (RkStatus::InvalidArgument, format!("record {index} is out of range")))?;
        write(out, rec.w.unwrap_or(f64::NAN), "out")
    })
}

/// Serializes the report. `csv` selects CSV instead of JSON. Release the
/// result with [`rk_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_report_serialize(report: *const RkRunReport, csv: bool, out: *mut *mut c_char) -> RkStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        let format = if csv { ReportFormat::Csv } else { ReportFormat::Json };
        let s = owned_string(emit_report(r, format))?;
        if out.is_null() {
            rk_string_free(s);
            return Err(null("out"));
        }
        out.write(s);
        Ok(())
    })
}

/// Parses a Horn theory, one clause per line (`a b -> c`, `-> fact`).
///
/// # Safety
/// `source` must be a valid nul-terminated string; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_theory_parse(source: *const c_char, out: *mut *mut RkTheory) -> RkStatus {
    guard(|| {
        let theory: Theory = lib(text(source, "source")?.parse())?;
        write(out, Box::into_raw(Box::new(RkTheory(theory))), "out")
    })
}

/// # Safety
/// `theory` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rk_theory_free(theory: *mut RkTheory) {
    if !theory.is_null() {
        drop(Box::from_raw(theory));
    }
}

/// Decides whether the theory entails every atom of `goal` (space separated).
///
/// # Safety
/// `theory` must be a live handle, `goal` a valid string, `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_theory_entails(theory: *const RkTheory, goal: *const c_char, out: *mut bool) -> RkStatus {
    guard(|| {
        let t = &theory.as_ref().ok_or_else(|| null("theory"))?.0;
        let g: Goal = lib(text(goal, "goal")?.parse())?;
        write(out, entails(t, &g), "out")
    })
}

/// Closed-form drift bound after `n` steps with the given costs.
///
/// # Safety
/// `costs` must be valid for `n` reads (or null when `n` is 0); `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_theorem_bound(
    alpha: f64,
    delta: f64,
    beta: f64,
    w0: f64,
    costs: *const f64,
    n: usize,
    out: *mut f64,
) -> RkStatus {
    guard(|| {
        let p = lib(DriftParams::new(alpha, delta, beta))?;
        let costs = floats(costs, n, "costs")?;
        write(out, lib(theorem_bound(&p, w0, costs))?, "out")
    })
}

/// Product and union lower bounds on chain success.
///
/// # Safety
/// `deltas` must be valid for `n` reads (or null when `n` is 0); outputs valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_pac_chain_bound(
    deltas: *const f64,
    n: usize,
    product: *mut f64,
    union_bound: *mut f64,
) -> RkStatus {
    guard(|| {
        let b = lib(pac_chain_bound(floats(deltas, n, "deltas")?))?;
        write(product, b.product, "product")?;
        write(union_bound, b.union, "union_bound")
    })
}

/// `d · ln(1 + 2·diam·L/ε) + C`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_covering_bound(
    dimension: usize,
    diameter: f64,
    resolution: f64,
    transport_regularity: f64,
    innovation: f64,
    out: *mut f64,
) -> RkStatus {
    guard(|| {
        let c = lib(CapacityCheck::new(
            dimension,
            diameter,
            resolution,
            transport_regularity,
            innovation,
        ))?;
        write(out, lib(covering_bound(&c))?, "out")
    })
}

/// `(1 + 1/ε)‖μ_src − μ_dst‖²` for anchors of length `dim`.
///
/// # Safety
/// `mu_src` and `mu_dst` must be valid for `dim` reads; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_transport_overhead(
    eps: f64,
    mu_src: *const f64,
    mu_dst: *const f64,
    dim: usize,
    out: *mut f64,
) -> RkStatus {
    guard(|| {
        let a = floats(mu_src, dim, "mu_src")?;
        let b = floats(mu_dst, dim, "mu_dst")?;
        write(out, lib(transport_overhead(eps, a, b))?, "out")
    })
}

/// Default Young-split parameter for contraction rate `alpha`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rk_default_epsilon(alpha: f64, out: *mut f64) -> RkStatus {
    guard(|| write(out, lib(epsilon_range(alpha))?.default_epsilon(), "out"))
}
