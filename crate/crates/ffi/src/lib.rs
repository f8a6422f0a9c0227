//! C ABI for `hierctrl`.
//!
//! Handles are opaque pointers created by `hc_*_from_*` / `hc_control_run`
//! and released by the matching `*_free`. Every function returns an
//! [`HcStatus`]; on failure [`hc_last_error_message`] describes the error
//! (per thread). No entry point lets a panic cross the boundary.
//!
//! A problem handle is immutable after construction and may be shared across
//! threads; each `hc_control_run` call is independent.

use hierctrl::cli::{build_problem, parse_problem_str, HumReport};
use hierctrl::leader::{run_hierarchic_control, HumResult};
use hierctrl::problem::HierarchicProblem;
use hierctrl::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Result codes of every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed problem JSON.
    ParseError = 3,
    /// Well-formed input violating a constraint.
    ValidationError = 4,
    /// A solver failed (no convergence, singular or non-finite values).
    SolverError = 5,
    InvalidArgument = 6,
    /// The caller's buffer is too short; the required length was written.
    BufferTooSmall = 7,
    /// A panic was caught; the handle involved should be freed.
    Panic = 8,
}

/// A validated problem.
pub struct HcProblem {
    inner: HierarchicProblem,
}

/// Outcome of one leader run.
pub struct HcHumResult {
    result: HumResult,
    report: HumReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(HcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } | Error::Json(_) => HcStatus::ParseError,
            Error::NotConverged { .. } | Error::Singular { .. } | Error::NonFinite(_) | Error::Weights(_) => {
                HcStatus::SolverError
            }
            Error::UnknownCommand(_) | Error::Io(_) => HcStatus::InvalidArgument,
            _ => HcStatus::ValidationError,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(HcStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HcStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {msg}"));
            HcStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees `p` is null or a live handle.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: non-null and provided by the caller for writing.
    unsafe { out.write(value) };
    Ok(())
}

/// Parse and validate a problem from a NUL-terminated JSON string.
///
/// On success `*out` receives a handle to release with [`hc_problem_free`].
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_problem_from_json(json: *const c_char, out: *mut *mut HcProblem) -> HcStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null; NUL termination is the caller's contract.
        let text = unsafe { CStr::from_ptr(json) }
            .to_str()
            .map_err(|e| Failure(HcStatus::InvalidUtf8, e.to_string()))?;
        let pf = parse_problem_str(text)?;
        let (inner, _) = build_problem(&pf)?;
        write_out(out, Box::into_raw(Box::new(HcProblem { inner })))
    })
}

/// Release a problem handle; null is ignored.
///
/// # Safety
/// `problem` must be null or a handle from [`hc_problem_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_problem_free(problem: *mut HcProblem) {
    if !problem.is_null() {
        // SAFETY: ownership returns from the caller.
        let _ = catch_unwind(AssertUnwindSafe(|| drop(unsafe { Box::from_raw(problem) })));
    }
}

/// Number of spatial unknowns per component.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_problem_n_nodes(problem: *const HcProblem, out: *mut usize) -> HcStatus {
    guard(|| {
        let p = unsafe { as_ref(problem, "problem") }?;
        write_out(out, p.inner.grid().n_nodes())
    })
}

/// Resolved follower penalties `μ₁, μ₂` into `out[0..2]`.
///
/// # Safety
/// `problem` must be a live handle and `out` point to two writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hc_problem_mu(problem: *const HcProblem, out: *mut f64) -> HcStatus {
    guard(|| {
        let p = unsafe { as_ref(problem, "problem") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mu = p.inner.mu();
        // SAFETY: caller provides room for two doubles.
        unsafe { std::ptr::copy_nonoverlapping(mu.as_ptr(), out, 2) };
        Ok(())
    })
}

/// Leader control by HUM with penalty `epsilon`, followers at equilibrium.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_control_run(
    problem: *const HcProblem,
    epsilon: f64,
    out: *mut *mut HcHumResult,
) -> HcStatus {
    guard(|| {
        let p = unsafe { as_ref(problem, "problem") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Failure(
                HcStatus::InvalidArgument,
                format!("epsilon must be positive, got {epsilon}"),
            ));
        }
        let result = run_hierarchic_control(&p.inner, epsilon)?;
        let report = HumReport::new(&p.inner, &result, 20, 0)?;
        write_out(out, Box::into_raw(Box::new(HcHumResult { result, report })))
    })
}

/// Release a result handle; null is ignored.
///
/// # Safety
/// `result` must be null or a handle from [`hc_control_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_hum_result_free(result: *mut HcHumResult) {
    if !result.is_null() {
        // SAFETY: ownership returns from the caller.
        let _ = catch_unwind(AssertUnwindSafe(|| drop(unsafe { Box::from_raw(result) })));
    }
}

fn get<T>(result: *const HcHumResult, out: *mut T, f: impl FnOnce(&HcHumResult) -> T) -> HcStatus {
    guard(|| {
        let r = unsafe { as_ref(result, "result") }?;
        write_out(out, f(r))
    })
}

/// Penalty the result was computed with.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_hum_result_epsilon(result: *const HcHumResult, out: *mut f64) -> HcStatus {
    get(result, out, |r| r.result.epsilon)
}

/// `‖y(T)‖` under the computed controls.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_hum_result_terminal_norm(result: *const HcHumResult, out: *mut f64) -> HcStatus {
    get(result, out, |r| r.result.terminal_norm)
}

/// `‖y(T)‖` without leader control.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_hum_result_free_terminal_norm(result: *const HcHumResult, out: *mut f64) -> HcStatus {
    get(result, out, |r| r.result.free_terminal_norm)
}

/// Half the squared norm of the leader control.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_hum_result_leader_cost(result: *const HcHumResult, out: *mut f64) -> HcStatus {
    get(result, out, |r| r.result.leader_cost)
}

/// Normalised gap of the duality identity at the minimiser.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_hum_result_duality_residual(result: *const HcHumResult, out: *mut f64) -> HcStatus {
    get(result, out, |r| r.report.duality_residual)
}

/// Conjugate gradient iterations.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_hum_result_cg_iterations(result: *const HcHumResult, out: *mut usize) -> HcStatus {
    get(result, out, |r| r.result.iterations)
}

/// 1 when CG reached its tolerance, else 0.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_hum_result_converged(result: *const HcHumResult, out: *mut i32) -> HcStatus {
    get(result, out, |r| r.result.converged as i32)
}

fn copy_slice(values: &[f64], buf: *mut f64, len: usize, written: *mut usize) -> Result<(), Failure> {
    write_out(written, values.len())?;
    if len < values.len() {
        return Err(Failure(
            HcStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    // SAFETY: `buf` has room for `len >= values.len()` doubles.
    unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len()) };
    Ok(())
}

/// Component `component` (0 or 1) of the minimiser `ψ̂^T`, nodal values.
///
/// `*written` always receives the required length; pass `len = 0` to query it.
///
/// # Safety
/// `result` must be a live handle, `buf` writable for `len` doubles and
/// `written` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_hum_result_psi_terminal(
    result: *const HcHumResult,
    component: usize,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> HcStatus {
    guard(|| {
        let r = unsafe { as_ref(result, "result") }?;
        let c = r.result.psi_t.get(component).ok_or_else(|| {
            Failure(
                HcStatus::InvalidArgument,
                format!("component must be 0 or 1, got {component}"),
            )
        })?;
        copy_slice(c.as_slice().expect("contiguous"), buf, len, written)
    })
}

/// Component `component` of the controlled terminal state `y(T)`.
///
/// # Safety
/// As for [`hc_hum_result_psi_terminal`].
#[no_mangle]
pub unsafe extern "C" fn hc_hum_result_terminal_state(
    result: *const HcHumResult,
    component: usize,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> HcStatus {
    guard(|| {
        let r = unsafe { as_ref(result, "result") }?;
        if component > 1 {
            return Err(Failure(
                HcStatus::InvalidArgument,
                format!("component must be 0 or 1, got {component}"),
            ));
        }
        let y = &r.result.y;
        let values = y.component(component).level(y.n_levels() - 1).to_vec();
        copy_slice(&values, buf, len, written)
    })
}

/// The full result summary as a JSON string; release it with [`hc_string_free`].
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_hum_result_to_json(result: *const HcHumResult, out: *mut *mut c_char) -> HcStatus {
    guard(|| {
        let r = unsafe { as_ref(result, "result") }?;
        let text = serde_json::to_string(&r.report).map_err(Error::from)?;
        let c = CString::new(text).map_err(|e| Failure(HcStatus::InvalidArgument, e.to_string()))?;
        write_out(out, c.into_raw())
    })
}

/// Release a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string from [`hc_hum_result_to_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: allocated by `CString::into_raw` in this library.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn hc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status_codes() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, HcStatus::Panic);
        let msg = unsafe { CStr::from_ptr(hc_last_error_message()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
        assert_eq!(guard(|| Ok(())), HcStatus::Ok);
        assert!(hc_last_error_message().is_null());
    }

    #[test]
    fn error_classes() {
        let f: Failure = Error::Parse {
            line: 1,
            column: 2,
            message: "x".into(),
        }
        .into();
        assert_eq!(f.0, HcStatus::ParseError);
        let f: Failure = Error::Validation("x".into()).into();
        assert_eq!(f.0, HcStatus::ValidationError);
        let f: Failure = Error::NotConverged {
            method: "m",
            iterations: 1,
            residual: 1.0,
        }
        .into();
        assert_eq!(f.0, HcStatus::SolverError);
    }
}
