//! C interface to `amp_retrain`.
//!
//! Every function returns an [`AmpStatus`]; results come back through out
//! pointers. Objects are opaque handles created by `*_new` / `*_fit` and
//! released with the matching `*_free`. After a non-OK status,
//! [`amp_last_error_message`] describes the failure on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use amp_retrain::bayesmix::{bayesmix_aggregate, fit_bimodal_em, BayesMixConfig, BimodalFit};
use amp_retrain::glm::{GlmParams, Link, ScheduleGlm};
use amp_retrain::glm_se::se_trajectory_glm;
use amp_retrain::gmm::{run_retraining_gmm, GmmParams, ScheduleGmm};
use amp_retrain::gmm_se::{find_crossover, p_star, se_trajectory_gmm, SeMapSpec, SeMapVariant};
use amp_retrain::numerics::{RngStream, DEFAULT_ORDER_2D};
use amp_retrain::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Parse = 5,
    /// A result that does not exist for these inputs (no root, no crossover).
    NotFound = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> AmpStatus {
    set_error(&err.to_string());
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Shape(_) => AmpStatus::InvalidArgument,
        Error::Io(_) => AmpStatus::Io,
        Error::Parse { .. } => AmpStatus::Parse,
        _ => AmpStatus::Numerical,
    }
}

fn fail(status: AmpStatus, msg: &str) -> AmpStatus {
    set_error(msg);
    status
}

fn guard<F: FnOnce() -> AmpStatus>(body: F) -> AmpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(_) => fail(AmpStatus::Panic, "internal panic"),
    }
}

/// Message for the last failed call on this thread. The pointer stays valid
/// until the next call on the same thread.
#[no_mangle]
pub extern "C" fn amp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn amp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Two-class Gaussian mixture model parameters.
pub struct AmpGmmModel {
    params: GmmParams,
}

/// Linear model with binary response.
pub struct AmpGlmModel {
    params: GlmParams,
}

/// Fitted two-component mixture over logits.
pub struct AmpMixtureFit {
    fit: BimodalFit,
}

/// Which η² map to evaluate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpMapKind {
    Optimal = 0,
    FullRetrainingLimit = 1,
    ConsensusRetrainingLimit = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpLinkKind {
    Sign = 0,
    Logistic = 1,
    Probit = 2,
}

/// Plain copy of a fitted mixture.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpMixtureParams {
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub pi_plus: f64,
    pub loglik: f64,
    pub iterations: u64,
    /// Nonzero when a standard deviation was raised to the floor.
    pub sigma_clamped: i32,
}

/// Creates a mixture model; `n` is the sample count and d = round(alpha·n).
/// Pass n = 0 for theory-only use.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn amp_gmm_new(
    gamma: f64,
    alpha: f64,
    p: f64,
    pi_plus: f64,
    n: u64,
    out: *mut *mut AmpGmmModel,
) -> AmpStatus {
    guard(|| {
        if out.is_null() {
            return fail(AmpStatus::NullPointer, "out is null");
        }
        let params = if n == 0 {
            GmmParams::theory(gamma, alpha, p, pi_plus)
        } else {
            GmmParams::new(gamma, alpha, p, pi_plus, n as usize)
        };
        match params {
            Ok(params) => {
                *out = Box::into_raw(Box::new(AmpGmmModel { params }));
                AmpStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// # Safety
/// `model` must come from [`amp_gmm_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn amp_gmm_free(model: *mut AmpGmmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// One application of an η² map.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn amp_gmm_eta_map(
    model: *const AmpGmmModel,
    kind: AmpMapKind,
    u: f64,
    out: *mut f64,
) -> AmpStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return fail(AmpStatus::NullPointer, "null argument");
        }
        if !(u >= 0.0) {
            return fail(AmpStatus::InvalidArgument, "u must be nonnegative");
        }
        let variant = match kind {
            AmpMapKind::Optimal => SeMapVariant::Opt,
            AmpMapKind::FullRetrainingLimit => SeMapVariant::FtLimit,
            AmpMapKind::ConsensusRetrainingLimit => SeMapVariant::CtLimit,
        };
        match SeMapSpec::new(variant, (*model).params) {
            Ok(map) => {
                *out = map.eval(u);
                AmpStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Smallest positive crossing of the full- and consensus-retraining maps.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn amp_gmm_crossover(model: *const AmpGmmModel, out: *mut f64) -> AmpStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return fail(AmpStatus::NullPointer, "null argument");
        }
        match find_crossover(&(*model).params) {
            Ok(Some(u)) => {
                *out = u;
                AmpStatus::Ok
            }
            Ok(None) => fail(AmpStatus::NotFound, "no crossover in the search range"),
            Err(e) => status_of(&e),
        }
    })
}

/// Flip threshold p* for signal strength `gamma` and ratio `alpha`.
///
/// # Safety
/// `out` must be writable; `guaranteed` may be null.
#[no_mangle]
pub unsafe extern "C" fn amp_p_star(
    gamma: f64,
    alpha: f64,
    out: *mut f64,
    guaranteed: *mut i32,
) -> AmpStatus {
    guard(|| {
        if out.is_null() {
            return fail(AmpStatus::NullPointer, "out is null");
        }
        match p_star(gamma, alpha) {
            Ok(ps) => {
                if !guaranteed.is_null() {
                    *guaranteed = ps.guaranteed as i32;
                }
                match ps.p {
                    Some(p) => {
                        *out = p;
                        AmpStatus::Ok
                    }
                    None => fail(AmpStatus::NotFound, "no interior root"),
                }
            }
            Err(e) => status_of(&e),
        }
    })
}

unsafe fn write_series(values: &[f64], out: *mut f64, len: usize) -> AmpStatus {
    if out.is_null() {
        return fail(AmpStatus::NullPointer, "output buffer is null");
    }
    if len < values.len() {
        return fail(
            AmpStatus::BufferTooSmall,
            "output buffer shorter than the number of iterations",
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    AmpStatus::Ok
}

/// Predicted test error for t = 1..iterations under the optimal schedule.
///
/// # Safety
/// `model` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn amp_gmm_se_errors(
    model: *const AmpGmmModel,
    iterations: u64,
    out: *mut f64,
    len: u64,
) -> AmpStatus {
    guard(|| {
        if model.is_null() {
            return fail(AmpStatus::NullPointer, "model is null");
        }
        match se_trajectory_gmm(&(*model).params, &ScheduleGmm::Optimal, iterations as usize) {
            Ok(rows) => {
                let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
                write_series(&errs, out, len as usize)
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Test error of one simulated optimal-retraining run, for t = 1..iterations.
/// The model must have been created with n > 0.
///
/// # Safety
/// `model` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn amp_gmm_run(
    model: *const AmpGmmModel,
    iterations: u64,
    seed: u64,
    replication: u64,
    out: *mut f64,
    len: u64,
) -> AmpStatus {
    guard(|| {
        if model.is_null() {
            return fail(AmpStatus::NullPointer, "model is null");
        }
        let stream = RngStream::new(seed, replication);
        match run_retraining_gmm(
            &(*model).params,
            &ScheduleGmm::Optimal,
            iterations as usize,
            stream,
        ) {
            Ok(tr) => {
                if let Some(e) = tr.failure {
                    return status_of(&e);
                }
                let errs: Vec<f64> = tr.rows.iter().map(|r| r.test_error).collect();
                write_series(&errs, out, len as usize)
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Creates a linear model. `link_scale` is ignored for the sign link.
/// Pass n = 0 for theory-only use.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn amp_glm_new(
    gamma: f64,
    alpha: f64,
    p: f64,
    link: AmpLinkKind,
    link_scale: f64,
    n: u64,
    out: *mut *mut AmpGlmModel,
) -> AmpStatus {
    guard(|| {
        if out.is_null() {
            return fail(AmpStatus::NullPointer, "out is null");
        }
        let link = match link {
            AmpLinkKind::Sign => Link::Sign,
            AmpLinkKind::Logistic => Link::Logistic { scale: link_scale },
            AmpLinkKind::Probit => Link::Probit { scale: link_scale },
        };
        let params = if n == 0 {
            GlmParams::theory(gamma, alpha, p, link)
        } else {
            GlmParams::new(gamma, alpha, p, link, n as usize)
        };
        match params {
            Ok(params) => {
                *out = Box::into_raw(Box::new(AmpGlmModel { params }));
                AmpStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// # Safety
/// `model` must come from [`amp_glm_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn amp_glm_free(model: *mut AmpGlmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicted test error for t = 1..iterations under the optimal schedule.
///
/// # Safety
/// `model` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn amp_glm_se_errors(
    model: *const AmpGlmModel,
    iterations: u64,
    out: *mut f64,
    len: u64,
) -> AmpStatus {
    guard(|| {
        if model.is_null() {
            return fail(AmpStatus::NullPointer, "model is null");
        }
        let schedule = ScheduleGlm::Optimal {
            order: DEFAULT_ORDER_2D,
        };
        match se_trajectory_glm(&(*model).params, &schedule, iterations as usize) {
            Ok(rows) => {
                let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
                write_series(&errs, out, len as usize)
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Fits a two-component mixture to `len` logits with default EM settings.
///
/// # Safety
/// `logits` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_mixture_fit(
    logits: *const f64,
    len: u64,
    out: *mut *mut AmpMixtureFit,
) -> AmpStatus {
    guard(|| {
        if logits.is_null() || out.is_null() {
            return fail(AmpStatus::NullPointer, "null argument");
        }
        let xs = std::slice::from_raw_parts(logits, len as usize);
        match fit_bimodal_em(xs, &BayesMixConfig::new(0.0)) {
            Ok(fit) => {
                *out = Box::into_raw(Box::new(AmpMixtureFit { fit }));
                AmpStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// # Safety
/// `fit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn amp_mixture_params(
    fit: *const AmpMixtureFit,
    out: *mut AmpMixtureParams,
) -> AmpStatus {
    guard(|| {
        if fit.is_null() || out.is_null() {
            return fail(AmpStatus::NullPointer, "null argument");
        }
        let f = &(*fit).fit;
        *out = AmpMixtureParams {
            mu_plus: f.mu_plus,
            mu_minus: f.mu_minus,
            sigma_plus: f.sigma_plus,
            sigma_minus: f.sigma_minus,
            pi_plus: f.pi_plus,
            loglik: f.loglik,
            iterations: f.iterations as u64,
            sigma_clamped: f.sigma_clamped as i32,
        };
        AmpStatus::Ok
    })
}

/// Soft targets for `len` (logit, noisy label) pairs at flip probability `p`.
///
/// # Safety
/// `fit` must be a live handle; `logits`, `labels` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn amp_mixture_targets(
    fit: *const AmpMixtureFit,
    p: f64,
    logits: *const f64,
    labels: *const f64,
    len: u64,
    out: *mut f64,
) -> AmpStatus {
    guard(|| {
        if fit.is_null() || logits.is_null() || labels.is_null() || out.is_null() {
            return fail(AmpStatus::NullPointer, "null argument");
        }
        let n = len as usize;
        let zs = std::slice::from_raw_parts(logits, n);
        let ys = std::slice::from_raw_parts(labels, n);
        let dst = std::slice::from_raw_parts_mut(out, n);
        for i in 0..n {
            match bayesmix_aggregate(zs[i], ys[i], &(*fit).fit, p) {
                Ok(g) => dst[i] = g,
                Err(e) => return status_of(&e),
            }
        }
        AmpStatus::Ok
    })
}

/// # Safety
/// `fit` must come from [`amp_mixture_fit`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn amp_mixture_free(fit: *mut AmpMixtureFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
