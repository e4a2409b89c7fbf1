//! C ABI for the SMTL engine.
//!
//! Every fallible entry point returns an [`SmtlStatus`]; on failure a
//! human-readable message is stored in thread-local state and can be read
//! with [`smtl_last_error_message`] until the next `smtl_*` call on the same
//! thread. Pointer arguments must be valid for the documented lengths;
//! passing NULL yields `SMTL_STATUS_NULL_POINTER` rather than undefined
//! behaviour. All entry points catch panics at the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use smtl_core::alpha::project_to_simplex;
use smtl_core::divergence::{js, kl, tv, DiscreteDistribution};
use smtl_core::harness::runner::run_experiment;
use smtl_core::model::MultiTaskModel;
use smtl_core::nn::predict_classes;
use smtl_core::reweight::BetaWeights;
use smtl_core::tensor::Tensor;
use smtl_core::Error;

/// Result of an FFI call. Zero is success; everything else is an error and
/// leaves a message in `smtl_last_error_message()`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmtlStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument violated a precondition (shape, range, encoding).
    InvalidArgument = 2,
    /// An experiment configuration failed validation.
    Config = 3,
    /// A dataset or artifact could not be parsed.
    Data = 4,
    /// A NaN/Inf was detected outside training.
    Numerical = 5,
    /// Training loss became non-finite.
    Diverged = 6,
    /// Expected run artifacts are absent.
    MissingArtifacts = 7,
    /// Filesystem failure.
    Io = 8,
    /// Invariant violation inside the library.
    Internal = 9,
    /// A panic was caught at the FFI boundary.
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn clear_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

fn fail(status: SmtlStatus, msg: impl AsRef<str>) -> SmtlStatus {
    let sanitized: String = msg.as_ref().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(sanitized).unwrap_or_default());
    });
    status
}

fn fail_err(err: Error) -> SmtlStatus {
    let status = match &err {
        Error::Config(_) => SmtlStatus::Config,
        Error::InvalidArgument(_) | Error::Shape(_) => SmtlStatus::InvalidArgument,
        Error::Data(_) | Error::Json(_) => SmtlStatus::Data,
        Error::Numerical(_) => SmtlStatus::Numerical,
        Error::Diverged { .. } => SmtlStatus::Diverged,
        Error::MissingArtifacts(_) => SmtlStatus::MissingArtifacts,
        Error::Io(_) => SmtlStatus::Io,
        Error::State(_) => SmtlStatus::Internal,
    };
    fail(status, err.to_string())
}

/// Runs `f` with panics converted to `SMTL_STATUS_PANIC`.
fn guarded(f: impl FnOnce() -> SmtlStatus) -> SmtlStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SmtlStatus::Panic, format!("panic at FFI boundary: {msg}"))
        }
    }
}

/// Reads a NUL-terminated UTF-8 path argument.
///
/// # Safety
/// `ptr` must be NULL or point to a NUL-terminated string.
unsafe fn path_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, SmtlStatus> {
    if ptr.is_null() {
        return Err(fail(SmtlStatus::NullPointer, format!("{name} is NULL")));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| fail(SmtlStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

/// Reads a `len`-element double buffer argument.
///
/// # Safety
/// `ptr` must be NULL or valid for `len` reads.
unsafe fn slice_arg<'a>(
    ptr: *const f64,
    len: usize,
    name: &str,
) -> Result<&'a [f64], SmtlStatus> {
    if ptr.is_null() {
        return Err(fail(SmtlStatus::NullPointer, format!("{name} is NULL")));
    }
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

/// Message for the most recent failing `smtl_*` call on this thread, or NULL
/// if the most recent call succeeded. The pointer stays valid until the next
/// `smtl_*` call on the same thread.
#[no_mangle]
pub extern "C" fn smtl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn smtl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn divergence_impl(
    p: *const f64,
    q: *const f64,
    len: usize,
    out: *mut f64,
    f: fn(&DiscreteDistribution, &DiscreteDistribution) -> smtl_core::Result<f64>,
) -> SmtlStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SmtlStatus::NullPointer, "out is NULL");
        }
        let p = match unsafe { slice_arg(p, len, "p") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        let q = match unsafe { slice_arg(q, len, "q") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        let build = |v: &[f64]| DiscreteDistribution::new(v.to_vec());
        match build(p).and_then(|dp| Ok((dp, build(q)?))) {
            Ok((dp, dq)) => match f(&dp, &dq) {
                Ok(v) => {
                    unsafe { *out = v };
                    SmtlStatus::Ok
                }
                Err(e) => fail_err(e),
            },
            Err(e) => fail_err(e),
        }
    })
}

/// Kullback–Leibler divergence KL(p‖q) between two `len`-outcome
/// distributions. Infinite when q has a zero where p has mass.
///
/// # Safety
/// `p` and `q` must be valid for `len` reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smtl_kl(
    p: *const f64,
    q: *const f64,
    len: usize,
    out: *mut f64,
) -> SmtlStatus {
    divergence_impl(p, q, len, out, kl)
}

/// Jensen–Shannon divergence (natural log; bounded by ln 2).
///
/// # Safety
/// `p` and `q` must be valid for `len` reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smtl_js(
    p: *const f64,
    q: *const f64,
    len: usize,
    out: *mut f64,
) -> SmtlStatus {
    divergence_impl(p, q, len, out, js)
}

/// Total variation distance (half L1; bounded by 1).
///
/// # Safety
/// `p` and `q` must be valid for `len` reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smtl_tv(
    p: *const f64,
    q: *const f64,
    len: usize,
    out: *mut f64,
) -> SmtlStatus {
    divergence_impl(p, q, len, out, tv)
}

/// Class-balanced re-weighting vector for per-class sample counts: writes
/// `m / (k_present · n_j)` into `out[j]` for present classes and 0 for
/// absent ones, so balanced counts give exactly 1. Fails when every count
/// is zero.
///
/// # Safety
/// `counts` must be valid for `k` reads; `out` must be writable for `k`.
#[no_mangle]
pub unsafe extern "C" fn smtl_class_balanced_weights(
    counts: *const usize,
    k: usize,
    out: *mut f64,
) -> SmtlStatus {
    guarded(|| {
        if counts.is_null() {
            return fail(SmtlStatus::NullPointer, "counts is NULL");
        }
        if out.is_null() {
            return fail(SmtlStatus::NullPointer, "out is NULL");
        }
        let counts = unsafe { std::slice::from_raw_parts(counts, k) };
        match BetaWeights::compute(counts) {
            Ok(b) => {
                unsafe { std::slice::from_raw_parts_mut(out, k) }.copy_from_slice(b.weights());
                SmtlStatus::Ok
            }
            Err(e) => fail_err(e),
        }
    })
}

/// Euclidean projection of `v` onto the probability simplex.
///
/// # Safety
/// `v` must be valid for `len` reads; `out` must be writable for `len`.
#[no_mangle]
pub unsafe extern "C" fn smtl_project_to_simplex(
    v: *const f64,
    len: usize,
    out: *mut f64,
) -> SmtlStatus {
    guarded(|| {
        let v = match unsafe { slice_arg(v, len, "v") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        if out.is_null() {
            return fail(SmtlStatus::NullPointer, "out is NULL");
        }
        match project_to_simplex(v) {
            Ok(p) => {
                unsafe { std::slice::from_raw_parts_mut(out, len) }.copy_from_slice(&p);
                SmtlStatus::Ok
            }
            Err(e) => fail_err(e),
        }
    })
}

/// Trained multi-task model loaded from a checkpoint directory. Opaque;
/// create with `smtl_model_load`, release with `smtl_model_free`.
pub struct SmtlModel {
    inner: MultiTaskModel,
}

/// Loads a model from a checkpoint directory written during training.
/// On success writes an owned handle to `*out`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smtl_model_load(
    dir: *const c_char,
    out: *mut *mut SmtlModel,
) -> SmtlStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SmtlStatus::NullPointer, "out is NULL");
        }
        let dir = match unsafe { path_arg(dir, "dir") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match MultiTaskModel::load(Path::new(dir)) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(SmtlModel { inner })) };
                SmtlStatus::Ok
            }
            Err(e) => fail_err(e),
        }
    })
}

/// Reports a loaded model's shape: task count, input feature dimension and
/// classes per task.
///
/// # Safety
/// `model` must be a live handle; the three out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn smtl_model_info(
    model: *const SmtlModel,
    out_tasks: *mut usize,
    out_input_dim: *mut usize,
    out_classes: *mut usize,
) -> SmtlStatus {
    guarded(|| {
        if model.is_null() {
            return fail(SmtlStatus::NullPointer, "model is NULL");
        }
        if out_tasks.is_null() || out_input_dim.is_null() || out_classes.is_null() {
            return fail(SmtlStatus::NullPointer, "an out-pointer is NULL");
        }
        let m = unsafe { &(*model).inner };
        unsafe {
            *out_tasks = m.num_tasks();
            *out_input_dim = m.input_dim();
            *out_classes = m.num_classes();
        }
        SmtlStatus::Ok
    })
}

/// Predicts class labels for a row-major `rows × dim` feature matrix using
/// task `task`'s head. Writes one label per row into `out_labels`.
///
/// # Safety
/// `model` must be a live handle; `features` must be valid for `rows * dim`
/// reads; `out_labels` must be writable for `rows`.
#[no_mangle]
pub unsafe extern "C" fn smtl_model_predict(
    model: *const SmtlModel,
    task: usize,
    features: *const f64,
    rows: usize,
    dim: usize,
    out_labels: *mut usize,
) -> SmtlStatus {
    guarded(|| {
        if model.is_null() {
            return fail(SmtlStatus::NullPointer, "model is NULL");
        }
        if out_labels.is_null() {
            return fail(SmtlStatus::NullPointer, "out_labels is NULL");
        }
        if rows == 0 {
            return fail(SmtlStatus::InvalidArgument, "rows must be >= 1");
        }
        let features = match unsafe { slice_arg(features, rows * dim, "features") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        let m = unsafe { &(*model).inner };
        if dim != m.input_dim() {
            return fail(
                SmtlStatus::InvalidArgument,
                format!("dim {dim} does not match model input dim {}", m.input_dim()),
            );
        }
        let x = match Tensor::new([rows, dim], features.to_vec()) {
            Ok(t) => t,
            Err(e) => return fail_err(e),
        };
        match m.predict(task, &x) {
            Ok(logits) => {
                let labels = predict_classes(&logits);
                unsafe { std::slice::from_raw_parts_mut(out_labels, rows) }
                    .copy_from_slice(&labels);
                SmtlStatus::Ok
            }
            Err(e) => fail_err(e),
        }
    })
}

/// Releases a model handle. NULL is a no-op. The handle must not be used
/// after this call.
///
/// # Safety
/// `model` must be NULL or a handle obtained from `smtl_model_load` that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn smtl_model_free(model: *mut SmtlModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Runs a full experiment from a JSON config file, writing all artifacts
/// under the configured output directory exactly like `smtl run`.
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn smtl_run_experiment(config_path: *const c_char) -> SmtlStatus {
    guarded(|| {
        let path = match unsafe { path_arg(config_path, "config_path") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match run_experiment(Path::new(path)) {
            Ok(_) => SmtlStatus::Ok,
            Err(e) => fail_err(e),
        }
    })
}
