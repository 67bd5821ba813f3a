//! C ABI for the originality-scoring engine.
//!
//! Design rules:
//! - Models are opaque handles ([`SpotModel`]); callers never see the layout.
//! - Every fallible function returns a [`SpotStatus`] code and writes results
//!   through out-pointers. No result is returned half-written: on any status
//!   other than `SPOT_OK` the out-params are untouched.
//! - A human-readable message for the most recent failure on the current
//!   thread is available via [`spot_last_error`].
//! - Strings crossing the boundary are NUL-terminated UTF-8. Buffers follow
//!   the two-call pattern: pass `capacity`, receive the required length, call
//!   again with a bigger buffer if it did not fit.
//!
//! The matching header (`include/spot.h`) is generated at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use spot_core::backend::ngram::{train_ngram, NgramModel, NgramParams};
use spot_core::backend::{greedy_generate, ranks_for, BackendError, ScoringModel, TokenCodec};
use spot_core::score::{aggregate_score, per_token_scores};

/// Status codes returned by every fallible function in this ABI.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SpotStatus {
    /// Success.
    SpotOk = 0,
    /// A pointer was NULL, a length was zero, or an argument was malformed.
    SpotErrInvalidArgument = 1,
    /// The model or vocabulary file could not be read or parsed.
    SpotErrModelFile = 2,
    /// The backend rejected the request (token out of range, bad geometry).
    SpotErrBackend = 3,
    /// An output buffer was too small; the required size was written to the
    /// corresponding length out-param.
    SpotErrBufferTooSmall = 4,
    /// A Rust panic was caught at the boundary; state may be stale but the
    /// process is intact.
    SpotErrInternal = 5,
}

/// Opaque model handle. Create with [`spot_model_load`] or
/// [`spot_model_train`], destroy with [`spot_model_free`].
pub struct SpotModel {
    inner: NgramModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized: String = message.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn backend_status(e: &BackendError) -> SpotStatus {
    match e {
        BackendError::ModelFile(_) | BackendError::Io(_) => SpotStatus::SpotErrModelFile,
        BackendError::InvalidLength(_) | BackendError::InvalidParams(_) => {
            SpotStatus::SpotErrInvalidArgument
        }
        _ => SpotStatus::SpotErrBackend,
    }
}

fn fail(status: SpotStatus, message: impl AsRef<str>) -> SpotStatus {
    set_error(message.as_ref());
    status
}

/// Run `body` with panics converted to `SPOT_ERR_INTERNAL`.
fn guarded(body: impl FnOnce() -> SpotStatus) -> SpotStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(SpotStatus::SpotErrInternal, "internal panic"),
    }
}

/// # Safety
/// `ptr` must be NULL or a valid NUL-terminated string.
unsafe fn required_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, SpotStatus> {
    if ptr.is_null() {
        return Err(fail(
            SpotStatus::SpotErrInvalidArgument,
            format!("{what} must not be NULL"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail(
            SpotStatus::SpotErrInvalidArgument,
            format!("{what} must be valid UTF-8"),
        )
    })
}

/// Message describing the most recent failure on this thread, as a
/// NUL-terminated UTF-8 string. Valid until the next failing call on the
/// same thread. Never NULL; empty before any failure.
#[no_mangle]
pub extern "C" fn spot_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Load a persisted model (`.spotngm` plus its vocabulary sidecar) into a
/// fresh handle written to `*out`.
///
/// # Safety
/// `model_path` and `vocab_path` must be valid NUL-terminated strings and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spot_model_load(
    model_path: *const c_char,
    vocab_path: *const c_char,
    out: *mut *mut SpotModel,
) -> SpotStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SpotStatus::SpotErrInvalidArgument, "out must not be NULL");
        }
        let model_path = match required_str(model_path, "model_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let vocab_path = match required_str(vocab_path, "vocab_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match NgramModel::load(Path::new(model_path), Path::new(vocab_path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SpotModel { inner }));
                SpotStatus::SpotOk
            }
            Err(e) => fail(backend_status(&e), e.to_string()),
        }
    })
}

/// Train an in-memory model from one UTF-8 corpus string (default
/// hyperparameters) and write the handle to `*out`. Intended for tests and
/// small embedders; production models should be trained once and persisted.
///
/// # Safety
/// `corpus` and `model_id` must be valid NUL-terminated strings and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spot_model_train(
    corpus: *const c_char,
    model_id: *const c_char,
    out: *mut *mut SpotModel,
) -> SpotStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SpotStatus::SpotErrInvalidArgument, "out must not be NULL");
        }
        let corpus = match required_str(corpus, "corpus") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let model_id = match required_str(model_id, "model_id") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match train_ngram(&[corpus], &NgramParams::default(), model_id) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SpotModel { inner }));
                SpotStatus::SpotOk
            }
            Err(e) => fail(backend_status(&e), e.to_string()),
        }
    })
}

/// Destroy a handle. NULL is a no-op. The handle must not be used afterward.
///
/// # Safety
/// `model` must be NULL or a pointer returned by a constructor of this
/// library that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn spot_model_free(model: *mut SpotModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size of the model; 0 if `model` is NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spot_model_vocab_size(model: *const SpotModel) -> u32 {
    if model.is_null() {
        return 0;
    }
    (*model).inner.vocab_size()
}

unsafe fn model_ref<'a>(model: *const SpotModel) -> Result<&'a NgramModel, SpotStatus> {
    if model.is_null() {
        return Err(fail(
            SpotStatus::SpotErrInvalidArgument,
            "model must not be NULL",
        ));
    }
    Ok(&(*model).inner)
}

/// Aggregate originality score of `tokens[context_len..]` conditioned on the
/// full prefix: mean per-token score (rank divided by vocabulary size) times
/// 10. Written to `*out_score`. Requires `context_len < len`.
///
/// # Safety
/// `tokens` must point to `len` readable u32s; `out_score` must be valid.
#[no_mangle]
pub unsafe extern "C" fn spot_score(
    model: *const SpotModel,
    tokens: *const u32,
    len: usize,
    context_len: usize,
    out_score: *mut f64,
) -> SpotStatus {
    guarded(|| {
        let inner = match model_ref(model) {
            Ok(m) => m,
            Err(status) => return status,
        };
        if tokens.is_null() || out_score.is_null() {
            return fail(
                SpotStatus::SpotErrInvalidArgument,
                "tokens and out_score must not be NULL",
            );
        }
        if context_len >= len {
            return fail(
                SpotStatus::SpotErrInvalidArgument,
                "context_len must be smaller than len (empty completion)",
            );
        }
        let tokens = std::slice::from_raw_parts(tokens, len);
        let rv = match ranks_for(inner, tokens, context_len) {
            Ok(rv) => rv,
            Err(e) => return fail(backend_status(&e), e.to_string()),
        };
        let per_token = match per_token_scores(&rv) {
            Ok(scores) => scores,
            Err(e) => return fail(SpotStatus::SpotErrBackend, e.to_string()),
        };
        match aggregate_score(&per_token) {
            Ok(score) => {
                *out_score = score;
                SpotStatus::SpotOk
            }
            Err(e) => fail(SpotStatus::SpotErrBackend, e.to_string()),
        }
    })
}

/// Per-position ranks of `tokens[context_len..]` (teacher-forced). Exactly
/// `len - context_len` values are written to `out_ranks`, which must have
/// that capacity.
///
/// # Safety
/// `tokens` must point to `len` readable u32s, `out_ranks` to
/// `len - context_len` writable u32s.
#[no_mangle]
pub unsafe extern "C" fn spot_ranks(
    model: *const SpotModel,
    tokens: *const u32,
    len: usize,
    context_len: usize,
    out_ranks: *mut u32,
) -> SpotStatus {
    guarded(|| {
        let inner = match model_ref(model) {
            Ok(m) => m,
            Err(status) => return status,
        };
        if tokens.is_null() || out_ranks.is_null() {
            return fail(
                SpotStatus::SpotErrInvalidArgument,
                "tokens and out_ranks must not be NULL",
            );
        }
        if context_len > len {
            return fail(
                SpotStatus::SpotErrInvalidArgument,
                "context_len must not exceed len",
            );
        }
        let tokens = std::slice::from_raw_parts(tokens, len);
        match ranks_for(inner, tokens, context_len) {
            Ok(rv) => {
                std::ptr::copy_nonoverlapping(rv.ranks.as_ptr(), out_ranks, rv.ranks.len());
                SpotStatus::SpotOk
            }
            Err(e) => fail(backend_status(&e), e.to_string()),
        }
    })
}

/// Score and classify in one step: `*out_is_human` becomes 1 when the
/// aggregate score strictly exceeds `rho`, else 0. The score itself is also
/// written to `*out_score` when that pointer is non-NULL.
///
/// # Safety
/// Pointer contract as in [`spot_score`]; `out_is_human` must be valid.
#[no_mangle]
pub unsafe extern "C" fn spot_detect(
    model: *const SpotModel,
    tokens: *const u32,
    len: usize,
    context_len: usize,
    rho: f64,
    out_is_human: *mut i32,
    out_score: *mut f64,
) -> SpotStatus {
    guarded(|| {
        if out_is_human.is_null() {
            return fail(
                SpotStatus::SpotErrInvalidArgument,
                "out_is_human must not be NULL",
            );
        }
        if !rho.is_finite() {
            return fail(SpotStatus::SpotErrInvalidArgument, "rho must be finite");
        }
        let mut score = 0.0;
        let status = spot_score(model, tokens, len, context_len, &mut score);
        if status != SpotStatus::SpotOk {
            return status;
        }
        *out_is_human = i32::from(score > rho);
        if !out_score.is_null() {
            *out_score = score;
        }
        SpotStatus::SpotOk
    })
}

/// Greedy-generate `s` tokens after `context` (lowest-id argmax ties) into
/// `out_tokens`, which must hold `s` values.
///
/// # Safety
/// `context` must point to `context_len` readable u32s (may be NULL when
/// `context_len` is 0); `out_tokens` to `s` writable u32s.
#[no_mangle]
pub unsafe extern "C" fn spot_generate(
    model: *const SpotModel,
    context: *const u32,
    context_len: usize,
    s: usize,
    out_tokens: *mut u32,
) -> SpotStatus {
    guarded(|| {
        let inner = match model_ref(model) {
            Ok(m) => m,
            Err(status) => return status,
        };
        if out_tokens.is_null() || (context.is_null() && context_len > 0) {
            return fail(
                SpotStatus::SpotErrInvalidArgument,
                "context and out_tokens must not be NULL",
            );
        }
        let context = if context_len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(context, context_len)
        };
        match greedy_generate(inner, context, s) {
            Ok(generated) => {
                std::ptr::copy_nonoverlapping(generated.as_ptr(), out_tokens, generated.len());
                SpotStatus::SpotOk
            }
            Err(e) => fail(backend_status(&e), e.to_string()),
        }
    })
}

/// Tokenize UTF-8 `text` with the model's own tokenizer. Writes at most
/// `capacity` ids to `out_tokens` and always stores the full token count in
/// `*out_len`; returns `SPOT_ERR_BUFFER_TOO_SMALL` when it did not fit.
///
/// # Safety
/// `text` must be a valid NUL-terminated string; `out_tokens` must point to
/// `capacity` writable u32s (may be NULL when `capacity` is 0); `out_len`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn spot_encode(
    model: *const SpotModel,
    text: *const c_char,
    out_tokens: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> SpotStatus {
    guarded(|| {
        let inner = match model_ref(model) {
            Ok(m) => m,
            Err(status) => return status,
        };
        if out_len.is_null() || (out_tokens.is_null() && capacity > 0) {
            return fail(
                SpotStatus::SpotErrInvalidArgument,
                "out_tokens and out_len must not be NULL",
            );
        }
        let text = match required_str(text, "text") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let tokens = inner.encode(text);
        *out_len = tokens.len();
        if tokens.len() > capacity {
            return fail(
                SpotStatus::SpotErrBufferTooSmall,
                format!("need capacity {}, got {}", tokens.len(), capacity),
            );
        }
        std::ptr::copy_nonoverlapping(tokens.as_ptr(), out_tokens, tokens.len());
        SpotStatus::SpotOk
    })
}

/// Decode token ids back to text. Writes at most `capacity` bytes (no NUL
/// terminator) to `out_text` and always stores the full byte length in
/// `*out_len`; returns `SPOT_ERR_BUFFER_TOO_SMALL` when it did not fit.
///
/// # Safety
/// `tokens` must point to `len` readable u32s; `out_text` must point to
/// `capacity` writable bytes (may be NULL when `capacity` is 0); `out_len`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn spot_decode(
    model: *const SpotModel,
    tokens: *const u32,
    len: usize,
    out_text: *mut u8,
    capacity: usize,
    out_len: *mut usize,
) -> SpotStatus {
    guarded(|| {
        let inner = match model_ref(model) {
            Ok(m) => m,
            Err(status) => return status,
        };
        if out_len.is_null() || (tokens.is_null() && len > 0) || (out_text.is_null() && capacity > 0)
        {
            return fail(
                SpotStatus::SpotErrInvalidArgument,
                "tokens, out_text and out_len must not be NULL",
            );
        }
        let tokens = if len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(tokens, len)
        };
        let text = inner.decode(tokens);
        *out_len = text.len();
        if text.len() > capacity {
            return fail(
                SpotStatus::SpotErrBufferTooSmall,
                format!("need capacity {}, got {}", text.len(), capacity),
            );
        }
        std::ptr::copy_nonoverlapping(text.as_ptr(), out_text, text.len());
        SpotStatus::SpotOk
    })
}
