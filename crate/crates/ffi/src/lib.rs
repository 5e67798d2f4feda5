//! C ABI over the faithtune core.
//!
//! Every function returns an [`FtStatus`]; results go through out-pointers.
//! On failure a message is kept per thread and read with
//! [`ft_last_error_message`]. Encoders are opaque handles owned by the
//! caller and released with [`ft_encoder_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use faithtune::encoder::EncoderParams;
use faithtune::eval::{judge, memorization_ratio, Judgment};
use faithtune::model::{ConflictItem, EmbeddingVector};
use faithtune::simgrad::{cosine_sim, infonce_loss, LossConfig};
use faithtune::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    Contract = 4,
    Numeric = 5,
    Io = 6,
    Config = 7,
    Transport = 8,
    Other = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtJudgment {
    Contextual = 0,
    Parametric = 1,
    Other = 2,
    Ambiguous = 3,
}

impl From<Judgment> for FtJudgment {
    fn from(j: Judgment) -> Self {
        match j {
            Judgment::Contextual => FtJudgment::Contextual,
            Judgment::Parametric => FtJudgment::Parametric,
            Judgment::Other => FtJudgment::Other,
            Judgment::Ambiguous => FtJudgment::Ambiguous,
        }
    }
}

/// Trained encoder parameters.
pub struct FtEncoder {
    params: EncoderParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> FtStatus {
    match e {
        Error::Schema { .. } | Error::Validation(_) => FtStatus::Validation,
        Error::Contract(_) | Error::Degenerate(_) => FtStatus::Contract,
        Error::Numeric(_) | Error::Divergence { .. } => FtStatus::Numeric,
        Error::Io { .. } | Error::Json(_) => FtStatus::Io,
        Error::Config(_) => FtStatus::Config,
        Error::Transport { .. } => FtStatus::Transport,
        Error::Anchor { source, .. } => status_of(source),
        Error::Generation(_) => FtStatus::Other,
    }
}

struct Fail(FtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FtStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside faithtune");
            FtStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(FtStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FtStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn vec_arg(p: *const f64, len: usize, what: &str) -> Result<EmbeddingVector, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(EmbeddingVector::new(std::slice::from_raw_parts(p, len).to_vec())?)
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next faithtune call on the same thread.
#[no_mangle]
pub extern "C" fn ft_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Loads a checkpoint written by `faithtune train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_encoder_load(path: *const c_char, out: *mut *mut FtEncoder) -> FtStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let params = EncoderParams::load(path)?;
        *out = Box::into_raw(Box::new(FtEncoder { params }));
        Ok(())
    })
}

/// # Safety
/// `enc` must come from [`ft_encoder_load`] and not be freed yet. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn ft_encoder_free(enc: *mut FtEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

/// # Safety
/// `enc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_encoder_dim(enc: *const FtEncoder, out: *mut usize) -> FtStatus {
    guard(|| {
        let enc = enc.as_ref().ok_or_else(|| null("encoder"))?;
        *out_arg(out, "out")? = enc.params.dim;
        Ok(())
    })
}

/// Writes the representation of (context, question, answer) into `out`,
/// which must hold exactly `out_len` = encoder dim values.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ft_encoder_encode(
    enc: *const FtEncoder,
    context: *const c_char,
    question: *const c_char,
    answer: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> FtStatus {
    guard(|| {
        let enc = enc.as_ref().ok_or_else(|| null("encoder"))?;
        let (c, q, a) = (
            str_arg(context, "context")?,
            str_arg(question, "question")?,
            str_arg(answer, "answer")?,
        );
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len != enc.params.dim {
            return Err(Fail(
                FtStatus::Contract,
                format!("out_len {out_len} != encoder dim {}", enc.params.dim),
            ));
        }
        let h = enc.params.encode(c, q, a)?;
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(h.as_slice());
        Ok(())
    })
}

/// Cosine similarity of two `len`-vectors.
///
/// # Safety
/// `x` and `y` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_cosine_sim(x: *const f64, y: *const f64, len: usize, epsilon_norm: f64, out: *mut f64) -> FtStatus {
    guard(|| {
        let (x, y) = (vec_arg(x, len, "x")?, vec_arg(y, len, "y")?);
        *out_arg(out, "out")? = cosine_sim(&x, &y, epsilon_norm)?;
        Ok(())
    })
}

/// InfoNCE loss. `negatives` holds `n_negatives` vectors of `len` values, row after row.
///
/// # Safety
/// `anchor` and `positive` must point to `len` doubles, `negatives` to
/// `n_negatives * len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_infonce_loss(
    anchor: *const f64,
    positive: *const f64,
    negatives: *const f64,
    n_negatives: usize,
    len: usize,
    temperature: f64,
    out: *mut f64,
) -> FtStatus {
    guard(|| {
        let a = vec_arg(anchor, len, "anchor")?;
        let p = vec_arg(positive, len, "positive")?;
        if negatives.is_null() {
            return Err(null("negatives"));
        }
        let total = n_negatives
            .checked_mul(len)
            .ok_or_else(|| Fail(FtStatus::Contract, "n_negatives * len overflows".into()))?;
        let flat = std::slice::from_raw_parts(negatives, total);
        let negs = flat
            .chunks(len.max(1))
            .map(|c| EmbeddingVector::new(c.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let r = infonce_loss(&a, &p, &negs, &LossConfig::with_temperature(temperature))?;
        *out_arg(out, "out")? = r.loss;
        Ok(())
    })
}

/// PRR / (CRR + PRR). `defined` is set to 0 when both rates are zero.
///
/// # Safety
/// `out` and `defined` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_memorization_ratio(crr: f64, prr: f64, out: *mut f64, defined: *mut i32) -> FtStatus {
    guard(|| {
        if !(crr.is_finite() && prr.is_finite() && crr >= 0.0 && prr >= 0.0) {
            return Err(Fail(FtStatus::Contract, format!("rates must be finite and >= 0, got {crr}, {prr}")));
        }
        let mr = memorization_ratio(crr, prr);
        *out_arg(out, "out")? = mr.unwrap_or(f64::NAN);
        *out_arg(defined, "defined")? = i32::from(mr.is_some());
        Ok(())
    })
}

/// Classifies `answer` against a conflict item's two candidate answers.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_judge(
    context: *const c_char,
    question: *const c_char,
    contextual_answer: *const c_char,
    parametric_answer: *const c_char,
    answer: *const c_char,
    out: *mut FtJudgment,
) -> FtStatus {
    guard(|| {
        let item = ConflictItem {
            id: "ffi".into(),
            context: str_arg(context, "context")?.into(),
            question: str_arg(question, "question")?.into(),
            contextual_answer: str_arg(contextual_answer, "contextual_answer")?.into(),
            parametric_answer: str_arg(parametric_answer, "parametric_answer")?.into(),
        };
        item.check().map_err(|e| Fail(FtStatus::Validation, e.to_string()))?;
        let answer = str_arg(answer, "answer")?;
        *out_arg(out, "out")? = judge(&item, answer).into();
        Ok(())
    })
}
