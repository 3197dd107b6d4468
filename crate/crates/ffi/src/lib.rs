//! C ABI over the affectlens scorers and metrics.
//!
//! Every function returns an [`AffectStatus`]. On failure the message is
//! available from [`affect_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::path::Path;
use std::ptr;

use affectlens::asp::AffectSubspace;
use affectlens::embeddings::normalize_unit;
use affectlens::krr::{KrrConfig, KrrModel};
use affectlens::metrics::{pearson, spearman};
use affectlens::{AffectDimension, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AffectStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Dimension = 5,
    InvalidInput = 6,
    Numeric = 7,
    Panic = 99,
}

/// Fitted kernel ridge regressor for one dimension.
pub struct AffectKrr {
    model: KrrModel,
}

/// Affect subspace direction for one dimension.
pub struct AffectSubspaceHandle {
    subspace: AffectSubspace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> AffectStatus {
    match err {
        Error::Io { .. } => AffectStatus::Io,
        Error::Parse { .. } | Error::Format(_) | Error::Json(_) | Error::DuplicateWord { .. } => AffectStatus::Parse,
        Error::DimensionMismatch { .. } => AffectStatus::Dimension,
        Error::NonFinite(_) | Error::ZeroVector | Error::NotPositiveDefinite => AffectStatus::Numeric,
        _ => AffectStatus::InvalidInput,
    }
}

struct Failure(AffectStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AffectStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Failure> + UnwindSafe>(f: F) -> AffectStatus {
    clear_error();
    match catch_unwind(f) {
        Ok(Ok(())) => AffectStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            AffectStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|e| Failure(AffectStatus::InvalidUtf8, format!("path: {e}")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn dimension_arg(code: u32) -> Result<AffectDimension, Failure> {
    AffectDimension::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| Failure(AffectStatus::InvalidInput, format!("unknown dimension code {code}")))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn affect_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn affect_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load an `affect-krr/1` model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn affect_krr_load(path: *const c_char, out: *mut *mut AffectKrr) -> AffectStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = KrrModel::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(AffectKrr { model }));
        Ok(())
    })
}

/// Fit on `n` row-major feature vectors of length `d`. `dimension` is
/// 0 for power, 1 for sentiment, 2 for agency.
///
/// # Safety
/// `x` must hold `n * d` values, `y` must hold `n`, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn affect_krr_fit(
    x: *const f64,
    n: usize,
    d: usize,
    y: *const f64,
    alpha: f64,
    gamma: f64,
    dimension: u32,
    out: *mut *mut AffectKrr,
) -> AffectStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if d == 0 {
            return Err(Failure(AffectStatus::InvalidInput, "d must be positive".into()));
        }
        let len = n
            .checked_mul(d)
            .ok_or_else(|| Failure(AffectStatus::InvalidInput, "n * d overflows".into()))?;
        let x = slice_arg(x, len, "x")?;
        let y = slice_arg(y, n, "y")?;
        let rows: Vec<&[f64]> = x.chunks_exact(d).collect();
        let config = KrrConfig {
            alpha,
            gamma,
            ..KrrConfig::default()
        };
        let model = KrrModel::fit(&rows, y, config, dimension_arg(dimension)?)?;
        *out = Box::into_raw(Box::new(AffectKrr { model }));
        Ok(())
    })
}

/// Predict `n` row-major queries of length `d` into `out[0..n]`.
///
/// # Safety
/// `model` must come from this library; `x` holds `n * d` values and `out` `n`.
#[no_mangle]
pub unsafe extern "C" fn affect_krr_predict(
    model: *const AffectKrr,
    x: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> AffectStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if d != model.model.input_dim() {
            return Err(Error::dimension(model.model.input_dim(), d, "query vector").into());
        }
        let len = n
            .checked_mul(d)
            .ok_or_else(|| Failure(AffectStatus::InvalidInput, "n * d overflows".into()))?;
        let x = slice_arg(x, len, "x")?;
        let out = out_slice(out, n, "out")?;
        for (row, slot) in x.chunks_exact(d).zip(out.iter_mut()) {
            *slot = model.model.predict(row)?;
        }
        Ok(())
    })
}

/// Write the model as an `affect-krr/1` file.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn affect_krr_save(model: *const AffectKrr, path: *const c_char) -> AffectStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        model.model.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Feature length the model expects, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn affect_krr_dim(model: *const AffectKrr) -> usize {
    model.as_ref().map_or(0, |m| m.model.input_dim())
}

/// # Safety
/// `model` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn affect_krr_free(model: *mut AffectKrr) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Load an `affect-asp/1` subspace file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn affect_subspace_load(
    path: *const c_char,
    out: *mut *mut AffectSubspaceHandle,
) -> AffectStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let subspace = AffectSubspace::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(AffectSubspaceHandle { subspace }));
        Ok(())
    })
}

/// Project `n` row-major vectors of length `d` onto the direction.
///
/// # Safety
/// `subspace` must come from this library; `x` holds `n * d` values and `out` `n`.
#[no_mangle]
pub unsafe extern "C" fn affect_subspace_project(
    subspace: *const AffectSubspaceHandle,
    x: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> AffectStatus {
    guard(|| {
        let s = subspace.as_ref().ok_or_else(|| null("subspace"))?;
        if d != s.subspace.input_dim() {
            return Err(Error::dimension(s.subspace.input_dim(), d, "query vector").into());
        }
        let len = n
            .checked_mul(d)
            .ok_or_else(|| Failure(AffectStatus::InvalidInput, "n * d overflows".into()))?;
        let x = slice_arg(x, len, "x")?;
        let out = out_slice(out, n, "out")?;
        for (row, slot) in x.chunks_exact(d).zip(out.iter_mut()) {
            *slot = s.subspace.project(row)?;
        }
        Ok(())
    })
}

/// Direction length, or 0 for a null handle.
///
/// # Safety
/// `subspace` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn affect_subspace_dim(subspace: *const AffectSubspaceHandle) -> usize {
    subspace.as_ref().map_or(0, |s| s.subspace.input_dim())
}

/// # Safety
/// `subspace` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn affect_subspace_free(subspace: *mut AffectSubspaceHandle) {
    if !subspace.is_null() {
        drop(Box::from_raw(subspace));
    }
}

/// # Safety
/// `x` and `y` must each hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn affect_pearson(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> AffectStatus {
    guard(|| {
        let r = pearson(slice_arg(x, n, "x")?, slice_arg(y, n, "y")?)?;
        *out_slice(out, 1, "out")?.first_mut().unwrap() = r;
        Ok(())
    })
}

/// # Safety
/// `x` and `y` must each hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn affect_spearman(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> AffectStatus {
    guard(|| {
        let r = spearman(slice_arg(x, n, "x")?, slice_arg(y, n, "y")?)?;
        *out_slice(out, 1, "out")?.first_mut().unwrap() = r;
        Ok(())
    })
}

/// Scale `v[0..n]` to unit length in place.
///
/// # Safety
/// `v` must hold `n` writable values.
#[no_mangle]
pub unsafe extern "C" fn affect_normalize_unit(v: *mut f64, n: usize) -> AffectStatus {
    guard(|| {
        let v = out_slice(v, n, "v")?;
        let unit = normalize_unit(v)?;
        v.copy_from_slice(&unit);
        Ok(())
    })
}
