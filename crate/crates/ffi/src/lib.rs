//! C ABI over `tnet`.
//!
//! Objects cross the boundary as opaque handles (`TnetTensor`,
//! `TnetTensorTrain`) that the caller releases with the matching `_free`.
//! Every fallible call returns a `TnetStatus`; on failure the message is
//! kept per thread and read back with `tnet_last_error`.
//!
//! Arrays written by the library go into caller buffers with an explicit
//! capacity. A too-small buffer yields `TNET_STATUS_BUFFER_TOO_SMALL` and
//! nothing is written.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tnet::circuits::induction_run;
use tnet::decomp::truncated_svd;
use tnet::tt::{tt_decompose, tt_to_dense, TensorTrain};
use tnet::{einsum, Error, Tensor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    ParseError = 4,
    OutOfBounds = 5,
    TooLarge = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Dense row-major tensor.
pub struct TnetTensor(Tensor);

/// Tensor train with `(left, physical, right)` cores.
pub struct TnetTensorTrain(TensorTrain);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TnetStatus {
    match e {
        Error::Parse { .. } => TnetStatus::ParseError,
        Error::IndexOutOfBounds { .. } => TnetStatus::OutOfBounds,
        Error::TooLarge(_) => TnetStatus::TooLarge,
        Error::Numerical(_) => TnetStatus::Numerical,
        Error::LengthMismatch { .. }
        | Error::ShapeMismatch(_)
        | Error::WrongOrder { .. }
        | Error::ArityMismatch { .. } => TnetStatus::ShapeMismatch,
        _ => TnetStatus::InvalidArgument,
    }
}

fn fail(status: TnetStatus, msg: impl Into<String>) -> TnetStatus {
    set_error(msg.into());
    status
}

/// Run `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), TnetStatus>) -> TnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TnetStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(TnetStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: tnet::Result<T>) -> Result<T, TnetStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn not_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, TnetStatus> {
    p.as_ref()
        .ok_or_else(|| fail(TnetStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, TnetStatus> {
    p.as_mut()
        .ok_or_else(|| fail(TnetStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], TnetStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(TnetStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T: Copy>(
    src: &[T],
    dst: *mut T,
    cap: usize,
    what: &str,
) -> Result<(), TnetStatus> {
    if cap < src.len() {
        return Err(fail(
            TnetStatus::BufferTooSmall,
            format!("{what} needs {} elements, buffer holds {cap}", src.len()),
        ));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return Err(fail(TnetStatus::NullPointer, format!("{what} is NULL")));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
    Ok(())
}

fn boxed(t: Tensor) -> *mut TnetTensor {
    Box::into_raw(Box::new(TnetTensor(t)))
}

/// Message for the most recent failure on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Create a tensor from a shape and `len` row-major values (copied).
/// `ndim = 0` makes a scalar.
///
/// # Safety
/// `shape` must point to `ndim` values and `data` to `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnet_tensor_new(
    shape: *const usize,
    ndim: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut TnetTensor,
) -> TnetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let shape = slice(shape, ndim, "shape")?.to_vec();
        let data = slice(data, len, "data")?.to_vec();
        *out = boxed(lift(Tensor::new(shape, data))?);
        Ok(())
    })
}

/// # Safety
/// `t` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn tnet_tensor_free(t: *mut TnetTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of legs; 0 for scalars and NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tnet_tensor_ndim(t: *const TnetTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.order())
}

/// Number of elements; 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tnet_tensor_len(t: *const TnetTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// Copy the shape into `out` (capacity `cap`).
///
/// # Safety
/// `t` must be a live handle and `out` writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn tnet_tensor_shape(
    t: *const TnetTensor,
    out: *mut usize,
    cap: usize,
) -> TnetStatus {
    guard(|| write_out(not_null(t, "tensor")?.0.shape(), out, cap, "shape"))
}

/// Copy the row-major data into `out` (capacity `cap`).
///
/// # Safety
/// `t` must be a live handle and `out` writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn tnet_tensor_data(
    t: *const TnetTensor,
    out: *mut f64,
    cap: usize,
) -> TnetStatus {
    guard(|| write_out(not_null(t, "tensor")?.0.data(), out, cap, "data"))
}

/// Evaluate an einsum expression (`"i j, j k -> i k"`) over `n` tensors.
///
/// # Safety
/// `expr` must be a NUL-terminated string, `inputs` an array of `n` live
/// handles, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tnet_einsum(
    expr: *const c_char,
    inputs: *const *const TnetTensor,
    n: usize,
    out: *mut *mut TnetTensor,
) -> TnetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let expr = not_null(expr, "expr")?;
        let expr = CStr::from_ptr(expr)
            .to_str()
            .map_err(|_| fail(TnetStatus::InvalidArgument, "expression is not UTF-8"))?;
        let handles = slice(inputs, n, "inputs")?;
        let tensors = handles
            .iter()
            .map(|&h| not_null(h, "input tensor").map(|t| t.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        *out = boxed(lift(einsum(expr, &tensors))?);
        Ok(())
    })
}

/// Rank-`k` SVD of a matrix (`k = 0` keeps all). Writes `U` (m×k), `s`
/// (length k), `Vt` (k×n) and the Frobenius truncation error (`err` may be NULL).
///
/// # Safety
/// `m` must be a live handle; `u`, `s`, `vt` writable.
#[no_mangle]
pub unsafe extern "C" fn tnet_svd(
    m: *const TnetTensor,
    k: usize,
    u: *mut *mut TnetTensor,
    s: *mut *mut TnetTensor,
    vt: *mut *mut TnetTensor,
    err: *mut f64,
) -> TnetStatus {
    guard(|| {
        let m = &not_null(m, "matrix")?.0;
        let (u, s, vt) = (out_ptr(u, "u")?, out_ptr(s, "s")?, out_ptr(vt, "vt")?);
        if m.order() != 2 {
            return Err(fail(
                TnetStatus::ShapeMismatch,
                format!("svd needs a matrix, got shape {:?}", m.shape()),
            ));
        }
        let k = if k == 0 {
            m.shape()[0].min(m.shape()[1])
        } else {
            k
        };
        let (res, e) = lift(truncated_svd(m, k))?;
        *u = boxed(res.u);
        *s = boxed(lift(Tensor::vector(res.s))?);
        *vt = boxed(res.vt);
        if let Some(err) = err.as_mut() {
            *err = e;
        }
        Ok(())
    })
}

/// Tensor-train decomposition. `max_bond = 0` means unbounded; singular
/// values at or below `tol` times the largest are dropped.
///
/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tnet_tt_decompose(
    t: *const TnetTensor,
    max_bond: usize,
    tol: f64,
    out: *mut *mut TnetTensorTrain,
) -> TnetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let t = &not_null(t, "tensor")?.0;
        let bond = if max_bond == 0 { usize::MAX } else { max_bond };
        let tt = lift(tt_decompose(t, bond, tol))?;
        *out = Box::into_raw(Box::new(TnetTensorTrain(tt)));
        Ok(())
    })
}

/// # Safety
/// `tt` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn tnet_tt_free(tt: *mut TnetTensorTrain) {
    if !tt.is_null() {
        drop(Box::from_raw(tt));
    }
}

/// Number of cores; 0 for NULL.
///
/// # Safety
/// `tt` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tnet_tt_len(tt: *const TnetTensorTrain) -> usize {
    tt.as_ref().map_or(0, |t| t.0.len())
}

/// Copy the `len + 1` bond dimensions (boundaries included) into `out`.
///
/// # Safety
/// `tt` must be a live handle and `out` writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn tnet_tt_bond_dims(
    tt: *const TnetTensorTrain,
    out: *mut usize,
    cap: usize,
) -> TnetStatus {
    guard(|| write_out(&not_null(tt, "train")?.0.bond_dims(), out, cap, "bond dims"))
}

/// Contract the train into a dense tensor.
///
/// # Safety
/// `tt` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tnet_tt_to_dense(
    tt: *const TnetTensorTrain,
    out: *mut *mut TnetTensor,
) -> TnetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(lift(tt_to_dense(&not_null(tt, "train")?.0))?);
        Ok(())
    })
}

/// Attention pattern of the toy induction head on a repeated random sequence
/// (`(pattern_len·repeats)²`, rows = query).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnet_induction_pattern(
    pattern_len: usize,
    repeats: usize,
    hidden: usize,
    seed: u64,
    out: *mut *mut TnetTensor,
) -> TnetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(lift(induction_run(pattern_len, repeats, hidden, seed))?.pattern);
        Ok(())
    })
}
