//! C ABI over `hyperlab`.
//!
//! Every fallible function returns an [`HlStatus`]. On failure the message
//! is kept per thread and read back with [`hl_last_error`]. Handles are
//! opaque and each has a matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use hyperlab::cantor::{build_cantor_field, cantor_lookup, verify_cantor_separation, CantorField};
use hyperlab::config::validate_config;
use hyperlab::diophantine::{solve_simultaneous, TorusTarget};
use hyperlab::eigenfields::{eigenvector_2b, EigenFamily};
use hyperlab::experiment::{run_experiment, RunError};
use hyperlab::steinhaus::khinchine_ratio;
use hyperlab::{Error, OperatorSpec, StateVector, C64};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Overflow, non-finite values or ill-conditioned eigenvalues.
    Numerical = 4,
    /// A search found nothing, or a Cantor node does not exist.
    NotFound = 5,
    Construction = 6,
    Config = 7,
    Io = 8,
    Panic = 9,
}

pub struct HlOperator(OperatorSpec);
pub struct HlVector(StateVector);
pub struct HlFamily(EigenFamily);
pub struct HlCantorField(CantorField);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> HlStatus {
    match e {
        Error::DimensionMismatch { .. } => HlStatus::DimensionMismatch,
        Error::InvalidParameter { .. } | Error::WrongOperatorKind(_) | Error::NetTooLarge { .. } => {
            HlStatus::InvalidArgument
        }
        Error::NonFinite(_) | Error::PowerOverflow { .. } | Error::IllConditioned { .. } => HlStatus::Numerical,
        Error::NetPointUnsolved { .. } | Error::EmptyReturnSet { .. } | Error::UnknownNode(_) => HlStatus::NotFound,
        Error::Construction { .. } | Error::Cantor { .. } => HlStatus::Construction,
    }
}

/// Runs `f`, recording errors and turning panics into `HlStatus::Panic`.
fn guard(f: impl FnOnce() -> Result<(), (HlStatus, String)>) -> HlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside hyperlab");
            HlStatus::Panic
        }
    }
}

fn core<T>(r: hyperlab::Result<T>) -> Result<T, (HlStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (HlStatus, String) {
    (HlStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> Result<&'a T, (HlStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (HlStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn array<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (HlStatus, String)> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(slice::from_raw_parts(p, len))
    }
}

unsafe fn complex_array(re: *const f64, im: *const f64, len: usize) -> Result<Vec<C64>, (HlStatus, String)> {
    let re = array(re, len, "re")?;
    let im = array(im, len, "im")?;
    Ok(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (HlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (HlStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `weight · B` truncated to dimension `d`.
///
/// # Safety
/// `out_op` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_operator_backward_shift(weight: f64, d: usize, out_op: *mut *mut HlOperator) -> HlStatus {
    guard(|| {
        let slot = out(out_op, "out_op")?;
        *slot = boxed(HlOperator(core(OperatorSpec::scaled_backward_shift(weight, d))?));
        Ok(())
    })
}

/// Diagonal with entries `e^{2πiθ_k}` plus an `ε·4^{-k}` superdiagonal.
///
/// # Safety
/// `angles` must hold `n` values; `out_op` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_operator_perturbed_diagonal(
    angles: *const f64,
    n: usize,
    epsilon: f64,
    d: usize,
    out_op: *mut *mut HlOperator,
) -> HlStatus {
    guard(|| {
        let angles = array(angles, n, "angles")?.to_vec();
        let slot = out(out_op, "out_op")?;
        *slot = boxed(HlOperator(core(OperatorSpec::perturbed_diagonal(angles, epsilon, d))?));
        Ok(())
    })
}

/// Dimension of the operator, 0 for a null handle.
///
/// # Safety
/// `op` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_operator_dim(op: *const HlOperator) -> usize {
    op.as_ref().map_or(0, |o| o.0.dim())
}

/// `T^n v` as a new vector.
///
/// # Safety
/// `op` and `v` must be live handles; `out_v` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_operator_power_apply(
    op: *const HlOperator,
    v: *const HlVector,
    n: u64,
    out_v: *mut *mut HlVector,
) -> HlStatus {
    guard(|| {
        let op = reference(op, "op")?;
        let v = reference(v, "v")?;
        let slot = out(out_v, "out_v")?;
        *slot = boxed(HlVector(core(op.0.power_apply(&v.0, n))?));
        Ok(())
    })
}

/// # Safety
/// `op` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hl_operator_free(op: *mut HlOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Vector from separate real and imaginary arrays of length `d`.
///
/// # Safety
/// `re` and `im` must hold `d` values; `out_v` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_vector_new(re: *const f64, im: *const f64, d: usize, out_v: *mut *mut HlVector) -> HlStatus {
    guard(|| {
        let entries = complex_array(re, im, d)?;
        let slot = out(out_v, "out_v")?;
        *slot = boxed(HlVector(core(StateVector::new(entries))?));
        Ok(())
    })
}

/// # Safety
/// `v` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_vector_dim(v: *const HlVector) -> usize {
    v.as_ref().map_or(0, |v| v.0.dim())
}

/// Euclidean norm, NaN for a null handle.
///
/// # Safety
/// `v` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_vector_norm(v: *const HlVector) -> f64 {
    v.as_ref().map_or(f64::NAN, |v| v.0.norm())
}

/// Copies the entries into `re` and `im`, which must have room for `len`
/// values; `len` must equal the dimension.
///
/// # Safety
/// `v` must be a live handle; `re` and `im` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn hl_vector_get(v: *const HlVector, re: *mut f64, im: *mut f64, len: usize) -> HlStatus {
    guard(|| {
        let v = reference(v, "v")?;
        if len != v.0.dim() {
            return Err((
                HlStatus::DimensionMismatch,
                format!("buffer holds {len} entries, vector has {}", v.0.dim()),
            ));
        }
        if len == 0 {
            return Ok(());
        }
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        let (re, im) = (slice::from_raw_parts_mut(re, len), slice::from_raw_parts_mut(im, len));
        for (k, z) in v.0.entries().iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
        Ok(())
    })
}

/// # Safety
/// `v` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hl_vector_free(v: *mut HlVector) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Normalized eigenvector of `weight · B` for `λ = e^{2πiθ}`, with its
/// truncation residual.
///
/// # Safety
/// `out_v` must be valid; `residual` may be null.
#[no_mangle]
pub unsafe extern "C" fn hl_eigenvector_2b(
    theta: f64,
    weight: f64,
    d: usize,
    out_v: *mut *mut HlVector,
    residual: *mut f64,
) -> HlStatus {
    guard(|| {
        let slot = out(out_v, "out_v")?;
        let pair = core(eigenvector_2b(theta, weight, d))?;
        if let Some(r) = residual.as_mut() {
            *r = pair.residual();
        }
        *slot = boxed(HlVector(pair.vector().clone()));
        Ok(())
    })
}

/// `count` eigenvectors of `weight · B` at angles `frac(√p_j)`.
///
/// # Safety
/// `out_f` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_family_sqrt_prime_2b(
    weight: f64,
    d: usize,
    count: usize,
    out_f: *mut *mut HlFamily,
) -> HlStatus {
    guard(|| {
        let slot = out(out_f, "out_f")?;
        *slot = boxed(HlFamily(core(EigenFamily::sqrt_prime_2b(weight, d, count))?));
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_family_len(f: *const HlFamily) -> usize {
    f.as_ref().map_or(0, |f| f.0.len())
}

/// # Safety
/// `f` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hl_family_free(f: *mut HlFamily) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Self-normalized `E|Σ a_n χ_n| / sqrt(E|Σ a_n χ_n|²)` over `trials`
/// Steinhaus draws.
///
/// # Safety
/// `re` and `im` must hold `n` values; `ratio` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_khinchine_ratio(
    re: *const f64,
    im: *const f64,
    n: usize,
    trials: u64,
    seed: u64,
    ratio: *mut f64,
) -> HlStatus {
    guard(|| {
        let coeffs = complex_array(re, im, n)?;
        let slot = out(ratio, "ratio")?;
        *slot = core(khinchine_ratio(&coeffs, trials, seed))?.ratio;
        Ok(())
    })
}

/// Smallest `1 ≤ p ≤ p_max` with `|e^{2πipθ_j} − e^{2πiφ_j}| < η` for all
/// `j`. Writes 0 and returns `Ok` when there is none.
///
/// # Safety
/// `angles` and `targets` must hold `n` values; `p` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_solve_simultaneous(
    angles: *const f64,
    targets: *const f64,
    n: usize,
    eta: f64,
    p_max: u64,
    p: *mut u64,
) -> HlStatus {
    guard(|| {
        let angles = array(angles, n, "angles")?.to_vec();
        let targets = array(targets, n, "targets")?;
        let slot = out(p, "p")?;
        let t = core(TorusTarget::from_target_angles(angles, targets, eta))?;
        *slot = core(solve_simultaneous(&t, p_max))?.unwrap_or(0);
        Ok(())
    })
}

/// Binary tree of eigenvectors chosen from `seed`, rooted at member `root`.
///
/// # Safety
/// `seed` must be a live handle; `out_c` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_cantor_build(
    seed: *const HlFamily,
    root: usize,
    depth: usize,
    out_c: *mut *mut HlCantorField,
) -> HlStatus {
    guard(|| {
        let seed = reference(seed, "seed")?;
        let slot = out(out_c, "out_c")?;
        *slot = boxed(HlCantorField(core(build_cantor_field(&seed.0, root, depth))?));
        Ok(())
    })
}

/// Angle and a copy of the eigenvector at node `s`, a string of `0`/`1`.
///
/// # Safety
/// `c` must be a live handle, `s` NUL-terminated; `theta` and `out_v` valid.
#[no_mangle]
pub unsafe extern "C" fn hl_cantor_lookup(
    c: *const HlCantorField,
    s: *const c_char,
    theta: *mut f64,
    out_v: *mut *mut HlVector,
) -> HlStatus {
    guard(|| {
        let c = reference(c, "c")?;
        let s = text(s, "s")?;
        let theta = out(theta, "theta")?;
        let slot = out(out_v, "out_v")?;
        let (t, v) = core(cantor_lookup(&c.0, s))?;
        *theta = t;
        *slot = boxed(HlVector(v.clone()));
        Ok(())
    })
}

/// Separation check. `passed` is set to 1 or 0, `min_margin` to the worst
/// branch margin; `violations` (optional) to the count of broken invariants.
///
/// # Safety
/// `c` must be a live handle; `passed` and `min_margin` valid.
#[no_mangle]
pub unsafe extern "C" fn hl_cantor_verify(
    c: *const HlCantorField,
    passed: *mut i32,
    min_margin: *mut f64,
    violations: *mut usize,
) -> HlStatus {
    guard(|| {
        let c = reference(c, "c")?;
        let passed = out(passed, "passed")?;
        let min_margin = out(min_margin, "min_margin")?;
        let r = verify_cantor_separation(&c.0);
        *passed = r.pass as i32;
        *min_margin = r.min_margin;
        if let Some(v) = violations.as_mut() {
            *v = r.violations.len();
        }
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hl_cantor_free(c: *mut HlCantorField) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Validates a TOML config, runs its pipelines and writes reports to
/// `out_dir`. `passed` is set to 1 when every pipeline passes.
///
/// # Safety
/// `config` and `out_dir` must be NUL-terminated; `passed` valid.
#[no_mangle]
pub unsafe extern "C" fn hl_run_config(config: *const c_char, out_dir: *const c_char, passed: *mut i32) -> HlStatus {
    guard(|| {
        let config = text(config, "config")?;
        let out_dir = text(out_dir, "out_dir")?;
        let passed = out(passed, "passed")?;
        let cfg = validate_config(config).map_err(|v| {
            let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
            (HlStatus::Config, msgs.join("; "))
        })?;
        let report = run_experiment(&cfg, Path::new(out_dir)).map_err(|e| {
            let status = match &e {
                RunError::Config(_) => HlStatus::Config,
                RunError::Pipeline { source, .. } => status_of(source),
                RunError::Io { .. } => HlStatus::Io,
            };
            (status, e.to_string())
        })?;
        *passed = report.pass() as i32;
        Ok(())
    })
}
