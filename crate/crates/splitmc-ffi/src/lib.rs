//! C ABI for the splitmc dense analysis engine.
//!
//! Conventions:
//! - Handles are opaque pointers created by `_new` and released by
//!   `_free`; passing null is an error, never a crash.
//! - Every fallible call returns a `SplitmcStatus`; on failure the
//!   thread-local message from `splitmc_last_error` explains why.
//! - Outputs are written through caller-provided pointers only on
//!   `SPLITMC_STATUS_OK`.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use splitmc::analysis::{
    commutator, connectivity, exact_matrix, fit_order, predict_order, rer, scheme_matrix,
    stationary,
};
use splitmc::matrix::Mat;
use splitmc::model::{complement_pairs, restrict, DenseGenerator, SchemeKind, SchemeSpec};

/// Result code of every fallible FFI call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitmcStatus {
    /// Success.
    Ok = 0,
    /// Null pointer or malformed argument.
    InvalidArgument = 1,
    /// Numerical analysis failed (reducible chain, fit failure, ...).
    AnalysisError = 2,
    /// Input failed validation (not a generator, bad split, ...).
    ValidationError = 3,
}

/// Splitting scheme selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitmcScheme {
    Lie = 0,
    Strang = 1,
}

impl From<SplitmcScheme> for SchemeSpec {
    fn from(s: SplitmcScheme) -> SchemeSpec {
        match s {
            SplitmcScheme::Lie => SchemeSpec::new(SchemeKind::Lie),
            SplitmcScheme::Strang => SchemeSpec::new(SchemeKind::Strang),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Copies the last error message on this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length
/// including the terminator, or 0 when there is no pending error.
///
/// # Safety
/// `buf` must point to `len` writable bytes (or be null with len 0).
#[no_mangle]
pub unsafe extern "C" fn splitmc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let guard = e.borrow();
        let Some(msg) = guard.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // Always terminate.
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// A dense chain with its splitting: the full generator plus the two
/// restrictions defined by the split mask.
pub struct SplitmcChain {
    l: DenseGenerator,
    l1: DenseGenerator,
    l2: DenseGenerator,
}

/// Builds a chain handle from a row-major n x n generator and a split
/// mask of `n_pairs` (from,to) index pairs kept by L1; L2 gets the
/// complement. Returns null on failure (see `splitmc_last_error`).
///
/// # Safety
/// `rates` must point to n*n doubles; `pairs` to 2*n_pairs uint64s.
#[no_mangle]
pub unsafe extern "C" fn splitmc_chain_new(
    rates: *const f64,
    n: usize,
    pairs: *const u64,
    n_pairs: usize,
) -> *mut SplitmcChain {
    if rates.is_null() || (pairs.is_null() && n_pairs > 0) || n == 0 {
        set_error("null input or zero dimension".into());
        return ptr::null_mut();
    }
    let data = slice::from_raw_parts(rates, n * n);
    let rows: Vec<Vec<f64>> = data.chunks(n).map(|r| r.to_vec()).collect();
    let l = match DenseGenerator::try_from_matrix(Mat::from_rows(&rows)) {
        Ok(l) => l,
        Err(e) => {
            set_error(e.to_string());
            return ptr::null_mut();
        }
    };
    let raw = slice::from_raw_parts(pairs, 2 * n_pairs);
    let mut mask = BTreeSet::new();
    for p in raw.chunks(2) {
        let (i, j) = (p[0] as usize, p[1] as usize);
        if i >= n || j >= n || i == j {
            set_error(format!("split pair ({i},{j}) out of range for {n} states"));
            return ptr::null_mut();
        }
        mask.insert((i, j));
    }
    let l1 = restrict(&l, &mask);
    let l2 = restrict(&l, &complement_pairs(n, &mask));
    Box::into_raw(Box::new(SplitmcChain { l, l1, l2 }))
}

/// Releases a chain handle. Null is a no-op.
///
/// # Safety
/// `chain` must be a pointer from `splitmc_chain_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn splitmc_chain_free(chain: *mut SplitmcChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

unsafe fn with_chain<T>(
    chain: *const SplitmcChain,
    out: *mut T,
    f: impl FnOnce(&SplitmcChain) -> Result<T, (SplitmcStatus, String)>,
) -> SplitmcStatus {
    if chain.is_null() || out.is_null() {
        set_error("null handle or output pointer".into());
        return SplitmcStatus::InvalidArgument;
    }
    let chain = &*chain;
    match catch_unwind(AssertUnwindSafe(|| f(chain))) {
        Ok(Ok(v)) => {
            ptr::write(out, v);
            SplitmcStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SplitmcStatus::AnalysisError
        }
    }
}

fn analysis_err(e: splitmc::analysis::AnalysisError) -> (SplitmcStatus, String) {
    (SplitmcStatus::AnalysisError, e.to_string())
}

/// Normalized relative entropy rate of the splitting chain against the
/// exact skeleton at `dt`, sampled from the scheme's stationary
/// measure; written to `out`.
///
/// # Safety
/// `chain` must be a live handle, `out` a writable double.
#[no_mangle]
pub unsafe extern "C" fn splitmc_chain_rer(
    chain: *const SplitmcChain,
    scheme: SplitmcScheme,
    dt: f64,
    out: *mut f64,
) -> SplitmcStatus {
    with_chain(chain, out, |c| {
        let spec: SchemeSpec = scheme.into();
        let po = exact_matrix(&c.l1, &c.l2, dt).map_err(analysis_err)?;
        let pb = scheme_matrix(&c.l1, &c.l2, &spec, dt).map_err(analysis_err)?;
        let mu = stationary(&pb).map_err(analysis_err)?;
        rer(&pb, &po, &mu).map_err(analysis_err)
    })
}

/// Fitted RER order and leading coefficient over the dyadic grid
/// dt = 2^-k, k = 4..10; written to `out_slope` / `out_coeff`.
///
/// # Safety
/// Pointers as in `splitmc_chain_rer`.
#[no_mangle]
pub unsafe extern "C" fn splitmc_chain_fit(
    chain: *const SplitmcChain,
    scheme: SplitmcScheme,
    out_slope: *mut f64,
    out_coeff: *mut f64,
) -> SplitmcStatus {
    if out_coeff.is_null() {
        set_error("null output pointer".into());
        return SplitmcStatus::InvalidArgument;
    }
    let mut coeff_tmp = 0.0f64;
    let status = with_chain(chain, out_slope, |c| {
        let spec: SchemeSpec = scheme.into();
        let mut samples = Vec::new();
        for k in (4..=10).rev() {
            let dt = 2f64.powi(-k);
            let po = exact_matrix(&c.l1, &c.l2, dt).map_err(analysis_err)?;
            let pb = scheme_matrix(&c.l1, &c.l2, &spec, dt).map_err(analysis_err)?;
            let mu = stationary(&pb).map_err(analysis_err)?;
            samples.push((dt, rer(&pb, &po, &mu).map_err(analysis_err)?));
        }
        let fit = fit_order(&samples).map_err(analysis_err)?;
        coeff_tmp = fit.coeffs[0];
        Ok(fit.slope)
    });
    if status == SplitmcStatus::Ok {
        ptr::write(out_coeff, coeff_tmp);
    }
    status
}

/// Predicted RER exponent 2p - (k_hat + 1) from connectivity and the
/// commutator support; written to `out`.
///
/// # Safety
/// Pointers as in `splitmc_chain_rer`.
#[no_mangle]
pub unsafe extern "C" fn splitmc_chain_predicted_order(
    chain: *const SplitmcChain,
    scheme: SplitmcScheme,
    out: *mut u32,
) -> SplitmcStatus {
    with_chain(chain, out, |c| {
        let spec: SchemeSpec = scheme.into();
        let conn = connectivity(&c.l, spec.p);
        let rep = commutator(&c.l, &c.l1, &c.l2, &spec).map_err(analysis_err)?;
        predict_order(&conn, &rep).map_err(|e| (SplitmcStatus::ValidationError, e.to_string()))
    })
}
