//! C interface to the capeig solvers.
//!
//! Problems and spectra are opaque heap objects owned by the caller and
//! released with their `_free` function. Every fallible call returns a
//! [`CapeigStatus`]; on failure a description is available from
//! [`capeig_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use capeig::cli::config::RunConfig;
use capeig::energy::EnergyContext;
use capeig::error::Error;
use capeig::grid::GridSpec;
use capeig::measure::{CapacitaryMeasure, WeightPair};
use capeig::spectrum::{eigen_minimax_with, EigenStatus, SpectralResult, SpectrumOptions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapeigStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Infeasible = 4,
    NotConverged = 5,
    BufferTooSmall = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapeigEigenStatus {
    Finite = 0,
    Infeasible = 1,
    Unresolved = 2,
}

/// A measure, weights and solver settings on a grid.
pub struct CapeigProblem {
    ctx: EnergyContext,
    options: SpectrumOptions,
}

/// Result of [`capeig_solve`].
pub struct CapeigSpectrum {
    result: SpectralResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: CapeigStatus, msg: impl Into<String>) -> CapeigStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> CapeigStatus {
    let status = match e {
        Error::NotConverged(_) | Error::LinearAlgebra(_) => CapeigStatus::NotConverged,
        Error::Infeasible(_) | Error::InfeasibleSubspace | Error::Unattainable(_) => CapeigStatus::Infeasible,
        _ => CapeigStatus::InvalidConfig,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> CapeigStatus) -> CapeigStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CapeigStatus::Panic, "internal panic"),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn capeig_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn capeig_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

fn boxed(ctx: EnergyContext, options: SpectrumOptions, out: *mut *mut CapeigProblem) -> CapeigStatus {
    // SAFETY: callers check `out` for NULL first.
    unsafe { *out = Box::into_raw(Box::new(CapeigProblem { ctx, options })) };
    CapeigStatus::Ok
}

/// Builds a problem from a JSON run configuration (the `grid`, `measure`,
/// `weights`, `solver` and `seed` sections are used).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capeig_problem_from_json(json: *const c_char, out: *mut *mut CapeigProblem) -> CapeigStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(CapeigStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            return fail(CapeigStatus::InvalidUtf8, "config is not valid UTF-8");
        };
        let built = RunConfig::parse(text).and_then(|cfg| {
            let ctx = EnergyContext::new(cfg.measure()?, cfg.weights()?)?;
            Ok((ctx, cfg.spectrum_options()?))
        });
        match built {
            Ok((ctx, options)) => boxed(ctx, options, out),
            Err(e) => from_error(e),
        }
    })
}

/// Builds a problem on a `dim`-dimensional box with `n` cells per side,
/// Lebesgue weight and per-cell potential `potential` (`n_cells` values,
/// `INFINITY` blocks a cell; NULL means zero).
///
/// # Safety
/// `lengths` must hold `dim` values, `potential` (if not NULL) `n^dim`
/// values, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capeig_problem_new(
    dim: usize,
    n: usize,
    lengths: *const f64,
    p: f64,
    potential: *const f64,
    out: *mut *mut CapeigProblem,
) -> CapeigStatus {
    guard(|| {
        if lengths.is_null() || out.is_null() {
            return fail(CapeigStatus::NullPointer, "null argument");
        }
        if !(1..=2).contains(&dim) {
            return fail(CapeigStatus::InvalidConfig, "dim must be 1 or 2");
        }
        let grid = match GridSpec::new(dim, n, slice::from_raw_parts(lengths, dim), p) {
            Ok(g) => g,
            Err(e) => return from_error(e),
        };
        let mu = if potential.is_null() {
            Ok(CapacitaryMeasure::zero(grid))
        } else {
            CapacitaryMeasure::from_potential(grid, slice::from_raw_parts(potential, grid.n_cells()))
        };
        match mu.and_then(|mu| EnergyContext::new(mu, WeightPair::lebesgue(grid))) {
            Ok(ctx) => boxed(ctx, SpectrumOptions::default(), out),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `problem` must come from a constructor above and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn capeig_problem_free(problem: *mut CapeigProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of interior nodes, the length of every field.
///
/// # Safety
/// `problem` must be NULL or a live problem.
#[no_mangle]
pub unsafe extern "C" fn capeig_problem_node_count(problem: *const CapeigProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.ctx.grid().n_nodes())
}

/// Computes `lambda_1..lambda_m_max`.
///
/// # Safety
/// `problem` must be a live problem and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capeig_solve(problem: *const CapeigProblem, m_max: usize, out: *mut *mut CapeigSpectrum) -> CapeigStatus {
    guard(|| {
        let Some(problem) = problem.as_ref() else {
            return fail(CapeigStatus::NullPointer, "null problem");
        };
        if out.is_null() {
            return fail(CapeigStatus::NullPointer, "null output");
        }
        match eigen_minimax_with(&problem.ctx, m_max, &problem.options, None) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(CapeigSpectrum { result }));
                CapeigStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `spectrum` must come from [`capeig_solve`] and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn capeig_spectrum_free(spectrum: *mut CapeigSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// # Safety
/// `spectrum` must be NULL or a live spectrum.
#[no_mangle]
pub unsafe extern "C" fn capeig_spectrum_len(spectrum: *const CapeigSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.result.len())
}

unsafe fn entry<T>(spectrum: *const CapeigSpectrum, index: usize, out: *mut T, get: impl FnOnce(&SpectralResult) -> T) -> CapeigStatus {
    let Some(s) = spectrum.as_ref() else {
        return fail(CapeigStatus::NullPointer, "null spectrum");
    };
    if out.is_null() {
        return fail(CapeigStatus::NullPointer, "null output");
    }
    if index >= s.result.len() {
        return fail(CapeigStatus::OutOfRange, format!("index {index} out of range"));
    }
    *out = get(&s.result);
    CapeigStatus::Ok
}

/// Eigenvalue `index` (0-based); `INFINITY` when infeasible.
///
/// # Safety
/// `spectrum` must be a live spectrum and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capeig_spectrum_lambda(spectrum: *const CapeigSpectrum, index: usize, out: *mut f64) -> CapeigStatus {
    entry(spectrum, index, out, |r| r.lambdas[index])
}

/// Relative residual of pair `index`; `NAN` when there is no eigenfield.
///
/// # Safety
/// `spectrum` must be a live spectrum and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capeig_spectrum_residual(spectrum: *const CapeigSpectrum, index: usize, out: *mut f64) -> CapeigStatus {
    entry(spectrum, index, out, |r| r.residuals.get(index).copied().unwrap_or(f64::NAN))
}

/// # Safety
/// `spectrum` must be a live spectrum and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capeig_spectrum_status(
    spectrum: *const CapeigSpectrum,
    index: usize,
    out: *mut CapeigEigenStatus,
) -> CapeigStatus {
    entry(spectrum, index, out, |r| match r.status[index] {
        EigenStatus::Finite => CapeigEigenStatus::Finite,
        EigenStatus::Infeasible => CapeigEigenStatus::Infeasible,
        EigenStatus::Unresolved => CapeigEigenStatus::Unresolved,
    })
}

/// Copies eigenfield `index` (nodal values) into `buf`.
///
/// # Safety
/// `spectrum` must be a live spectrum and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn capeig_spectrum_eigenfield(
    spectrum: *const CapeigSpectrum,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> CapeigStatus {
    guard(|| {
        let Some(s) = spectrum.as_ref() else {
            return fail(CapeigStatus::NullPointer, "null spectrum");
        };
        let Some(field) = s.result.eigenfields.get(index) else {
            return fail(CapeigStatus::OutOfRange, format!("no eigenfield {index}"));
        };
        copy_out(&field.values, buf, len)
    })
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> CapeigStatus {
    if buf.is_null() {
        return fail(CapeigStatus::NullPointer, "null buffer");
    }
    if len < values.len() {
        return fail(CapeigStatus::BufferTooSmall, format!("buffer needs {} values", values.len()));
    }
    slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
    CapeigStatus::Ok
}

/// Writes the torsion function of the problem's measure into `buf`.
///
/// # Safety
/// `problem` must be a live problem and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn capeig_torsion(problem: *const CapeigProblem, buf: *mut f64, len: usize) -> CapeigStatus {
    guard(|| {
        let Some(problem) = problem.as_ref() else {
            return fail(CapeigStatus::NullPointer, "null problem");
        };
        match capeig::torsion::torsion(problem.ctx.mu()) {
            Ok((w, report)) if report.converged => copy_out(&w.values, buf, len),
            Ok(_) => fail(CapeigStatus::NotConverged, "torsion solve did not converge"),
            Err(e) => from_error(e),
        }
    })
}
