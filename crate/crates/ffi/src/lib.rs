//! C interface to `sabre-core`.
//!
//! Objects cross the boundary as opaque handles created by `sabre_*_new` or
//! `sabre_fit_*` and released with the matching `*_free`. Every fallible call
//! returns a [`SabreStatus`]; on failure, [`sabre_last_error`] describes the
//! most recent error on the calling thread. Matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use sabre_core::harness::{knot_count, Exponent};
use sabre_core::inference::{beta_covariance, CovarianceFactors, InferenceError};
use sabre_core::sabre::{fit_sabre, SabreConfig, SabreError};
use sabre_core::smle::{fit_smle, Dataset, Design, FitError, FitInit, FitOptions};
use sabre_core::spline::{SplineBasis, SplineError};
use sabre_core::{Family, FamilyError, Model};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SabreStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Knots, basis size or a covariate outside `[0, 1]`.
    Spline = 3,
    /// A response or linear predictor outside the family's domain.
    Domain = 4,
    SingularDesign = 5,
    /// The fit was produced but did not converge; the handle is still set.
    NonConvergence = 6,
    SeparationSuspected = 7,
    PhiBoundary = 8,
    ReplicateFailures = 9,
    Inadmissible = 10,
    Inference = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SabreFamily {
    Gaussian = 0,
    Bernoulli = 1,
    Poisson = 2,
    InverseGaussian = 3,
    NegativeBinomial = 4,
}

impl From<SabreFamily> for Family {
    fn from(f: SabreFamily) -> Self {
        match f {
            SabreFamily::Gaussian => Family::Gaussian,
            SabreFamily::Bernoulli => Family::Bernoulli,
            SabreFamily::Poisson => Family::Poisson,
            SabreFamily::InverseGaussian => Family::InverseGaussian,
            SabreFamily::NegativeBinomial => Family::NegativeBinomial,
        }
    }
}

/// Settings for [`sabre_fit_sabre`]. Start from [`sabre_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SabreOptions {
    pub h: usize,
    pub max_iter: usize,
    pub step: f64,
    pub tol: f64,
    pub master_seed: u64,
    /// 0 uses all cores.
    pub threads: usize,
}

pub struct SabreBasis(SplineBasis);

pub struct SabreModel(Model);

pub struct SabreFit {
    design: Design,
    model: Model,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    phi: f64,
    converged: bool,
    iterations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(SabreStatus, String);

impl Failure {
    fn new(status: SabreStatus, message: impl Into<String>) -> Self {
        Failure(status, message.into())
    }
}

impl From<SplineError> for Failure {
    fn from(e: SplineError) -> Self {
        Failure::new(SabreStatus::Spline, e.to_string())
    }
}

impl From<FamilyError> for Failure {
    fn from(e: FamilyError) -> Self {
        let status = match e {
            FamilyError::InvalidDispersion(_) | FamilyError::InvalidMechanism(_) => {
                SabreStatus::InvalidArgument
            }
            _ => SabreStatus::Domain,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<FitError> for Failure {
    fn from(e: FitError) -> Self {
        let status = match &e {
            FitError::Family(f) => return f.clone().into(),
            FitError::Spline(s) => return s.clone().into(),
            FitError::SingularHessian { .. } => SabreStatus::SingularDesign,
            FitError::NonConvergence { .. } => SabreStatus::NonConvergence,
            FitError::SeparationSuspected { .. } => SabreStatus::SeparationSuspected,
            FitError::PhiBoundary { .. } => SabreStatus::PhiBoundary,
            FitError::DimensionMismatch(_) => SabreStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<SabreError> for Failure {
    fn from(e: SabreError) -> Self {
        let status = match &e {
            SabreError::SmleFailed(f) => Failure::from(f.clone()).0,
            SabreError::ReplicateFailures { .. } => SabreStatus::ReplicateFailures,
            SabreError::NonConvergence(_) => SabreStatus::NonConvergence,
            SabreError::Inadmissible { .. } => SabreStatus::Inadmissible,
            SabreError::InvalidConfig(_) => SabreStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<InferenceError> for Failure {
    fn from(e: InferenceError) -> Self {
        Failure::new(SabreStatus::Inference, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
}

fn guard(body: impl FnOnce() -> Result<SabreStatus, Failure>) -> SabreStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(status)) => {
            if status == SabreStatus::Ok {
                set_last_error("");
            }
            status
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SabreStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure::new(SabreStatus::NullPointer, "null pointer argument")
}

unsafe fn slice<'a, T>(data: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn handle<'a, T>(h: *const T) -> Result<&'a T, Failure> {
    h.as_ref().ok_or_else(null)
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<SabreStatus, Failure> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(SabreStatus::Ok)
}

unsafe fn write_all(src: &[f64], out: *mut f64, len: usize) -> Result<SabreStatus, Failure> {
    if len < src.len() {
        return Err(Failure::new(
            SabreStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    if !src.is_empty() && out.is_null() {
        return Err(null());
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(SabreStatus::Ok)
}

/// The message for the last failed call on this thread, or an empty string.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sabre_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// `floor(n^(num/den))` with an exact integer boundary check.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sabre_knot_count(
    n: u64,
    num: u32,
    den: u32,
    out: *mut usize,
) -> SabreStatus {
    guard(|| {
        let e = Exponent::Ratio { num, den };
        e.validate()
            .map_err(|m| Failure::new(SabreStatus::InvalidArgument, m))?;
        if n < 2 {
            return Err(Failure::new(
                SabreStatus::InvalidArgument,
                "n must be at least 2",
            ));
        }
        write(out, knot_count(n, e))
    })
}

/// Clamped B-spline basis of the given order with `n_interior` knots at
/// empirical quantiles of `z`.
///
/// # Safety
/// `z` must point to `n` readable values and `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sabre_basis_new(
    z: *const f64,
    n: usize,
    n_interior: usize,
    order: usize,
    out: *mut *mut SabreBasis,
) -> SabreStatus {
    guard(|| {
        let z = slice(z, n)?;
        let basis = SplineBasis::from_quantiles(z, n_interior, order)?;
        write(out, Box::into_raw(Box::new(SabreBasis(basis))))
    })
}

/// Number of basis functions, or 0 for a null handle.
///
/// # Safety
/// `basis` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sabre_basis_len(basis: *const SabreBasis) -> usize {
    basis.as_ref().map_or(0, |b| b.0.len())
}

/// Evaluates every basis function at `z` into `out[0..len)`.
///
/// # Safety
/// `basis` must be a live handle and `out` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn sabre_basis_eval(
    basis: *const SabreBasis,
    z: f64,
    out: *mut f64,
    len: usize,
) -> SabreStatus {
    guard(|| {
        let values = handle(basis)?.0.eval(z)?;
        write_all(&values, out, len)
    })
}

/// # Safety
/// `basis` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sabre_basis_free(basis: *mut SabreBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// A family with no response distortion.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sabre_model_new(
    family: SabreFamily,
    out: *mut *mut SabreModel,
) -> SabreStatus {
    guard(|| {
        let model = Model::plain(family.into());
        write(out, Box::into_raw(Box::new(SabreModel(model))))
    })
}

/// Bernoulli-logit observed through known false positive and false negative
/// rates.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sabre_model_misclassified(
    fpr: f64,
    fnr: f64,
    out: *mut *mut SabreModel,
) -> SabreStatus {
    guard(|| {
        let model = Model::misclassified(fpr, fnr)?;
        write(out, Box::into_raw(Box::new(SabreModel(model))))
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sabre_model_free(model: *mut SabreModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Defaults: 50 replicates, 200 iterations, unit gain, tolerance 1e-5.
#[no_mangle]
pub extern "C" fn sabre_options_default() -> SabreOptions {
    let d = SabreConfig::default();
    SabreOptions {
        h: d.h,
        max_iter: d.max_iter,
        step: d.step,
        tol: d.tol,
        master_seed: d.master_seed,
        threads: d.threads,
    }
}

struct Inputs<'a> {
    model: Model,
    basis: &'a SplineBasis,
    data: Dataset,
}

unsafe fn inputs<'a>(
    model: *const SabreModel,
    basis: *const SabreBasis,
    x: *const f64,
    z: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
) -> Result<Inputs<'a>, Failure> {
    let model = handle(model)?.0;
    let basis = &handle(basis)?.0;
    let x = slice(
        x,
        n.checked_mul(p)
            .ok_or_else(|| Failure::new(SabreStatus::InvalidArgument, "n * p overflows"))?,
    )?;
    let x = DMatrix::from_row_slice(n, p, x);
    let data = Dataset::new(x, slice(z, n)?.to_vec(), slice(y, n)?.to_vec())?;
    Ok(Inputs { model, basis, data })
}

unsafe fn emit(fit: SabreFit, out: *mut *mut SabreFit) -> Result<SabreStatus, Failure> {
    let status = if fit.converged {
        SabreStatus::Ok
    } else {
        SabreStatus::NonConvergence
    };
    write(out, Box::into_raw(Box::new(fit)))?;
    if status != SabreStatus::Ok {
        return Err(Failure::new(status, "fit did not converge"));
    }
    Ok(status)
}

/// Fits the B-spline MLE. `x` is `n × p` row-major, `z` lies in `[0, 1]`.
///
/// # Safety
/// Handles must be live, `x` must hold `n * p` values, `z` and `y` `n`
/// values, and `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sabre_fit_smle(
    model: *const SabreModel,
    basis: *const SabreBasis,
    x: *const f64,
    z: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
    out: *mut *mut SabreFit,
) -> SabreStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let input = inputs(model, basis, x, z, y, n, p)?;
        let fit = fit_smle(
            &input.data,
            input.basis,
            &input.model,
            &FitInit::default(),
            &FitOptions::default(),
        )?;
        let design = Design::new(input.basis, &input.data.x, &input.data.z)?;
        emit(
            SabreFit {
                design,
                model: input.model,
                beta: fit.beta,
                alpha: fit.alpha,
                phi: fit.phi,
                converged: fit.converged,
                iterations: fit.iterations,
            },
            out,
        )
    })
}

/// Fits the bias-corrected estimator. A null `options` uses the defaults.
/// On [`SabreStatus::NonConvergence`] the handle holds the last iterate and
/// must still be freed.
///
/// # Safety
/// As for [`sabre_fit_smle`]; `options` must be null or readable.
#[no_mangle]
pub unsafe extern "C" fn sabre_fit_sabre(
    model: *const SabreModel,
    basis: *const SabreBasis,
    x: *const f64,
    z: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
    options: *const SabreOptions,
    out: *mut *mut SabreFit,
) -> SabreStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let input = inputs(model, basis, x, z, y, n, p)?;
        let o = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| sabre_options_default());
        let cfg = SabreConfig {
            h: o.h,
            max_iter: o.max_iter,
            step: o.step,
            tol: o.tol,
            master_seed: o.master_seed,
            threads: o.threads,
            ..SabreConfig::default()
        };
        let result = match fit_sabre(&input.data, input.basis, &input.model, &cfg) {
            Ok(r) => r,
            Err(SabreError::NonConvergence(r)) => *r,
            Err(e) => return Err(e.into()),
        };
        let design = Design::new(input.basis, &input.data.x, &input.data.z)?;
        emit(
            SabreFit {
                design,
                model: input.model,
                beta: result.beta,
                alpha: result.alpha,
                phi: result.phi,
                converged: result.converged,
                iterations: result.iterations,
            },
            out,
        )
    })
}

/// Number of linear coefficients, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sabre_fit_p(fit: *const SabreFit) -> usize {
    fit.as_ref().map_or(0, |f| f.beta.len())
}

/// Number of spline coefficients, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sabre_fit_k(fit: *const SabreFit) -> usize {
    fit.as_ref().map_or(0, |f| f.alpha.len())
}

/// # Safety
/// `fit` must be a live handle and `out` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn sabre_fit_beta(
    fit: *const SabreFit,
    out: *mut f64,
    len: usize,
) -> SabreStatus {
    guard(|| write_all(&handle(fit)?.beta, out, len))
}

/// # Safety
/// `fit` must be a live handle and `out` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn sabre_fit_alpha(
    fit: *const SabreFit,
    out: *mut f64,
    len: usize,
) -> SabreStatus {
    guard(|| write_all(&handle(fit)?.alpha, out, len))
}

/// # Safety
/// `fit` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sabre_fit_phi(fit: *const SabreFit, out: *mut f64) -> SabreStatus {
    guard(|| write(out, handle(fit)?.phi))
}

/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sabre_fit_converged(fit: *const SabreFit) -> bool {
    fit.as_ref().is_some_and(|f| f.converged)
}

/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sabre_fit_iterations(fit: *const SabreFit) -> usize {
    fit.as_ref().map_or(0, |f| f.iterations)
}

/// Plug-in standard errors of β̂ from the profiled information.
///
/// # Safety
/// `fit` must be a live handle and `out` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn sabre_fit_beta_se(
    fit: *const SabreFit,
    out: *mut f64,
    len: usize,
) -> SabreStatus {
    guard(|| {
        let f = handle(fit)?;
        let mut gamma = f.beta.clone();
        gamma.extend_from_slice(&f.alpha);
        let factors = CovarianceFactors::new(&f.design, &f.model, &gamma, f.phi)?;
        let cov = beta_covariance(&factors)?;
        let se: Vec<f64> = cov.diagonal().iter().map(|v| v.sqrt()).collect();
        write_all(&se, out, len)
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sabre_fit_free(fit: *mut SabreFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
