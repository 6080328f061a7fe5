//! C ABI over the covnoise library.
//!
//! Conventions:
//! - every fallible call returns a `CovnoiseStatus`; `COVNOISE_STATUS_OK`
//!   is zero,
//! - a human-readable message for the most recent failure on the calling
//!   thread is available through `covnoise_last_error_message`,
//! - matrices cross the boundary as row-major `double` buffers,
//! - objects are opaque handles created by `_new` functions and released by
//!   the matching `_free`; `_free` accepts null.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};

use covnoise::error::Error;
use covnoise::optimizer::{run_quadratic, RunConfig};
use covnoise::{CovarianceSpec, OuSystem, QuadraticProblem, Rng, StepSchedule};

/// Result codes for every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovnoiseStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotSymmetric = 3,
    NotPositiveDefinite = 4,
    DimMismatch = 5,
    Singular = 6,
    NonFinite = 7,
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> CovnoiseStatus {
    match err {
        Error::NotSquare { .. } | Error::ShapeMismatch(_) | Error::DimMismatch { .. } => {
            CovnoiseStatus::DimMismatch
        }
        Error::NotSymmetric { .. } => CovnoiseStatus::NotSymmetric,
        Error::NotPositiveDefinite { .. } | Error::NegativeEigenvalue { .. } => {
            CovnoiseStatus::NotPositiveDefinite
        }
        Error::SingularCovariance => CovnoiseStatus::Singular,
        Error::NonFiniteLoss { .. } => CovnoiseStatus::NonFinite,
        Error::Io(_) => CovnoiseStatus::Internal,
        _ => CovnoiseStatus::InvalidArgument,
    }
}

fn run_guarded<F>(body: F) -> CovnoiseStatus
where
    F: FnOnce() -> Result<(), (CovnoiseStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CovnoiseStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CovnoiseStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (CovnoiseStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_err(what: &str) -> (CovnoiseStatus, String) {
    (CovnoiseStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `ptr` must point to `len` readable doubles.
unsafe fn slice_arg<'a>(
    ptr: *const f64,
    len: usize,
    what: &str,
) -> Result<&'a [f64], (CovnoiseStatus, String)> {
    if ptr.is_null() {
        return Err(null_err(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn matrix_arg(
    ptr: *const f64,
    dim: usize,
    what: &str,
) -> Result<DMatrix<f64>, (CovnoiseStatus, String)> {
    let data = slice_arg(ptr, dim * dim, what)?;
    Ok(DMatrix::from_row_slice(dim, dim, data))
}

unsafe fn vector_arg(
    ptr: *const f64,
    dim: usize,
    what: &str,
) -> Result<DVector<f64>, (CovnoiseStatus, String)> {
    let data = slice_arg(ptr, dim, what)?;
    Ok(DVector::from_column_slice(data))
}

unsafe fn write_out<T>(ptr: *mut T, value: T, what: &str) -> Result<(), (CovnoiseStatus, String)> {
    if ptr.is_null() {
        return Err(null_err(what));
    }
    ptr.write(value);
    Ok(())
}

unsafe fn write_slice(
    ptr: *mut f64,
    values: &[f64],
    what: &str,
) -> Result<(), (CovnoiseStatus, String)> {
    if ptr.is_null() {
        return Err(null_err(what));
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), ptr, values.len());
    Ok(())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn covnoise_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the calling thread's last error message into `buf` (truncating) and
/// return the full message length in bytes, excluding the terminator. `buf`
/// may be null to query the length.
///
/// # Safety
/// `buf` must point to `len` writable bytes when non-null.
#[no_mangle]
pub unsafe extern "C" fn covnoise_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Opaque convex-quadratic problem (symmetric positive-definite matrix with
/// cached spectrum).
pub struct CovnoiseQuadratic(QuadraticProblem);

/// Opaque deterministic random generator.
pub struct CovnoiseRng(Rng);

/// Opaque Ornstein-Uhlenbeck system.
pub struct CovnoiseOu(OuSystem);

/// Build a quadratic problem from a row-major `dim x dim` symmetric
/// positive-definite matrix.
///
/// # Safety
/// `a` must point to `dim * dim` doubles and `out` to a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn covnoise_quadratic_new(
    dim: usize,
    a: *const f64,
    out: *mut *mut CovnoiseQuadratic,
) -> CovnoiseStatus {
    run_guarded(|| {
        if dim == 0 {
            return Err((CovnoiseStatus::InvalidArgument, "dim must be positive".into()));
        }
        let matrix = matrix_arg(a, dim, "a")?;
        let problem = QuadraticProblem::new(matrix).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(CovnoiseQuadratic(problem))), "out")
    })
}

/// # Safety
/// `p` must come from `covnoise_quadratic_new` (or be null).
#[no_mangle]
pub unsafe extern "C" fn covnoise_quadratic_free(p: *mut CovnoiseQuadratic) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Problem dimension; zero for a null handle.
///
/// # Safety
/// `p` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn covnoise_quadratic_dim(p: *const CovnoiseQuadratic) -> usize {
    if p.is_null() {
        0
    } else {
        (*p).0.dim()
    }
}

/// Extreme eigenvalues of the problem matrix.
///
/// # Safety
/// Pointers must be valid; `p` from `covnoise_quadratic_new`.
#[no_mangle]
pub unsafe extern "C" fn covnoise_quadratic_eigen_range(
    p: *const CovnoiseQuadratic,
    lambda_min: *mut f64,
    lambda_max: *mut f64,
) -> CovnoiseStatus {
    run_guarded(|| {
        if p.is_null() {
            return Err(null_err("p"));
        }
        write_out(lambda_min, (*p).0.lambda_min(), "lambda_min")?;
        write_out(lambda_max, (*p).0.lambda_max(), "lambda_max")
    })
}

/// L(theta) = 1/2 theta^T A theta.
///
/// # Safety
/// `theta` must hold `dim` doubles; `p` valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn covnoise_quadratic_loss(
    p: *const CovnoiseQuadratic,
    theta: *const f64,
    out: *mut f64,
) -> CovnoiseStatus {
    run_guarded(|| {
        if p.is_null() {
            return Err(null_err("p"));
        }
        let problem = &(*p).0;
        let theta = vector_arg(theta, problem.dim(), "theta")?;
        let loss = problem.loss(&theta).map_err(lib_err)?;
        write_out(out, loss, "out")
    })
}

/// grad L(theta) = A theta, written to `out` (`dim` doubles).
///
/// # Safety
/// `theta` and `out` must hold `dim` doubles; `p` valid.
#[no_mangle]
pub unsafe extern "C" fn covnoise_quadratic_gradient(
    p: *const CovnoiseQuadratic,
    theta: *const f64,
    out: *mut f64,
) -> CovnoiseStatus {
    run_guarded(|| {
        if p.is_null() {
            return Err(null_err("p"));
        }
        let problem = &(*p).0;
        let theta = vector_arg(theta, problem.dim(), "theta")?;
        let grad = problem.gradient(&theta).map_err(lib_err)?;
        write_slice(out, grad.as_slice(), "out")
    })
}

/// Tr(C^T A C) for a row-major `dim x dim` C.
///
/// # Safety
/// `c` must hold `dim * dim` doubles; `p` valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn covnoise_quadratic_trace_ctac(
    p: *const CovnoiseQuadratic,
    c: *const f64,
    out: *mut f64,
) -> CovnoiseStatus {
    run_guarded(|| {
        if p.is_null() {
            return Err(null_err("p"));
        }
        let problem = &(*p).0;
        let c = matrix_arg(c, problem.dim(), "c")?;
        let value = problem.trace_ctac(&c).map_err(lib_err)?;
        write_out(out, value, "out")
    })
}

/// The decaying-schedule expectation bound nu/(k + gamma).
///
/// # Safety
/// `c` is `dim x dim` row-major, `theta0` holds `dim` doubles; `p` valid.
#[no_mangle]
pub unsafe extern "C" fn covnoise_quadratic_theorem_bound(
    p: *const CovnoiseQuadratic,
    c: *const f64,
    theta0: *const f64,
    gamma: f64,
    k: u64,
    out: *mut f64,
) -> CovnoiseStatus {
    run_guarded(|| {
        if p.is_null() {
            return Err(null_err("p"));
        }
        let problem = &(*p).0;
        let c = matrix_arg(c, problem.dim(), "c")?;
        let theta0 = vector_arg(theta0, problem.dim(), "theta0")?;
        let bound = problem.theorem_bound(&c, &theta0, gamma, k).map_err(lib_err)?;
        write_out(out, bound, "out")
    })
}

/// Symmetric PSD square root of a row-major matrix, written row-major to
/// `out` (`dim * dim` doubles).
///
/// # Safety
/// `s` and `out` must hold `dim * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn covnoise_matrix_sqrt(
    dim: usize,
    s: *const f64,
    out: *mut f64,
) -> CovnoiseStatus {
    run_guarded(|| {
        if dim == 0 {
            return Err((CovnoiseStatus::InvalidArgument, "dim must be positive".into()));
        }
        let s = matrix_arg(s, dim, "s")?;
        let root = covnoise::matrix_sqrt(&s).map_err(lib_err)?;
        write_slice(out, &row_major(&root), "out")
    })
}

/// Create a deterministic generator for the given seed.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covnoise_rng_new(seed: u64, out: *mut *mut CovnoiseRng) -> CovnoiseStatus {
    run_guarded(|| write_out(out, Box::into_raw(Box::new(CovnoiseRng(Rng::new(seed)))), "out"))
}

/// # Safety
/// `rng` must come from `covnoise_rng_new` (or be null).
#[no_mangle]
pub unsafe extern "C" fn covnoise_rng_free(rng: *mut CovnoiseRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// Fill `out` with `n` standard normal draws.
///
/// # Safety
/// `out` must hold `n` doubles; `rng` valid.
#[no_mangle]
pub unsafe extern "C" fn covnoise_rng_standard_normal(
    rng: *mut CovnoiseRng,
    out: *mut f64,
    n: usize,
) -> CovnoiseStatus {
    run_guarded(|| {
        if rng.is_null() {
            return Err(null_err("rng"));
        }
        let rng = &mut (*rng).0;
        if out.is_null() {
            return Err(null_err("out"));
        }
        for i in 0..n {
            out.add(i).write(rng.next_gaussian());
        }
        Ok(())
    })
}

/// Number of rows a quadratic run with these settings will log (step 0, the
/// multiples of `log_every`, and the final step).
#[no_mangle]
pub extern "C" fn covnoise_trajectory_len(steps: u64, log_every: u64) -> usize {
    if log_every == 0 {
        return 0;
    }
    let mut len = steps / log_every + 1;
    if !steps.is_multiple_of(log_every) {
        len += 1;
    }
    len as usize
}

/// Run perturbed gradient descent on the quadratic with noise matrix `c`
/// (row-major, may be null for no noise). Uses the decaying schedule
/// 2/((k+gamma) lambda_min) when `gamma > 0`, otherwise the constant step
/// `alpha`. Writes one loss per logged row into `out_losses` and the row
/// count into `out_len`.
///
/// # Safety
/// `theta0` holds `dim` doubles; `out_losses` holds
/// `covnoise_trajectory_len(steps, log_every)` doubles; `p` valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn covnoise_run_quadratic(
    p: *const CovnoiseQuadratic,
    c: *const f64,
    theta0: *const f64,
    steps: u64,
    log_every: u64,
    seed: u64,
    gamma: f64,
    alpha: f64,
    out_losses: *mut f64,
    out_capacity: usize,
    out_len: *mut usize,
) -> CovnoiseStatus {
    run_guarded(|| {
        if p.is_null() {
            return Err(null_err("p"));
        }
        let problem = &(*p).0;
        let dim = problem.dim();
        let spec = if c.is_null() {
            CovarianceSpec::zero(dim)
        } else {
            CovarianceSpec::explicit(matrix_arg(c, dim, "c")?).map_err(lib_err)?
        };
        let theta0 = vector_arg(theta0, dim, "theta0")?;
        let schedule = if gamma > 0.0 {
            StepSchedule::theorem_decay(gamma, problem.lambda_min()).map_err(lib_err)?
        } else {
            StepSchedule::constant(alpha).map_err(lib_err)?
        };
        let needed = covnoise_trajectory_len(steps, log_every);
        if out_capacity < needed {
            return Err((
                CovnoiseStatus::InvalidArgument,
                format!("out_capacity {out_capacity} below required {needed}"),
            ));
        }
        let cfg = RunConfig::new(steps, schedule, seed)
            .map_err(lib_err)?
            .log_every(log_every)
            .map_err(lib_err)?;
        let log = run_quadratic(problem, &spec, &cfg, &theta0).map_err(lib_err)?;
        let losses: Vec<f64> = log.rows.iter().map(|r| r.loss).collect();
        write_slice(out_losses, &losses, "out_losses")?;
        write_out(out_len, losses.len(), "out_len")
    })
}

/// Build an Ornstein-Uhlenbeck system d theta = -A theta dt + sqrt(alpha) C dW.
///
/// # Safety
/// `a` and `c` are `dim x dim` row-major; `theta0` holds `dim` doubles;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn covnoise_ou_new(
    dim: usize,
    a: *const f64,
    c: *const f64,
    alpha: f64,
    theta0: *const f64,
    out: *mut *mut CovnoiseOu,
) -> CovnoiseStatus {
    run_guarded(|| {
        if dim == 0 {
            return Err((CovnoiseStatus::InvalidArgument, "dim must be positive".into()));
        }
        let a = matrix_arg(a, dim, "a")?;
        let c = matrix_arg(c, dim, "c")?;
        let theta0 = vector_arg(theta0, dim, "theta0")?;
        let sys = OuSystem::new(a, c, alpha, theta0).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(CovnoiseOu(sys))), "out")
    })
}

/// # Safety
/// `sys` must come from `covnoise_ou_new` (or be null).
#[no_mangle]
pub unsafe extern "C" fn covnoise_ou_free(sys: *mut CovnoiseOu) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Marginal mean exp(-A t) theta0, written to `out` (`dim` doubles).
///
/// # Safety
/// `out` must hold `dim` doubles; `sys` valid.
#[no_mangle]
pub unsafe extern "C" fn covnoise_ou_mean(
    sys: *const CovnoiseOu,
    t: f64,
    out: *mut f64,
) -> CovnoiseStatus {
    run_guarded(|| {
        if sys.is_null() {
            return Err(null_err("sys"));
        }
        let mean = (*sys).0.mean(t);
        write_slice(out, mean.as_slice(), "out")
    })
}

/// Closed-form marginal covariance at time `t`, written row-major to `out`
/// (`dim * dim` doubles).
///
/// # Safety
/// `out` must hold `dim * dim` doubles; `sys` valid.
#[no_mangle]
pub unsafe extern "C" fn covnoise_ou_covariance(
    sys: *const CovnoiseOu,
    t: f64,
    out: *mut f64,
) -> CovnoiseStatus {
    run_guarded(|| {
        if sys.is_null() {
            return Err(null_err("sys"));
        }
        let cov = (*sys).0.covariance(t);
        write_slice(out, &row_major(&cov), "out")
    })
}

/// Squared Hellinger distance between N(mean1, cov1) and N(mean2, cov2)
/// (row-major covariances).
///
/// # Safety
/// Means hold `dim` doubles, covariances `dim * dim`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn covnoise_hellinger_sq(
    dim: usize,
    mean1: *const f64,
    cov1: *const f64,
    mean2: *const f64,
    cov2: *const f64,
    out: *mut f64,
) -> CovnoiseStatus {
    run_guarded(|| {
        if dim == 0 {
            return Err((CovnoiseStatus::InvalidArgument, "dim must be positive".into()));
        }
        let g1 = covnoise::GaussianDist::new(
            vector_arg(mean1, dim, "mean1")?,
            matrix_arg(cov1, dim, "cov1")?,
        )
        .map_err(lib_err)?;
        let g2 = covnoise::GaussianDist::new(
            vector_arg(mean2, dim, "mean2")?,
            matrix_arg(cov2, dim, "cov2")?,
        )
        .map_err(lib_err)?;
        let h2 = covnoise::hellinger_sq(&g1, &g2).map_err(lib_err)?;
        write_out(out, h2, "out")
    })
}

/// Hellinger distance between the two systems' marginals at time `t` with
/// both diffusions scaled by `lambda`.
///
/// # Safety
/// Both handles must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn covnoise_scaled_hellinger(
    sys1: *const CovnoiseOu,
    sys2: *const CovnoiseOu,
    lambda: f64,
    t: f64,
    out: *mut f64,
) -> CovnoiseStatus {
    run_guarded(|| {
        if sys1.is_null() || sys2.is_null() {
            return Err(null_err("sys"));
        }
        let h2 =
            covnoise::scaled_hellinger(&(*sys1).0, &(*sys2).0, lambda, t).map_err(lib_err)?;
        write_out(out, h2, "out")
    })
}
