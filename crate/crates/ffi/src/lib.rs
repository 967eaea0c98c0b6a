//! C ABI over `ortho-core`.
//!
//! Conventions:
//! - Every fallible function returns an [`OrthoStatus`]; on failure a
//!   message is available from [`ortho_last_error_message`] on the same
//!   thread until the next call into the library.
//! - Kernels and fixed-point results are opaque handles created by this
//!   library and released with the matching `*_free` function.
//! - Matrices are dense row-major `double` buffers. Output buffers are
//!   caller-allocated; a too-small buffer yields
//!   `ORTHO_STATUS_BUFFER_TOO_SMALL` and nothing is written.
//! - Panics never cross the boundary; they surface as `ORTHO_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ndarray::Array2;
use ortho_core::cluster_eval::{self, Labeling};
use ortho_core::datagen::{noisy_blocks, SyntheticSpec};
use ortho_core::kernel::{kernel_from_affinity, kernel_from_points, BandwidthChoice, KernelOptions, StochasticKernel};
use ortho_core::orthogonalize::{self, C2Mode, OrthoConfig, OrthoOutcome, Truncation, Variant};
use ortho_core::spectral::{decompose, diffusion_coordinates};
use ortho_core::{Error, SquareMatrix};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrthoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    DegenerateNeighborhood = 4,
    NotConjugateSymmetric = 5,
    RowUnderflow = 6,
    ConvergenceFailure = 7,
    BufferTooSmall = 8,
    Io = 9,
    Panic = 10,
}

/// Opaque row-stochastic kernel with its stationary distribution.
pub struct OrthoKernel {
    inner: StochasticKernel,
}

/// Opaque result of a fixed-point run.
pub struct OrthoResult {
    inner: OrthoOutcome,
}

/// Fixed-point settings; obtain defaults from [`ortho_settings_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OrthoSettings {
    pub c2: f64,
    /// Divide `c2` by the median positive diffusion distance of the start kernel.
    pub c2_relative: bool,
    /// Use the symmetric doubly stochastic variant.
    pub doubly_stochastic: bool,
    /// Leading eigenpairs used for diffusion distances; 0 means exact distances.
    pub truncation: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iter: usize,
    pub exponent_floor: f64,
    pub max_restarts: usize,
    pub divergence_window: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OrthoMetrics {
    pub ari: f64,
    pub nmi: f64,
    pub purity: f64,
}

enum Failure {
    Core(Error),
    Null(&'static str),
    Buffer { name: &'static str, needed: usize, got: usize },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn status(&self) -> OrthoStatus {
        match self {
            Failure::Null(_) => OrthoStatus::NullPointer,
            Failure::Buffer { .. } => OrthoStatus::BufferTooSmall,
            Failure::Core(e) => match e {
                Error::InvalidInput(_) => OrthoStatus::InvalidInput,
                Error::DimensionMismatch { .. } => OrthoStatus::DimensionMismatch,
                Error::DegenerateNeighborhood { .. } => OrthoStatus::DegenerateNeighborhood,
                Error::NotConjugateSymmetric { .. } => OrthoStatus::NotConjugateSymmetric,
                Error::RowUnderflow { .. } => OrthoStatus::RowUnderflow,
                Error::ConvergenceFailure { .. } => OrthoStatus::ConvergenceFailure,
                Error::Parse { .. } | Error::Io(_) | Error::Json(_) => OrthoStatus::Io,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Null(name) => format!("{name} must not be null"),
            Failure::Buffer { name, needed, got } => format!("{name} holds {got} elements but {needed} are needed"),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OrthoStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OrthoStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(failure.message());
            failure.status()
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {what}"));
            OrthoStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(ptr: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(ptr: *mut T, len: usize, needed: usize, name: &'static str) -> Result<&'a mut [T], Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    if len < needed {
        return Err(Failure::Buffer { name, needed, got: len });
    }
    Ok(std::slice::from_raw_parts_mut(ptr, needed))
}

unsafe fn handle<'a, T>(ptr: *const T, name: &'static str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or(Failure::Null(name))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn square(data: &[f64], n: usize) -> Result<SquareMatrix, Failure> {
    let a = Array2::from_shape_vec((n, n), data.to_vec()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(SquareMatrix::new(a)?)
}

fn checked_area(rows: usize, cols: usize) -> Result<usize, Failure> {
    rows.checked_mul(cols)
        .ok_or_else(|| Failure::Core(Error::InvalidInput("matrix size overflows".into())))
}

/// Message describing the last failure on this thread, or NULL. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ortho_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Kernel from an `n×n` nonnegative affinity matrix.
///
/// # Safety
/// `data` must point to `n*n` doubles and `out` to writable storage for a pointer.
#[no_mangle]
pub unsafe extern "C" fn ortho_kernel_from_affinity(
    data: *const f64,
    n: usize,
    alpha: f64,
    symmetrize: bool,
    out: *mut *mut OrthoKernel,
) -> OrthoStatus {
    guard(|| {
        let k = square(input(data, checked_area(n, n)?, "data")?, n)?;
        let inner = kernel_from_affinity(&k, alpha, symmetrize)?;
        store(out, OrthoKernel { inner })
    })
}

/// Kernel from `n_points` points in `dim` dimensions. A positive `neighbors`
/// selects adaptive bandwidths; otherwise `epsilon` is the global bandwidth.
///
/// # Safety
/// `points` must point to `n_points*dim` doubles and `out` to writable storage for a pointer.
#[no_mangle]
pub unsafe extern "C" fn ortho_kernel_from_points(
    points: *const f64,
    n_points: usize,
    dim: usize,
    neighbors: usize,
    epsilon: f64,
    alpha: f64,
    symmetrize: bool,
    out: *mut *mut OrthoKernel,
) -> OrthoStatus {
    guard(|| {
        let data = input(points, checked_area(n_points, dim)?, "points")?;
        let x = Array2::from_shape_vec((n_points, dim), data.to_vec()).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let bandwidth = if neighbors > 0 { BandwidthChoice::Neighbors(neighbors) } else { BandwidthChoice::Epsilon(epsilon) };
        let inner = kernel_from_points(&x, &KernelOptions { bandwidth, alpha, symmetrize })?;
        store(out, OrthoKernel { inner })
    })
}

/// Number of points of a kernel (0 for NULL).
///
/// # Safety
/// `kernel` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ortho_kernel_size(kernel: *const OrthoKernel) -> usize {
    kernel.as_ref().map_or(0, |k| k.inner.n())
}

/// Copies the `n×n` transition matrix into `out` (row-major).
///
/// # Safety
/// `kernel` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ortho_kernel_matrix(kernel: *const OrthoKernel, out: *mut f64, len: usize) -> OrthoStatus {
    guard(|| {
        let k = &handle(kernel, "kernel")?.inner;
        let dst = output(out, len, k.n() * k.n(), "out")?;
        dst.iter_mut().zip(k.matrix().as_array().iter()).for_each(|(d, s)| *d = *s);
        Ok(())
    })
}

/// Copies the stationary distribution (`n` doubles) into `out`.
///
/// # Safety
/// `kernel` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ortho_kernel_stationary(kernel: *const OrthoKernel, out: *mut f64, len: usize) -> OrthoStatus {
    guard(|| {
        let k = &handle(kernel, "kernel")?.inner;
        output(out, len, k.n(), "out")?.copy_from_slice(k.pi().as_slice().expect("contiguous"));
        Ok(())
    })
}

/// # Safety
/// `kernel` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ortho_kernel_free(kernel: *mut OrthoKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Eigenvalues of the kernel (`n` doubles), largest magnitude first.
///
/// # Safety
/// `kernel` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ortho_spectrum(kernel: *const OrthoKernel, out: *mut f64, len: usize) -> OrthoStatus {
    guard(|| {
        let k = &handle(kernel, "kernel")?.inner;
        let s = decompose(k)?;
        output(out, len, k.n(), "out")?.copy_from_slice(s.eigenvalues.as_slice().expect("contiguous"));
        Ok(())
    })
}

/// Diffusion coordinates at time `t`: `n×dims` row-major, constant
/// coordinate omitted, `1 <= dims <= n − 1`.
///
/// # Safety
/// `kernel` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ortho_diffusion_coordinates(
    kernel: *const OrthoKernel,
    t: f64,
    dims: usize,
    out: *mut f64,
    len: usize,
) -> OrthoStatus {
    guard(|| {
        let k = &handle(kernel, "kernel")?.inner;
        let coords = diffusion_coordinates(&decompose(k)?, t, dims.saturating_add(1), true)?;
        let dst = output(out, len, coords.len(), "out")?;
        dst.iter_mut().zip(coords.iter()).for_each(|(d, s)| *d = *s);
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ortho_settings_default() -> OrthoSettings {
    let c = OrthoConfig::default();
    OrthoSettings {
        c2: c.c2,
        c2_relative: c.c2_mode == C2Mode::Relative,
        doubly_stochastic: c.variant == Variant::DoublyStochastic,
        truncation: match c.truncation {
            Truncation::Full => 0,
            Truncation::Leading(m) => m,
        },
        tol: c.tol,
        max_iter: c.max_iter,
        sinkhorn_tol: c.sinkhorn_tol,
        sinkhorn_max_iter: c.sinkhorn_max_iter,
        exponent_floor: c.exponent_floor,
        max_restarts: c.max_restarts,
        divergence_window: c.divergence_window,
    }
}

impl From<&OrthoSettings> for OrthoConfig {
    fn from(s: &OrthoSettings) -> Self {
        OrthoConfig {
            c2: s.c2,
            c2_mode: if s.c2_relative { C2Mode::Relative } else { C2Mode::Absolute },
            variant: if s.doubly_stochastic { Variant::DoublyStochastic } else { Variant::RowStochastic },
            truncation: if s.truncation == 0 { Truncation::Full } else { Truncation::Leading(s.truncation) },
            tol: s.tol,
            max_iter: s.max_iter,
            sinkhorn_tol: s.sinkhorn_tol,
            sinkhorn_max_iter: s.sinkhorn_max_iter,
            exponent_floor: s.exponent_floor,
            max_restarts: s.max_restarts,
            divergence_window: s.divergence_window,
        }
    }
}

/// Runs the fixed-point iteration from the prior kernel `q`. A NULL
/// `settings` uses the defaults. Reaching `max_iter` still succeeds; check
/// [`ortho_result_converged`].
///
/// # Safety
/// `q` must be a live handle, `settings` NULL or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ortho_fixpoint(
    q: *const OrthoKernel,
    settings: *const OrthoSettings,
    out: *mut *mut OrthoResult,
) -> OrthoStatus {
    guard(|| {
        let q = &handle(q, "q")?.inner;
        let cfg = settings.as_ref().map_or_else(OrthoConfig::default, OrthoConfig::from);
        let inner = orthogonalize::ortho_fixpoint(q, &cfg, None)?;
        store(out, OrthoResult { inner })
    })
}

/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ortho_result_converged(result: *const OrthoResult) -> bool {
    result.as_ref().is_some_and(|r| r.inner.converged())
}

/// Steps taken by the final attempt (0 for NULL).
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ortho_result_iterations(result: *const OrthoResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.trace.iterations)
}

/// Weight actually used by the final attempt (NaN for NULL).
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ortho_result_effective_c2(result: *const OrthoResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.effective_c2)
}

/// Number of recorded residuals across all attempts (0 for NULL).
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ortho_result_trace_len(result: *const OrthoResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.trace.len())
}

/// Copies the residual history into `out`.
///
/// # Safety
/// `result` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ortho_result_residuals(result: *const OrthoResult, out: *mut f64, len: usize) -> OrthoStatus {
    guard(|| {
        let r = &handle(result, "result")?.inner.trace.residuals;
        output(out, len, r.len(), "out")?.copy_from_slice(r);
        Ok(())
    })
}

/// New kernel handle holding the last iterate; free it separately.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ortho_result_kernel(result: *const OrthoResult, out: *mut *mut OrthoKernel) -> OrthoStatus {
    guard(|| {
        let inner = handle(result, "result")?.inner.kernel.clone();
        store(out, OrthoKernel { inner })
    })
}

/// # Safety
/// `result` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ortho_result_free(result: *mut OrthoResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// k-means on `n×m` row-major coordinates; writes `n` labels numbered by
/// first appearance.
///
/// # Safety
/// `coords` must hold `n*m` doubles and `labels_out` `n` entries.
#[no_mangle]
pub unsafe extern "C" fn ortho_kmeans(
    coords: *const f64,
    n: usize,
    m: usize,
    k: usize,
    seed: u64,
    restarts: usize,
    labels_out: *mut usize,
) -> OrthoStatus {
    guard(|| {
        let data = input(coords, checked_area(n, m)?, "coords")?;
        let x = Array2::from_shape_vec((n, m), data.to_vec()).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let labels = cluster_eval::kmeans(&x, k, seed, restarts)?;
        output(labels_out, n, n, "labels_out")?.copy_from_slice(labels.labels());
        Ok(())
    })
}

/// ARI, NMI and purity of `pred` against `truth`, both of length `n`.
///
/// # Safety
/// `pred` and `truth` must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ortho_metrics(
    pred: *const usize,
    truth: *const usize,
    n: usize,
    out: *mut OrthoMetrics,
) -> OrthoStatus {
    guard(|| {
        let p = Labeling::from_raw(input(pred, n, "pred")?);
        let t = Labeling::from_raw(input(truth, n, "truth")?);
        let r = cluster_eval::evaluate(&p, &t)?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = OrthoMetrics { ari: r.ari, nmi: r.nmi, purity: r.purity };
        Ok(())
    })
}

/// Noisy-block affinity of size `(block_size·num_blocks)²` and its block
/// labels.
///
/// # Safety
/// `matrix_out` must hold `matrix_len` doubles and `labels_out` `labels_len` entries.
#[no_mangle]
pub unsafe extern "C" fn ortho_noisy_blocks(
    block_size: usize,
    num_blocks: usize,
    noise_scale: f64,
    seed: u64,
    matrix_out: *mut f64,
    matrix_len: usize,
    labels_out: *mut usize,
    labels_len: usize,
) -> OrthoStatus {
    guard(|| {
        let spec = SyntheticSpec { block_size, num_blocks, noise_scale, seed };
        spec.validate()?;
        let n = block_size.checked_mul(num_blocks).ok_or(Failure::Core(Error::InvalidInput("size overflows".into())))?;
        let m_dst = output(matrix_out, matrix_len, checked_area(n, n)?, "matrix_out")?;
        let l_dst = output(labels_out, labels_len, n, "labels_out")?;
        let (q, truth) = noisy_blocks(&spec)?;
        m_dst.iter_mut().zip(q.as_array().iter()).for_each(|(d, s)| *d = *s);
        l_dst.copy_from_slice(truth.labels());
        Ok(())
    })
}
