//! C ABI over `flowpmc`.
//!
//! Targets and sampler outputs are opaque heap handles created by `*_new` /
//! `flowpmc_run_ais` and released with the matching `*_free`. Every fallible call
//! returns a [`FlowpmcStatus`]; on failure a description of the last error on the
//! calling thread is available from [`flowpmc_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use flowpmc::estimators::snis_mean;
use flowpmc::numkit::{Matrix, RngStream};
use flowpmc::samplers::{run_ais, AisConfig, Algorithm, SamplerOutput};
use flowpmc::targets::{make_gmm_target, GaussianMixtureTarget, LabeledData, LogisticRegressionTarget, TargetDensity};
use flowpmc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowpmcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Non-positive-definite matrix, non-finite flow or gradient, degenerate weights.
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowpmcAlgorithm {
    Pmc = 0,
    GrPmc = 1,
    LrPmc = 2,
    SlPmc = 3,
    NfPmc = 4,
}

impl From<FlowpmcAlgorithm> for Algorithm {
    fn from(a: FlowpmcAlgorithm) -> Self {
        match a {
            FlowpmcAlgorithm::Pmc => Algorithm::Pmc,
            FlowpmcAlgorithm::GrPmc => Algorithm::GrPmc,
            FlowpmcAlgorithm::LrPmc => Algorithm::LrPmc,
            FlowpmcAlgorithm::SlPmc => Algorithm::SlPmc,
            FlowpmcAlgorithm::NfPmc => Algorithm::NfPmc,
        }
    }
}

/// Sampler settings. Obtain defaults from [`flowpmc_ais_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FlowpmcAisParams {
    pub algorithm: FlowpmcAlgorithm,
    pub proposals: usize,
    pub samples_per_proposal: usize,
    pub iterations: usize,
    pub sigma: f64,
    pub init_low: f64,
    pub init_high: f64,
    pub base_lr: f64,
    pub langevin_step: f64,
    pub langevin_noise: bool,
}

/// Opaque target density.
pub struct FlowpmcTarget {
    inner: Box<dyn TargetDensity>,
}

/// Opaque result of one sampler run.
pub struct FlowpmcOutput {
    inner: SamplerOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FlowpmcStatus {
    match e {
        Error::DimensionMismatch { .. } => FlowpmcStatus::DimensionMismatch,
        Error::NotPositiveDefinite { .. }
        | Error::NonFiniteFlow { .. }
        | Error::NonFiniteGradient { .. }
        | Error::DegenerateWeights(_) => FlowpmcStatus::Numerical,
        Error::Iteration { source, .. } => status_of(source),
        _ => FlowpmcStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guarded(body: impl FnOnce() -> Result<(), Failure>) -> FlowpmcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FlowpmcStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            FlowpmcStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic".into());
            FlowpmcStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or valid for `len` reads.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` is null or valid for `len` writes.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` is null or points to a live value.
unsafe fn reference<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn flowpmc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn flowpmc_ais_params_default(algorithm: FlowpmcAlgorithm) -> FlowpmcAisParams {
    let c = AisConfig::new(algorithm.into(), 100, 10, 50, 1.0);
    FlowpmcAisParams {
        algorithm,
        proposals: c.proposals,
        samples_per_proposal: c.samples_per_proposal,
        iterations: c.iterations,
        sigma: c.sigma,
        init_low: c.init_box.0,
        init_high: c.init_box.1,
        base_lr: c.base_lr,
        langevin_step: c.langevin_step,
        langevin_noise: c.langevin_noise,
    }
}

/// Gaussian mixture from `components` weights, `components·dim` row-major means and
/// `components·dim·dim` row-major covariances.
///
/// # Safety
/// Array arguments must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_gmm_target_new(
    dim: usize,
    components: usize,
    weights: *const f64,
    means: *const f64,
    covariances: *const f64,
    out: *mut *mut FlowpmcTarget,
) -> FlowpmcStatus {
    guarded(|| {
        let w = slice(weights, components, "weights")?;
        let m = slice(means, components * dim, "means")?;
        let c = slice(covariances, components * dim * dim, "covariances")?;
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()).into());
        }
        let covs = c
            .chunks(dim * dim)
            .map(|block| Matrix::from_vec(dim, dim, block.to_vec()))
            .collect::<flowpmc::Result<Vec<_>>>()?;
        let target = GaussianMixtureTarget::new(w.to_vec(), m.chunks(dim).map(<[f64]>::to_vec).collect(), covs)?;
        store(out, FlowpmcTarget { inner: Box::new(target) })
    })
}

/// A random mixture drawn with the benchmark generator from stream `(seed, stream)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_gmm_target_random(
    seed: u64,
    stream: u64,
    dim: usize,
    components: usize,
    out: *mut *mut FlowpmcTarget,
) -> FlowpmcStatus {
    guarded(|| {
        let target = make_gmm_target(&mut RngStream::new(seed, stream), dim, components)?;
        store(out, FlowpmcTarget { inner: Box::new(target) })
    })
}

/// Logistic-regression posterior with prior `N(0, zeta²I)` over `n` observations:
/// `design` is `n·dim` row-major, `labels` holds 0 or 1.
///
/// # Safety
/// Array arguments must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_logistic_target_new(
    dim: usize,
    n: usize,
    design: *const f64,
    labels: *const u8,
    zeta: f64,
    out: *mut *mut FlowpmcTarget,
) -> FlowpmcStatus {
    guarded(|| {
        let z = slice(design, n * dim, "design")?;
        let y = slice(labels, n, "labels")?;
        let data = LabeledData::new(Matrix::from_vec(n, dim, z.to_vec())?, y.to_vec())?;
        let target = LogisticRegressionTarget::new(dim, data, zeta)?;
        store(out, FlowpmcTarget { inner: Box::new(target) })
    })
}

/// # Safety
/// `target` is null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_target_free(target: *mut FlowpmcTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// Dimension of the target, or 0 for a null handle.
///
/// # Safety
/// `target` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_target_dim(target: *const FlowpmcTarget) -> usize {
    target.as_ref().map_or(0, |t| t.inner.dim())
}

/// # Safety
/// `x` is valid for `len` reads; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_target_log_density(
    target: *const FlowpmcTarget,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> FlowpmcStatus {
    guarded(|| {
        let t = reference(target, "target")?;
        let x = slice(x, len, "x")?;
        let out = slice_mut(out, 1, "out")?;
        out[0] = t.inner.log_density(x)?;
        Ok(())
    })
}

/// Writes `∇ log π(x)` into `grad` (length `len`).
///
/// # Safety
/// `x` and `grad` are valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_target_grad_log_density(
    target: *const FlowpmcTarget,
    x: *const f64,
    len: usize,
    grad: *mut f64,
) -> FlowpmcStatus {
    guarded(|| {
        let t = reference(target, "target")?;
        let x = slice(x, len, "x")?;
        let out = slice_mut(grad, len, "grad")?;
        out.copy_from_slice(&t.inner.grad_log_density(x)?);
        Ok(())
    })
}

/// Runs the sampler on `target` with randomness from stream `(seed, stream)`.
///
/// # Safety
/// `target` and `params` are live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_run_ais(
    target: *const FlowpmcTarget,
    params: *const FlowpmcAisParams,
    seed: u64,
    stream: u64,
    out: *mut *mut FlowpmcOutput,
) -> FlowpmcStatus {
    guarded(|| {
        let t = reference(target, "target")?;
        let p = reference(params, "params")?;
        let mut cfg = AisConfig::new(p.algorithm.into(), p.proposals, p.samples_per_proposal, p.iterations, p.sigma);
        cfg.init_box = (p.init_low, p.init_high);
        cfg.base_lr = p.base_lr;
        cfg.langevin_step = p.langevin_step;
        cfg.langevin_noise = p.langevin_noise;
        let output = run_ais(&cfg, t.inner.as_ref(), &RngStream::new(seed, stream))?;
        store(out, FlowpmcOutput { inner: output })
    })
}

/// # Safety
/// `output` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_output_free(output: *mut FlowpmcOutput) {
    if !output.is_null() {
        drop(Box::from_raw(output));
    }
}

/// Number of weighted samples, or 0 for a null handle.
///
/// # Safety
/// `output` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_output_sample_count(output: *const FlowpmcOutput) -> usize {
    output.as_ref().map_or(0, |o| o.inner.samples.len())
}

/// Copies all sample points (`count·dim` row-major) and their unnormalized log
/// weights (`count`). Either destination may be null to skip it.
///
/// # Safety
/// Non-null destinations are valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_output_samples(
    output: *const FlowpmcOutput,
    points: *mut f64,
    points_len: usize,
    log_weights: *mut f64,
    log_weights_len: usize,
) -> FlowpmcStatus {
    guarded(|| {
        let o = &reference(output, "output")?.inner;
        let count = o.samples.len();
        let dim = o.samples.first().map_or(0, |s| s.point.len());
        if !points.is_null() {
            if points_len != count * dim {
                return Err(Error::DimensionMismatch { expected: count * dim, got: points_len }.into());
            }
            let dst = slice_mut(points, points_len, "points")?;
            for (chunk, s) in dst.chunks_mut(dim.max(1)).zip(&o.samples) {
                chunk.copy_from_slice(&s.point);
            }
        }
        if !log_weights.is_null() {
            if log_weights_len != count {
                return Err(Error::DimensionMismatch { expected: count, got: log_weights_len }.into());
            }
            let dst = slice_mut(log_weights, log_weights_len, "log_weights")?;
            for (w, s) in dst.iter_mut().zip(&o.samples) {
                *w = s.log_weight;
            }
        }
        Ok(())
    })
}

/// Self-normalized mean over samples from iterations `>= burn_in`. `ess` and
/// `evidence` may be null.
///
/// # Safety
/// `mean` is valid for `len` writes; non-null scalars are writable.
#[no_mangle]
pub unsafe extern "C" fn flowpmc_output_snis_mean(
    output: *const FlowpmcOutput,
    burn_in: usize,
    mean: *mut f64,
    len: usize,
    ess: *mut f64,
    evidence: *mut f64,
) -> FlowpmcStatus {
    guarded(|| {
        let o = &reference(output, "output")?.inner;
        let est = snis_mean(o, burn_in)?;
        if len != est.mean.len() {
            return Err(Error::DimensionMismatch { expected: est.mean.len(), got: len }.into());
        }
        slice_mut(mean, len, "mean")?.copy_from_slice(&est.mean);
        if let Some(e) = ess.as_mut() {
            *e = est.ess;
        }
        if let Some(z) = evidence.as_mut() {
            *z = est.evidence;
        }
        Ok(())
    })
}
