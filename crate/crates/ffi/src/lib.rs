//! C ABI for `dsmhmc`.
//!
//! Tensors, score models and likelihoods cross the boundary as opaque
//! handles that the caller releases with the matching `*_free` function.
//! Every fallible call returns a [`DsmhmcStatus`]; on failure
//! [`dsmhmc_last_error`] describes the most recent error on the calling
//! thread. Panics never unwind into C: they are caught and reported as
//! `DSMHMC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use dsmhmc::dsm::Checkpoint;
use dsmhmc::forward_models::{GaussianLikelihood, MaskedFourierOperator};
use dsmhmc::hmc::{annealed_sample, AnnealingSchedule, SamplerConfig};
use dsmhmc::numerics::{read_tensor, write_tensor};
use dsmhmc::phantom_eval::psnr;
use dsmhmc::score_models::{IsotropicGaussianScore, TwoMoonsScore};
use dsmhmc::{Error, ScoreModel, Tensor};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsmhmcStatus {
    Ok = 0,
    NullPointer = 1,
    Sizing = 2,
    Shape = 3,
    Param = 4,
    Config = 5,
    Io = 6,
    Format = 7,
    Numerical = 8,
    InvalidUtf8 = 9,
    Panic = 10,
}

/// Dense row-major `f64` tensor.
pub struct DsmhmcTensor(Tensor);

/// Noise-conditional score model (analytic or a trained network).
pub struct DsmhmcScoreModel(Box<dyn ScoreModel>);

/// Gaussian likelihood of an undersampled Fourier (MRI) measurement.
pub struct DsmhmcLikelihood(GaussianLikelihood);

/// Annealed HMC settings; start from [`dsmhmc_sampler_params_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DsmhmcSamplerParams {
    pub sigma_init: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub exponent: f64,
    pub sigma_final: f64,
    pub steps_per_temperature: usize,
    pub final_steps: usize,
    pub leapfrog_steps: usize,
    pub quad_nodes: usize,
    pub mh: bool,
    pub eds: bool,
    pub sigma_floor: f64,
}

impl From<&DsmhmcSamplerParams> for SamplerConfig {
    fn from(p: &DsmhmcSamplerParams) -> Self {
        SamplerConfig {
            schedule: AnnealingSchedule {
                sigma_init: p.sigma_init,
                gamma: p.gamma,
                epsilon: p.epsilon,
                exponent: p.exponent,
                sigma_final: p.sigma_final,
                steps_per_temperature: p.steps_per_temperature,
                final_steps: p.final_steps,
            },
            leapfrog_steps: p.leapfrog_steps,
            quad_nodes: p.quad_nodes,
            mh: p.mh,
            eds: p.eds,
            sigma_floor: p.sigma_floor,
            record_every: 0,
        }
    }
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(f: &Failure) -> DsmhmcStatus {
    match f {
        Failure::Null(_) => DsmhmcStatus::NullPointer,
        Failure::Utf8(_) => DsmhmcStatus::InvalidUtf8,
        Failure::Core(e) => match e {
            Error::Sizing(_) => DsmhmcStatus::Sizing,
            Error::Shape(_) => DsmhmcStatus::Shape,
            Error::Param(_) => DsmhmcStatus::Param,
            Error::Config(_) => DsmhmcStatus::Config,
            Error::Io { .. } => DsmhmcStatus::Io,
            Error::Format { .. } => DsmhmcStatus::Format,
            Error::Numerical(_) => DsmhmcStatus::Numerical,
        },
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DsmhmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            DsmhmcStatus::Ok
        }
        Ok(Err(fail)) => {
            let status = status_of(&fail);
            set_last_error(match fail {
                Failure::Null(what) => format!("null pointer passed for `{what}`"),
                Failure::Utf8(what) => format!("`{what}` is not valid UTF-8"),
                Failure::Core(e) => e.to_string(),
            });
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            DsmhmcStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Utf8(what))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn clear<T>(out: *mut *mut T) {
    if !out.is_null() {
        *out = ptr::null_mut();
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dsmhmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or an empty string.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn dsmhmc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copy `len` values and a `rank`-long shape into a new tensor.
///
/// # Safety
/// `shape` must point to `rank` values and `data` to `len` values.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_tensor_new(
    shape: *const usize,
    rank: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut DsmhmcTensor,
) -> DsmhmcStatus {
    clear(out);
    guard(|| {
        let shape = if rank == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(deref(shape, "shape")?, rank).to_vec()
        };
        let data = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(deref(data, "data")?, len).to_vec()
        };
        put(out, DsmhmcTensor(Tensor::new(shape, data)?))
    })
}

/// Read a TNSR file.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_tensor_read(
    path: *const c_char,
    out: *mut *mut DsmhmcTensor,
) -> DsmhmcStatus {
    clear(out);
    guard(|| {
        let t = read_tensor(&path_arg(path, "path")?)?;
        put(out, DsmhmcTensor(t))
    })
}

/// Write a tensor as a TNSR file.
///
/// # Safety
/// `t` must be a live tensor handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_tensor_write(
    t: *const DsmhmcTensor,
    path: *const c_char,
) -> DsmhmcStatus {
    guard(|| {
        write_tensor(&path_arg(path, "path")?, &deref(t, "tensor")?.0)?;
        Ok(())
    })
}

/// Number of axes; 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live tensor handle.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_tensor_rank(t: *const DsmhmcTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.rank())
}

/// Number of elements; 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live tensor handle.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_tensor_len(t: *const DsmhmcTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// Copy the shape into `out` (capacity `cap`, at least the rank).
///
/// # Safety
/// `t` must be a live tensor handle and `out` writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_tensor_shape(
    t: *const DsmhmcTensor,
    out: *mut usize,
    cap: usize,
) -> DsmhmcStatus {
    guard(|| {
        let shape = deref(t, "tensor")?.0.shape();
        copy_out(shape, out, cap, "shape")
    })
}

/// Copy the row-major data into `out` (capacity `cap`, at least the length).
///
/// # Safety
/// `t` must be a live tensor handle and `out` writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_tensor_copy_data(
    t: *const DsmhmcTensor,
    out: *mut f64,
    cap: usize,
) -> DsmhmcStatus {
    guard(|| {
        let data = deref(t, "tensor")?.0.data();
        copy_out(data, out, cap, "data")
    })
}

unsafe fn copy_out<T: Copy>(
    src: &[T],
    out: *mut T,
    cap: usize,
    what: &'static str,
) -> Result<(), Failure> {
    if cap < src.len() {
        return Err(Error::Shape(format!(
            "{what} needs room for {} values, got {cap}",
            src.len()
        ))
        .into());
    }
    if !src.is_empty() {
        if out.is_null() {
            return Err(Failure::Null(what));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

/// Release a tensor; null is ignored.
///
/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_tensor_free(t: *mut DsmhmcTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Score network from a DSMC checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_score_model_load(
    path: *const c_char,
    out: *mut *mut DsmhmcScoreModel,
) -> DsmhmcStatus {
    clear(out);
    guard(|| {
        let net = Checkpoint::load(&path_arg(path, "path")?)?.net;
        put(out, DsmhmcScoreModel(Box::new(net)))
    })
}

/// Zero-mean isotropic Gaussian prior `N(0, τ² I)` in `dim` dimensions.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_score_model_gaussian(
    dim: usize,
    tau2: f64,
    out: *mut *mut DsmhmcScoreModel,
) -> DsmhmcStatus {
    clear(out);
    guard(|| {
        if dim == 0 {
            return Err(Error::Param("dim must be >= 1".into()).into());
        }
        let g = IsotropicGaussianScore::new(Tensor::zeros(&[dim]), tau2)?;
        put(out, DsmhmcScoreModel(Box::new(g)))
    })
}

/// The default two-moons Gaussian mixture in 2D.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_score_model_two_moons(
    out: *mut *mut DsmhmcScoreModel,
) -> DsmhmcStatus {
    clear(out);
    guard(|| put(out, DsmhmcScoreModel(Box::new(TwoMoonsScore::default()))))
}

/// Signal dimension of a model; 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_score_model_dim(m: *const DsmhmcScoreModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// Score of the σ-smoothed density at `x`, returned as a new tensor shaped
/// like `x`.
///
/// # Safety
/// `m` and `x` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_score_model_score(
    m: *const DsmhmcScoreModel,
    x: *const DsmhmcTensor,
    sigma: f64,
    out: *mut *mut DsmhmcTensor,
) -> DsmhmcStatus {
    clear(out);
    guard(|| {
        let m = &deref(m, "model")?.0;
        let x = &deref(x, "x")?.0;
        if x.len() != m.dim() {
            return Err(Error::Shape(format!(
                "x has {} entries, model expects {}",
                x.len(),
                m.dim()
            ))
            .into());
        }
        let s = m.score(x, sigma);
        if !s.is_finite() {
            return Err(Error::Numerical("score is not finite".into()).into());
        }
        put(out, DsmhmcTensor(s))
    })
}

/// Release a score model; null is ignored.
///
/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_score_model_free(m: *mut DsmhmcScoreModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Likelihood of packed k-space `y` (`H×W×2`) under a Cartesian mask given
/// as `H×W`, or as `W` column flags.
///
/// # Safety
/// `mask` and `y` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_likelihood_mri(
    mask: *const DsmhmcTensor,
    y: *const DsmhmcTensor,
    sigma_n: f64,
    out: *mut *mut DsmhmcLikelihood,
) -> DsmhmcStatus {
    clear(out);
    guard(|| {
        let mask = &deref(mask, "mask")?.0;
        let y = &deref(y, "y")?.0;
        let op = match (mask.rank(), y.shape()) {
            (2, _) => MaskedFourierOperator::new(mask.clone())?,
            (1, [h, _, 2]) => MaskedFourierOperator::from_columns(mask, *h)?,
            _ => {
                return Err(Error::Shape(format!(
                    "mask {:?} and measurement {:?} do not describe an H×W acquisition",
                    mask.shape(),
                    y.shape()
                ))
                .into())
            }
        };
        let lik = GaussianLikelihood::new(Arc::new(op), y.clone(), sigma_n)?;
        put(out, DsmhmcLikelihood(lik))
    })
}

/// Zero-filled reconstruction `Aᵀy` as a packed `H×W×2` tensor.
///
/// # Safety
/// `lik` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_likelihood_zero_filled(
    lik: *const DsmhmcLikelihood,
    out: *mut *mut DsmhmcTensor,
) -> DsmhmcStatus {
    clear(out);
    guard(|| {
        let lik = &deref(lik, "likelihood")?.0;
        let zf = lik.operator().adjoint(lik.measurement())?;
        put(out, DsmhmcTensor(zf))
    })
}

/// Release a likelihood; null is ignored.
///
/// # Safety
/// `lik` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_likelihood_free(lik: *mut DsmhmcLikelihood) {
    if !lik.is_null() {
        drop(Box::from_raw(lik));
    }
}

/// Library defaults for the annealed sampler.
#[no_mangle]
pub extern "C" fn dsmhmc_sampler_params_default() -> DsmhmcSamplerParams {
    let c = SamplerConfig::default();
    let s = c.schedule;
    DsmhmcSamplerParams {
        sigma_init: s.sigma_init,
        gamma: s.gamma,
        epsilon: s.epsilon,
        exponent: s.exponent,
        sigma_final: s.sigma_final,
        steps_per_temperature: s.steps_per_temperature,
        final_steps: s.final_steps,
        leapfrog_steps: c.leapfrog_steps,
        quad_nodes: c.quad_nodes,
        mh: c.mh,
        eds: c.eds,
        sigma_floor: c.sigma_floor,
    }
}

/// Run `n_chains` annealed HMC chains and return the samples stacked as
/// `n_chains × signal`. `lik` may be null for prior sampling.
///
/// # Safety
/// `prior` and `params` must be valid, `lik` null or live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_sample(
    prior: *const DsmhmcScoreModel,
    lik: *const DsmhmcLikelihood,
    params: *const DsmhmcSamplerParams,
    n_chains: usize,
    seed: u64,
    out: *mut *mut DsmhmcTensor,
) -> DsmhmcStatus {
    clear(out);
    guard(|| {
        let prior = &deref(prior, "prior")?.0;
        let cfg = SamplerConfig::from(deref(params, "params")?);
        let lik = lik.as_ref().map(|l| &l.0);
        let set = annealed_sample(prior.as_ref(), lik, &cfg, n_chains, None, seed)?;
        put(out, DsmhmcTensor(set.stacked()?))
    })
}

/// Peak signal-to-noise ratio in dB, capped for identical inputs.
///
/// # Safety
/// `reference` and `estimate` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsmhmc_psnr(
    reference: *const DsmhmcTensor,
    estimate: *const DsmhmcTensor,
    peak: f64,
    out: *mut f64,
) -> DsmhmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = psnr(
            &deref(reference, "reference")?.0,
            &deref(estimate, "estimate")?.0,
            peak,
        )?;
        Ok(())
    })
}
