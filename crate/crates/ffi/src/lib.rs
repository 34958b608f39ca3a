//! C ABI for `dualghost`.
//!
//! Objects live behind opaque handles created by `dg_*_new` style functions
//! and released with the matching `dg_*_free`. Every fallible function returns
//! a [`DgStatus`]; on failure [`dg_last_error_message`] describes the cause
//! for the calling thread. Outputs are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use dualghost::config::{BasisKind, ConfigError, ExperimentConfig};
use dualghost::experiment::{Experiment, Variant};
use dualghost::gain;
use dualghost::imaging::{
    build_binning_operator, AcquisitionParams, DetectorGeometry, MeasurementMatrix,
    TransmittanceMap,
};
use dualghost::nalgebra::DMatrix;
use dualghost::noise::noise_photon_covariance;
use dualghost::sim::{accumulate, MeasurementPair};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonConvergence = 4,
    Infeasible = 5,
    BisectionFailure = 6,
    Config = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// Which measurements feed the reconstruction.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgVariant {
    /// Object-arm image and ghost image.
    Combined = 0,
    /// Ghost image only.
    GhostOnly = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgBasis {
    Haar = 0,
    Pixel = 1,
    None = 2,
}

/// Illumination, detector efficiencies and noise photons per pixel.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgParams {
    pub n: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub n_eps: f64,
}

/// Transmittance map, row-major, values in [0, 1].
pub struct DgObject {
    map: TransmittanceMap,
}

/// Object, detector geometry, acquisition parameters and reconstruction
/// factorizations.
pub struct DgExperiment {
    inner: Experiment,
}

/// Frame-summed counts of both arms.
pub struct DgMeasurement {
    total: MeasurementPair,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure {
    status: DgStatus,
    message: String,
}

impl Failure {
    fn new(status: DgStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<dualghost::Error> for Failure {
    fn from(e: dualghost::Error) -> Self {
        use dualghost::Error as E;
        let status = match &e {
            E::NonDivisibleGeometry { .. } | E::DimensionMismatch { .. } => {
                DgStatus::DimensionMismatch
            }
            E::InvalidParameter { .. } | E::InsufficientSamples(_) => DgStatus::InvalidArgument,
            E::NonConvergence { .. } => DgStatus::NonConvergence,
            E::InfeasibleProblem(_) => DgStatus::Infeasible,
            E::BisectionFailure(_) => DgStatus::BisectionFailure,
        };
        Self::new(status, e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::new(DgStatus::Config, e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let message = format!("{e:#}");
        match e.downcast::<dualghost::Error>() {
            Ok(inner) => Self::new(Failure::from(inner).status, message),
            Err(e) => match e.downcast::<ConfigError>() {
                Ok(_) => Self::new(DgStatus::Config, message),
                Err(_) => Self::new(DgStatus::Internal, message),
            },
        }
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            DgStatus::Ok
        }
        Ok(Err(f)) => {
            set_last_error(&f.message);
            f.status
        }
        Err(_) => {
            set_last_error("internal panic");
            DgStatus::Internal
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: caller passes a pointer obtained from this library or a valid
    // C object; null is rejected.
    unsafe { p.as_ref() }
        .ok_or_else(|| Failure::new(DgStatus::NullPointer, format!("{name} is null")))
}

fn out_ptr<T>(p: *mut T, name: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(Failure::new(
            DgStatus::NullPointer,
            format!("{name} is null"),
        ))
    } else {
        Ok(p)
    }
}

fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(
            DgStatus::NullPointer,
            format!("{name} is null"),
        ));
    }
    // SAFETY: caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::new(
            DgStatus::NullPointer,
            format!("{name} is null"),
        ));
    }
    // SAFETY: caller guarantees `len` writable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn params_from(p: &DgParams) -> Result<AcquisitionParams, Failure> {
    Ok(AcquisitionParams::new(p.n, p.eta0, p.eta1, p.n_eps)?)
}

fn variant_from(v: DgVariant) -> Variant {
    match v {
        DgVariant::Combined => Variant::Combined,
        DgVariant::GhostOnly => Variant::GhostOnly,
    }
}

fn publish<T>(out: *mut *mut T, value: T) {
    // SAFETY: `out` was checked non-null by the caller of this helper.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: `p` came from `Box::into_raw` in this library and is freed once.
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn dg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `width * height` row-major transmittance values into a new object.
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_object_new(
    width: usize,
    height: usize,
    values: *const f64,
    out: *mut *mut DgObject,
) -> DgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let values = slice(values, width.saturating_mul(height), "values")?;
        let map = TransmittanceMap::new(width, height, values.to_vec())?;
        publish(out, DgObject { map });
        Ok(())
    })
}

/// Vertical transparent slit of `slit_width` columns, centred, on a uniform
/// `background`.
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_object_slit(
    width: usize,
    height: usize,
    slit_width: usize,
    background: f64,
    out: *mut *mut DgObject,
) -> DgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let map = TransmittanceMap::slit(width, height, slit_width, background)?;
        publish(out, DgObject { map });
        Ok(())
    })
}

/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_object_free(object: *mut DgObject) {
    free_handle(object);
}

/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_object_width(object: *const DgObject) -> usize {
    non_null(object, "object").map_or(0, |o| o.map.width())
}

/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_object_height(object: *const DgObject) -> usize {
    non_null(object, "object").map_or(0, |o| o.map.height())
}

/// Builds an experiment; `frames` frames are summed per simulated acquisition.
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_experiment_new(
    object: *const DgObject,
    bin_factor: usize,
    params: *const DgParams,
    frames: usize,
    basis: DgBasis,
    out: *mut *mut DgExperiment,
) -> DgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let f = non_null(object, "object")?.map.clone();
        let params = params_from(non_null(params, "params")?)?;
        let geom = DetectorGeometry::for_object(f.width(), f.height(), bin_factor)?;
        let basis = match basis {
            DgBasis::Haar => BasisKind::Haar,
            DgBasis::Pixel => BasisKind::Pixel,
            DgBasis::None => BasisKind::None,
        };
        let inner = Experiment::from_parts(f, geom, params, frames, vec![0.0], basis)?;
        publish(out, DgExperiment { inner });
        Ok(())
    })
}

/// Builds an experiment from a TOML configuration file.
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_experiment_from_config(
    path: *const c_char,
    out: *mut *mut DgExperiment,
) -> DgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = non_null(path, "path")?;
        // SAFETY: non-null, caller supplies a NUL-terminated string.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| Failure::new(DgStatus::InvalidArgument, "path is not UTF-8"))?;
        let cfg = ExperimentConfig::load(Path::new(path))?;
        let inner = Experiment::new(&cfg)?;
        publish(out, DgExperiment { inner });
        Ok(())
    })
}

/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_experiment_free(experiment: *mut DgExperiment) {
    free_handle(experiment);
}

/// Number of detector pixels per arm.
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_experiment_detector_pixels(experiment: *const DgExperiment) -> usize {
    non_null(experiment, "experiment").map_or(0, |e| e.inner.geom.detector_pixels())
}

/// Number of object pixels (length of a reconstruction).
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_experiment_object_pixels(experiment: *const DgExperiment) -> usize {
    non_null(experiment, "experiment").map_or(0, |e| e.inner.f.len())
}

/// Simulates all frames with `seed` and returns the summed counts.
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_simulate(
    experiment: *const DgExperiment,
    seed: u64,
    out: *mut *mut DgMeasurement,
) -> DgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let exp = &non_null(experiment, "experiment")?.inner;
        let total = accumulate(&exp.simulate(seed)?)?;
        publish(out, DgMeasurement { total });
        Ok(())
    })
}

/// Wraps caller-supplied counts (for example from a real detector).
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_measurement_new(
    xi0: *const u64,
    xi1: *const u64,
    len: usize,
    out: *mut *mut DgMeasurement,
) -> DgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let total = MeasurementPair {
            xi0: slice(xi0, len, "xi0")?.to_vec(),
            xi1: slice(xi1, len, "xi1")?.to_vec(),
        };
        publish(out, DgMeasurement { total });
        Ok(())
    })
}

/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_measurement_free(measurement: *mut DgMeasurement) {
    free_handle(measurement);
}

/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_measurement_len(measurement: *const DgMeasurement) -> usize {
    non_null(measurement, "measurement").map_or(0, |m| m.total.len())
}

/// Copies both arms' counts into caller buffers of `len` elements each.
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_measurement_counts(
    measurement: *const DgMeasurement,
    xi0: *mut u64,
    xi1: *mut u64,
    len: usize,
) -> DgStatus {
    guard(|| {
        let m = &non_null(measurement, "measurement")?.total;
        if len < m.len() {
            return Err(Failure::new(
                DgStatus::BufferTooSmall,
                format!("need {} elements, got {len}", m.len()),
            ));
        }
        slice_mut(xi0, m.len(), "xi0")?.copy_from_slice(&m.xi0);
        slice_mut(xi1, m.len(), "xi1")?.copy_from_slice(&m.xi1);
        Ok(())
    })
}

/// Reconstructs the object into `estimate` (`len` ≥ object pixels).
/// `zeroed` receives the number of suppressed basis components and may be null.
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_reconstruct(
    experiment: *const DgExperiment,
    measurement: *const DgMeasurement,
    variant: DgVariant,
    tau: f64,
    estimate: *mut f64,
    len: usize,
    zeroed: *mut usize,
) -> DgStatus {
    guard(|| {
        let exp = &non_null(experiment, "experiment")?.inner;
        let m = &non_null(measurement, "measurement")?.total;
        if len < exp.f.len() {
            return Err(Failure::new(
                DgStatus::BufferTooSmall,
                format!("need {} elements, got {len}", exp.f.len()),
            ));
        }
        let buf = slice_mut(estimate, exp.f.len(), "estimate")?;
        if m.len() != exp.geom.detector_pixels() {
            return Err(Failure::new(
                DgStatus::DimensionMismatch,
                format!(
                    "measurement has {} detector pixels, expected {}",
                    m.len(),
                    exp.geom.detector_pixels()
                ),
            ));
        }
        let record = exp.reconstruct_variant(m, variant_from(variant), tau)?;
        buf.copy_from_slice(record.estimate.as_slice());
        if !zeroed.is_null() {
            // SAFETY: non-null, caller supplies a writable usize.
            unsafe { *zeroed = record.zeroed };
        }
        Ok(())
    })
}

type PixelProblem = (TransmittanceMap, MeasurementMatrix, DMatrix<f64>);

fn pixel_problem(object: *const DgObject, bin_factor: usize) -> Result<PixelProblem, Failure> {
    let f = non_null(object, "object")?.map.clone();
    let a0 = build_binning_operator(f.width(), f.height(), bin_factor)?;
    let u = DMatrix::identity(f.len(), f.len());
    Ok((f, a0, u))
}

/// Analytic reconstruction error of every object pixel, summed. `+inf` when
/// the pixels cannot be resolved (binning above 1).
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_mse(
    object: *const DgObject,
    bin_factor: usize,
    params: *const DgParams,
    variant: DgVariant,
    out: *mut f64,
) -> DgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let (f, a0, u) = pixel_problem(object, bin_factor)?;
        let params = params_from(non_null(params, "params")?)?;
        let value = match variant {
            DgVariant::GhostOnly => gain::mse_ghost_only(&a0, &f, &params, &u)?,
            DgVariant::Combined => {
                let geom = a0.geometry().expect("binning operator has geometry");
                gain::mse_combined(
                    &a0,
                    &f,
                    &params,
                    &noise_photon_covariance(params.n_eps, geom),
                    &u,
                )?
            }
        };
        // SAFETY: checked non-null above.
        unsafe { *out = value };
        Ok(())
    })
}

/// Relative photon saving of the dual-image scheme at equal error, for
/// `eta0 = eta1 = eta` and `n_eps = noise_ratio * n`.
///
/// # Safety
/// Pointer arguments must be null or point to valid objects of the documented
/// size; handles must come from this library and not be used after `free`.
#[no_mangle]
pub unsafe extern "C" fn dg_photon_gain(
    object: *const DgObject,
    bin_factor: usize,
    eta: f64,
    noise_ratio: f64,
    n_ref: f64,
    out: *mut f64,
) -> DgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let (f, a0, u) = pixel_problem(object, bin_factor)?;
        let value = gain::photon_number_gain(&a0, &f, eta, noise_ratio, &u, n_ref)?;
        // SAFETY: checked non-null above.
        unsafe { *out = value };
        Ok(())
    })
}
