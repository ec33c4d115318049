//! C ABI over `flowsr`.
//!
//! Datasets cross the boundary as opaque `FlowsrDataset` handles that the caller
//! releases with `flowsr_dataset_free`. Every fallible call returns a
//! `FlowsrStatus`; on failure `flowsr_last_error` gives a message for the
//! calling thread. Panics are caught and reported as `FLOWSR_STATUS_PANIC`.
//! Complex buffers are interleaved `re, im` doubles in x-fastest order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use flowsr::config::RunConfig;
use flowsr::metrics::Metric;
use flowsr::num_complex::Complex64;
use flowsr::{
    ComplexVolume, Decimation, DegradationConfig, Error, EvalConfig, Grid3, InterpMethod, KernelChoice, PriorMode,
    SolverConfig, VelocityDataset,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowsrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    GridMismatch = 3,
    Aliasing = 4,
    Io = 5,
    Parse = 6,
    Runtime = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowsrKernel {
    Ideal = 0,
    /// FWHM equal to the decimation rate on each axis.
    Gaussian = 1,
    Identity = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowsrPrior {
    Trilinear = 0,
    ZeroFill = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowsrInterp {
    Trilinear = 0,
    Tricubic = 1,
}

/// Volume selector for `flowsr_dataset_copy_volume`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowsrVolume {
    Magnitude = 0,
    U = 1,
    V = 2,
    W = 3,
}

/// Frame-averaged metrics from `flowsr_evaluate`. Baseline fields are NaN when no baseline was given.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowsrSummary {
    pub psnr_db_sr: f64,
    pub mre_percent_sr: f64,
    pub psnr_db_baseline: f64,
    pub mre_percent_baseline: f64,
}

/// Opaque multi-frame velocity dataset.
pub struct FlowsrDataset(VelocityDataset);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FlowsrStatus {
    match e.root() {
        Error::Parameter(_) | Error::Config(_) | Error::SizeGuard { .. } => FlowsrStatus::InvalidArgument,
        Error::GridMismatch(_) => FlowsrStatus::GridMismatch,
        Error::Aliasing { .. } => FlowsrStatus::Aliasing,
        Error::Io { .. } => FlowsrStatus::Io,
        Error::Parse { .. } => FlowsrStatus::Parse,
        _ => FlowsrStatus::Runtime,
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

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> FlowsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FlowsrStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            FlowsrStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            FlowsrStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn triple(p: *const usize, what: &'static str) -> FfiResult<[usize; 3]> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok([s[0], s[1], s[2]])
}

unsafe fn path_arg(p: *const c_char) -> FfiResult<String> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Lib(Error::Parameter("path is not valid UTF-8".into())))
}

unsafe fn emit(out: *mut *mut FlowsrDataset, ds: VelocityDataset) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(FlowsrDataset(ds)));
    Ok(())
}

fn decimation(f: [usize; 3]) -> FfiResult<Decimation> {
    Ok(Decimation::new(f[0], f[1], f[2])?)
}

fn kernel(k: FlowsrKernel, d: Decimation) -> KernelChoice {
    match k {
        FlowsrKernel::Ideal => KernelChoice::Ideal,
        FlowsrKernel::Gaussian => KernelChoice::gaussian_matched(d),
        FlowsrKernel::Identity => KernelChoice::Identity,
    }
}

fn prior(p: FlowsrPrior) -> PriorMode {
    match p {
        FlowsrPrior::Trilinear => PriorMode::Trilinear,
        FlowsrPrior::ZeroFill => PriorMode::ZeroFill,
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn flowsr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads a volume file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flowsr_dataset_load(path: *const c_char, out: *mut *mut FlowsrDataset) -> FlowsrStatus {
    guard(|| {
        let path = path_arg(path)?;
        emit(out, flowsr::io::load_dataset(path)?)
    })
}

/// Writes a volume file atomically.
///
/// # Safety
/// `ds` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn flowsr_dataset_save(ds: *const FlowsrDataset, path: *const c_char) -> FlowsrStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let path = path_arg(path)?;
        Ok(flowsr::io::save_dataset(path, &ds.0)?)
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `ds` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn flowsr_dataset_free(ds: *mut FlowsrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Grid dimensions, frame count and VENC (cm/s) of a dataset.
///
/// # Safety
/// `ds` must be a live handle; `dims` must hold 3 values; the other outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn flowsr_dataset_info(
    ds: *const FlowsrDataset,
    dims: *mut usize,
    frames: *mut usize,
    venc: *mut f64,
) -> FlowsrStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        if dims.is_null() || frames.is_null() || venc.is_null() {
            return Err(Failure::Null("output"));
        }
        std::slice::from_raw_parts_mut(dims, 3).copy_from_slice(&ds.0.grid().dims());
        *frames = ds.0.frames().len();
        *venc = ds.0.params().venc();
        Ok(())
    })
}

/// Copies one volume of one frame into `out`, which must hold `len` = m*n*s doubles.
///
/// # Safety
/// `ds` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn flowsr_dataset_copy_volume(
    ds: *const FlowsrDataset,
    frame: usize,
    which: FlowsrVolume,
    out: *mut f64,
    len: usize,
) -> FlowsrStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let f = ds
            .0
            .frames()
            .get(frame)
            .ok_or_else(|| Error::Parameter(format!("frame {frame} out of range ({} frames)", ds.0.frames().len())))?;
        let vol = match which {
            FlowsrVolume::Magnitude => f.magnitude(),
            FlowsrVolume::U => f.u(),
            FlowsrVolume::V => f.v(),
            FlowsrVolume::W => f.w(),
        };
        if len != vol.data().len() {
            return Err(Error::Parameter(format!("buffer holds {len} values, volume has {}", vol.data().len())).into());
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(vol.data());
        Ok(())
    })
}

/// Poiseuille tube phantom along z with a pulsatile centreline speed peaking at `vmax`.
///
/// # Safety
/// `dims` must hold 3 values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flowsr_phantom_poiseuille(
    dims: *const usize,
    frames: usize,
    venc: f64,
    vmax: f64,
    out: *mut *mut FlowsrDataset,
) -> FlowsrStatus {
    guard(|| {
        let cfg = RunConfig { dims: triple(dims, "dims")?, frames, venc, vmax, factor: [1, 1, 1], ..RunConfig::default() };
        cfg.validate()?;
        emit(out, cfg.build_phantom()?)
    })
}

/// Blurs, decimates by `factor` and adds k-space noise at `noise_psnr_db` (NaN for none).
/// `achieved_psnr_db` may be NULL.
///
/// # Safety
/// `hr` must be a live handle; `factor` must hold 3 values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flowsr_degrade(
    hr: *const FlowsrDataset,
    factor: *const usize,
    kernel_kind: FlowsrKernel,
    noise_psnr_db: f64,
    seed: u64,
    out: *mut *mut FlowsrDataset,
    achieved_psnr_db: *mut f64,
) -> FlowsrStatus {
    guard(|| {
        let hr = deref(hr, "hr")?;
        let d = decimation(triple(factor, "factor")?)?;
        let cfg = DegradationConfig {
            d,
            kernel: kernel(kernel_kind, d),
            noise_psnr_db: if noise_psnr_db.is_nan() { None } else { Some(noise_psnr_db) },
            rng_seed: seed,
        };
        let (lr, cal) = flowsr::degrade_dataset(&hr.0, &cfg)?;
        if !achieved_psnr_db.is_null() {
            *achieved_psnr_db = cal.achieved_psnr_db;
        }
        emit(out, lr)
    })
}

/// Fourier-domain super-resolution of every frame and channel.
///
/// # Safety
/// `lr` must be a live handle; `factor` must hold 3 values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flowsr_superresolve(
    lr: *const FlowsrDataset,
    factor: *const usize,
    kernel_kind: FlowsrKernel,
    tau: f64,
    prior_mode: FlowsrPrior,
    out: *mut *mut FlowsrDataset,
) -> FlowsrStatus {
    guard(|| {
        let lr = deref(lr, "lr")?;
        let d = decimation(triple(factor, "factor")?)?;
        let cfg = SolverConfig::new(tau, kernel(kernel_kind, d), d, prior(prior_mode))?;
        let hr = lr.0.grid().refined(d)?;
        let (sr, _) = flowsr::superresolve_dataset(&lr.0, &cfg, hr)?;
        emit(out, sr)
    })
}

/// Interpolation baseline.
///
/// # Safety
/// `lr` must be a live handle; `factor` must hold 3 values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flowsr_upsample(
    lr: *const FlowsrDataset,
    factor: *const usize,
    method: FlowsrInterp,
    out: *mut *mut FlowsrDataset,
) -> FlowsrStatus {
    guard(|| {
        let lr = deref(lr, "lr")?;
        let d = decimation(triple(factor, "factor")?)?;
        let m = match method {
            FlowsrInterp::Trilinear => InterpMethod::Trilinear,
            FlowsrInterp::Tricubic => InterpMethod::Tricubic,
        };
        emit(out, flowsr::upsample_dataset(&lr.0, d, m)?)
    })
}

/// Masked PSNR and MRE against ground truth, averaged over frames (and channels for PSNR).
/// `baseline` may be NULL.
///
/// # Safety
/// `truth` and `sr` must be live handles; `baseline` live or NULL; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn flowsr_evaluate(
    truth: *const FlowsrDataset,
    sr: *const FlowsrDataset,
    baseline: *const FlowsrDataset,
    mask_threshold: f64,
    out: *mut FlowsrSummary,
) -> FlowsrStatus {
    guard(|| {
        let truth = deref(truth, "truth")?;
        let sr = deref(sr, "sr")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let mut methods = vec![("sr", &sr.0)];
        if let Some(b) = baseline.as_ref() {
            methods.push(("baseline", &b.0));
        }
        let cfg = EvalConfig { threshold_fraction: mask_threshold, ..EvalConfig::default() };
        let report = flowsr::evaluate_methods(&truth.0, &methods, &cfg)?;
        let mean = |method: &str, metric: Metric| {
            let v: Vec<f64> =
                report.records.iter().filter(|r| r.method == method && r.metric == metric).map(|r| r.value).collect();
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        *out = FlowsrSummary {
            psnr_db_sr: mean("sr", Metric::PsnrDb),
            mre_percent_sr: mean("sr", Metric::MrePercent),
            psnr_db_baseline: mean("baseline", Metric::PsnrDb),
            mre_percent_baseline: mean("baseline", Metric::MrePercent),
        };
        Ok(())
    })
}

/// Solves one complex channel. `y` holds 2*prod(lr_dims) doubles and `x` receives
/// 2*prod(lr_dims*factor) doubles, both interleaved `re, im`.
///
/// # Safety
/// `lr_dims` and `factor` must hold 3 values; `y` and `x` must be valid for the lengths above.
#[no_mangle]
pub unsafe extern "C" fn flowsr_fsr_solve(
    lr_dims: *const usize,
    factor: *const usize,
    kernel_kind: FlowsrKernel,
    tau: f64,
    prior_mode: FlowsrPrior,
    y: *const f64,
    x: *mut f64,
) -> FlowsrStatus {
    guard(|| {
        let l = triple(lr_dims, "lr_dims")?;
        let d = decimation(triple(factor, "factor")?)?;
        if y.is_null() || x.is_null() {
            return Err(Failure::Null("buffer"));
        }
        let lr = Grid3::cube(l[0], l[1], l[2])?;
        let hr = lr.refined(d)?;
        let ys = std::slice::from_raw_parts(y, 2 * lr.len());
        let yv = ComplexVolume::new(lr, ys.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())?;
        let cfg = SolverConfig::new(tau, kernel(kernel_kind, d), d, prior(prior_mode))?;
        let (xv, _) = flowsr::fsr_solve(&yv, &cfg)?;
        debug_assert_eq!(xv.grid().len(), hr.len());
        let xs = std::slice::from_raw_parts_mut(x, 2 * hr.len());
        for (dst, v) in xs.chunks_exact_mut(2).zip(xv.data()) {
            dst[0] = v.re;
            dst[1] = v.im;
        }
        Ok(())
    })
}
