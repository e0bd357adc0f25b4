//! C ABI over the topoforge library.
//!
//! Every function returns a [`TfStatus`]; on failure a message is available
//! from [`tf_last_error`] on the same thread. Density grids are row-major
//! with row 0 at the top, `nelx * nely` doubles. Models are opaque handles
//! created by [`tf_model_load`] and released with [`tf_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use topoforge::eval::ComplianceEvaluator;
use topoforge::fem::{LoadCase, MeshSpec};
use topoforge::gan::CwganModel;
use topoforge::postprocess::{postprocess, PostprocessConfig};
use topoforge::service::generate_fields;
use topoforge::simp::{optimize, OptimizationParams};
use topoforge::{DensityField, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Singular = 4,
    Numeric = 5,
    Config = 6,
    State = 7,
    Format = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Trained generator loaded from a checkpoint.
pub struct TfModel {
    inner: CwganModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> TfStatus {
    match e {
        Error::Parameter(_) => TfStatus::InvalidArgument,
        Error::Shape(_) => TfStatus::Shape,
        Error::Singular(_) => TfStatus::Singular,
        Error::Numeric(_) => TfStatus::Numeric,
        Error::Config(_) => TfStatus::Config,
        Error::State(_) | Error::Interrupted { .. } => TfStatus::State,
        Error::Format { .. } => TfStatus::Format,
        Error::Io { .. } => TfStatus::Io,
    }
}

struct Fail(TfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail(status: TfStatus, msg: impl Into<String>) -> Fail {
    Fail(status, msg.into())
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            TfStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(fail(TfStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Reads a caller grid of `nelx * nely` doubles.
unsafe fn read_field(nelx: usize, nely: usize, data: *const f64) -> Result<DensityField, Fail> {
    non_null(data, "densities")?;
    let n = nelx
        .checked_mul(nely)
        .ok_or_else(|| fail(TfStatus::InvalidArgument, "grid size overflows"))?;
    let values = std::slice::from_raw_parts(data, n).to_vec();
    Ok(DensityField::new(nelx, nely, values)?)
}

/// Copies `values` into a caller buffer of `len` doubles.
unsafe fn write_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), Fail> {
    non_null(out, "output buffer")?;
    if len < values.len() {
        return Err(fail(
            TfStatus::BufferTooSmall,
            format!("output buffer holds {len} values, {} needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn tf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Runs SIMP on the cantilever problem. `out` must hold `nelx * nely`
/// doubles; `out_compliance` may be null.
///
/// # Safety
/// `out` must be valid for `out_len` writes and `out_compliance` null or valid.
#[no_mangle]
pub unsafe extern "C" fn tf_optimize(
    nelx: usize,
    nely: usize,
    volfrac: f64,
    penal: f64,
    rmin: f64,
    out: *mut f64,
    out_len: usize,
    out_compliance: *mut f64,
) -> TfStatus {
    guard(|| {
        non_null(out, "out")?;
        let mesh = MeshSpec::new(nelx, nely);
        mesh.validate()?;
        if out_len < nelx * nely {
            return Err(fail(TfStatus::BufferTooSmall, format!("out holds {out_len} values, {} needed", nelx * nely)));
        }
        let (x, trace) = optimize(&mesh, &LoadCase::cantilever(&mesh), &OptimizationParams::new(volfrac, penal, rmin))?;
        write_out(x.values(), out, out_len)?;
        if !out_compliance.is_null() {
            *out_compliance = trace.final_compliance;
        }
        Ok(())
    })
}

/// Loads a checkpoint file and stores a new handle in `*out_model`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_model_load(path: *const c_char, out_model: *mut *mut TfModel) -> TfStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out_model, "out_model")?;
        *out_model = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(TfStatus::InvalidArgument, "path is not valid UTF-8"))?;
        let model = CwganModel::load(Path::new(path))?;
        *out_model = Box::into_raw(Box::new(TfModel { inner: model }));
        Ok(())
    })
}

/// Releases a handle from [`tf_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tf_model_free(model: *mut TfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Output grid size of a model.
///
/// # Safety
/// `model` must be a live handle; `out_nelx` and `out_nely` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tf_model_resolution(model: *const TfModel, out_nelx: *mut usize, out_nely: *mut usize) -> TfStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out_nelx, "out_nelx")?;
        non_null(out_nely, "out_nely")?;
        let (nely, nelx) = (*model).inner.resolution();
        *out_nelx = nelx;
        *out_nely = nely;
        Ok(())
    })
}

/// Generates `count` structures for `volfrac` into `out`, which must hold
/// `count * nelx * nely` doubles. With `post` non-zero the samples are
/// thresholded and smoothed.
///
/// # Safety
/// `model` must be a live handle and `out` valid for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn tf_model_sample(
    model: *const TfModel,
    volfrac: f64,
    count: usize,
    seed: u64,
    post: i32,
    out: *mut f64,
    out_len: usize,
) -> TfStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        if count == 0 {
            return Err(fail(TfStatus::InvalidArgument, "count must be at least 1"));
        }
        let model = &(*model).inner;
        let (nely, nelx) = model.resolution();
        let needed = count * nelx * nely;
        if out_len < needed {
            return Err(fail(TfStatus::BufferTooSmall, format!("out holds {out_len} values, {needed} needed")));
        }
        let (fields, _) = generate_fields(model, volfrac, count, seed, post != 0)?;
        let flat: Vec<f64> = fields.iter().flat_map(|f| f.values().iter().copied()).collect();
        write_out(&flat, out, out_len)
    })
}

/// Thresholds then Gaussian-smooths a grid. `input` and `out` may alias.
///
/// # Safety
/// `input` must be valid for `nelx * nely` reads and `out` for as many writes.
#[no_mangle]
pub unsafe extern "C" fn tf_postprocess(
    nelx: usize,
    nely: usize,
    input: *const f64,
    threshold: f64,
    kernel_size: usize,
    sigma: f64,
    out: *mut f64,
) -> TfStatus {
    guard(|| {
        let field = read_field(nelx, nely, input)?;
        let cfg = PostprocessConfig { threshold, kernel_size, sigma };
        let smooth = postprocess(&field, &cfg)?;
        write_out(smooth.values(), out, nelx * nely)
    })
}

/// Binarizes a grid at 0.5 and reports its cantilever compliance.
/// Infeasible designs succeed with `*out_feasible = 0` and infinite
/// compliance. `out_feasible` and `out_disconnected` may be null.
///
/// # Safety
/// `densities` must be valid for `nelx * nely` reads; outputs null or valid.
#[no_mangle]
pub unsafe extern "C" fn tf_compliance(
    nelx: usize,
    nely: usize,
    densities: *const f64,
    out_compliance: *mut f64,
    out_feasible: *mut i32,
    out_disconnected: *mut i32,
) -> TfStatus {
    guard(|| {
        non_null(out_compliance, "out_compliance")?;
        let field = read_field(nelx, nely, densities)?;
        let score = ComplianceEvaluator::cantilever(nelx, nely)?.score(&field)?;
        *out_compliance = score.compliance;
        if !out_feasible.is_null() {
            *out_feasible = i32::from(score.feasible);
        }
        if !out_disconnected.is_null() {
            *out_disconnected = i32::from(score.disconnected);
        }
        Ok(())
    })
}
