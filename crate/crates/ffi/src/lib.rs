//! C bindings. Every handle is opaque and owned by the caller until passed
//! to its `*_free` function. Functions return a [`CwStatus`]; on failure the
//! message is available from [`cw_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use curvewarp::em::fit_multi_start;
use curvewarp::inference::{curve_loglik, viterbi_align};
use curvewarp::io::{load_curves_csv, load_model, save_model};
use curvewarp::{
    heldout_logp, Curve, CurveSet, Error, ErrorCategory, ModelConfig, WarpMixtureModel,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    ConfigError = 4,
    ModelError = 5,
    IoError = 6,
    InferenceError = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

/// Fitting options. `grid_len == 0` selects the default grid.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwConfig {
    pub components: usize,
    pub max_shift: usize,
    pub max_skip: usize,
    pub allow_stay: bool,
    pub offsets_enabled: bool,
    pub grid_len: usize,
    pub dirichlet_alpha: f64,
    pub variance_floor_frac: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub tie_transitions: bool,
    pub translation_search: bool,
    pub n_starts: usize,
    pub seed: u64,
}

impl CwConfig {
    fn model_config(&self) -> ModelConfig {
        ModelConfig {
            components: self.components,
            max_shift: self.max_shift,
            max_skip: self.max_skip,
            allow_stay: self.allow_stay,
            grid_len: (self.grid_len > 0).then_some(self.grid_len),
            offsets_enabled: self.offsets_enabled,
            dirichlet_alpha: self.dirichlet_alpha,
            variance_floor_frac: self.variance_floor_frac,
            tol: self.tol,
            max_iters: self.max_iters,
            tie_transitions: self.tie_transitions,
            translation_search: self.translation_search,
        }
    }
}

/// Viterbi summary for one curve; the path and offset go to caller buffers.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwAlignment {
    pub component: usize,
    pub start: usize,
    pub len: usize,
    pub dims: usize,
    pub log_joint: f64,
}

/// Growable collection of curves sharing one dimension.
pub struct CwCurveSet {
    dims: usize,
    curves: Vec<Curve>,
}

impl CwCurveSet {
    fn to_set(&self) -> Result<CurveSet, Failure> {
        Ok(CurveSet::with_dims(self.dims, self.curves.clone()).map_err(Error::from)?)
    }
}

pub struct CwModel {
    model: WarpMixtureModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    BufferTooSmall(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn status_for(category: ErrorCategory) -> CwStatus {
    match category {
        ErrorCategory::Data => CwStatus::DataError,
        ErrorCategory::Config => CwStatus::ConfigError,
        ErrorCategory::Model => CwStatus::ModelError,
        ErrorCategory::Io => CwStatus::IoError,
        ErrorCategory::Inference => CwStatus::InferenceError,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CwStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CwStatus::Ok,
        Ok(Err(Failure::Null(arg))) => {
            set_last_error(format!("{arg} is null"));
            CwStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_last_error(msg);
            CwStatus::InvalidArgument
        }
        Ok(Err(Failure::BufferTooSmall(msg))) => {
            set_last_error(msg);
            CwStatus::BufferTooSmall
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_for(e.category())
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            CwStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or(Failure::Null(name))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or(Failure::Null(name))
}

unsafe fn c_str(p: *const c_char, name: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map(str::to_string)
        .map_err(|_| Failure::Invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    unsafe { out.write(value) };
    Ok(())
}

/// Message for the most recent failure on this thread, or NULL. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library defaults: one cluster, no shift, no warping, no offsets, 5 starts, seed 0.
#[no_mangle]
pub extern "C" fn cw_config_default() -> CwConfig {
    let d = ModelConfig::default();
    CwConfig {
        components: d.components,
        max_shift: d.max_shift,
        max_skip: d.max_skip,
        allow_stay: d.allow_stay,
        offsets_enabled: d.offsets_enabled,
        grid_len: 0,
        dirichlet_alpha: d.dirichlet_alpha,
        variance_floor_frac: d.variance_floor_frac,
        tol: d.tol,
        max_iters: d.max_iters,
        tie_transitions: d.tie_transitions,
        translation_search: d.translation_search,
        n_starts: 5,
        seed: 0,
    }
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cw_curveset_new(dims: usize, out: *mut *mut CwCurveSet) -> CwStatus {
    guard(|| {
        if dims == 0 {
            return Err(Failure::Invalid("dims must be at least 1".into()));
        }
        let set = Box::new(CwCurveSet {
            dims,
            curves: Vec::new(),
        });
        unsafe { write_out(out, Box::into_raw(set), "out") }
    })
}

/// Appends a curve of `len` points read row-major from `values` (`len * dims` doubles).
///
/// # Safety
/// `set` must come from this library; `id` must be a NUL-terminated string;
/// `values` must point to `len * dims` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn cw_curveset_push(
    set: *mut CwCurveSet,
    id: *const c_char,
    values: *const f64,
    len: usize,
) -> CwStatus {
    guard(|| {
        let set = unsafe { borrow_mut(set, "set") }?;
        let id = unsafe { c_str(id, "id") }?;
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        if len == 0 {
            return Err(Failure::Invalid("len must be at least 1".into()));
        }
        let data = unsafe { std::slice::from_raw_parts(values, len * set.dims) }.to_vec();
        let curve = Curve::from_flat(id, set.dims, data).map_err(Error::from)?;
        set.curves.push(curve);
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_curveset_load_csv(
    path: *const c_char,
    out: *mut *mut CwCurveSet,
) -> CwStatus {
    guard(|| {
        let path = PathBuf::from(unsafe { c_str(path, "path") }?);
        let set = load_curves_csv(&path)?;
        let handle = Box::new(CwCurveSet {
            dims: set.dims(),
            curves: set.into_curves(),
        });
        unsafe { write_out(out, Box::into_raw(handle), "out") }
    })
}

/// # Safety
/// `set` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_curveset_len(set: *const CwCurveSet, out: *mut usize) -> CwStatus {
    guard(|| {
        let set = unsafe { borrow(set, "set") }?;
        unsafe { write_out(out, set.curves.len(), "out") }
    })
}

/// # Safety
/// `set` must be NULL or come from this library, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cw_curveset_free(set: *mut CwCurveSet) {
    if !set.is_null() {
        drop(unsafe { Box::from_raw(set) });
    }
}

/// Fits with `config.n_starts` random restarts. `out_objective` may be NULL.
///
/// # Safety
/// `set` and `config` must be valid; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_fit(
    set: *const CwCurveSet,
    config: *const CwConfig,
    out_model: *mut *mut CwModel,
    out_objective: *mut f64,
) -> CwStatus {
    guard(|| {
        let set = unsafe { borrow(set, "set") }?.to_set()?;
        let config = unsafe { borrow(config, "config") }?;
        if out_model.is_null() {
            return Err(Failure::Null("out_model"));
        }
        let result = fit_multi_start(&set, &config.model_config(), config.n_starts, config.seed)?;
        if !out_objective.is_null() {
            unsafe { out_objective.write(result.final_objective()) };
        }
        let handle = Box::new(CwModel {
            model: result.model,
        });
        unsafe { write_out(out_model, Box::into_raw(handle), "out_model") }
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_model_load(path: *const c_char, out: *mut *mut CwModel) -> CwStatus {
    guard(|| {
        let path = PathBuf::from(unsafe { c_str(path, "path") }?);
        let model = load_model(&path)?;
        unsafe { write_out(out, Box::into_raw(Box::new(CwModel { model })), "out") }
    })
}

/// # Safety
/// `model` must come from this library; `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn cw_model_save(model: *const CwModel, path: *const c_char) -> CwStatus {
    guard(|| {
        let model = unsafe { borrow(model, "model") }?;
        let path = PathBuf::from(unsafe { c_str(path, "path") }?);
        Ok(save_model(&model.model, &path)?)
    })
}

/// # Safety
/// `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_model_components(model: *const CwModel, out: *mut usize) -> CwStatus {
    guard(|| {
        let model = unsafe { borrow(model, "model") }?;
        unsafe { write_out(out, model.model.components(), "out") }
    })
}

/// # Safety
/// `model` must be NULL or come from this library, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cw_model_free(model: *mut CwModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

fn curve_at(set: &CwCurveSet, index: usize) -> Result<&Curve, Failure> {
    set.curves.get(index).ok_or_else(|| {
        Failure::Invalid(format!(
            "curve index {index} out of range (set has {})",
            set.curves.len()
        ))
    })
}

/// Log density of curve `index` of `set`.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_curve_loglik(
    model: *const CwModel,
    set: *const CwCurveSet,
    index: usize,
    out: *mut f64,
) -> CwStatus {
    guard(|| {
        let model = unsafe { borrow(model, "model") }?;
        let set = unsafe { borrow(set, "set") }?;
        let value = curve_loglik(curve_at(set, index)?, &model.model).map_err(Error::from)?;
        unsafe { write_out(out, value, "out") }
    })
}

/// Mean log density per scalar measurement over the whole set.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_heldout_logp(
    model: *const CwModel,
    set: *const CwCurveSet,
    out: *mut f64,
) -> CwStatus {
    guard(|| {
        let model = unsafe { borrow(model, "model") }?;
        let set = unsafe { borrow(set, "set") }?.to_set()?;
        let value = heldout_logp(&model.model, &set)?;
        unsafe { write_out(out, value, "out") }
    })
}

/// Most probable alignment of curve `index`. Writes the summary to `out`, the
/// grid path to `path` (capacity `path_cap`) and the offset to `offset`
/// (capacity `offset_cap`). When a buffer is too small, `out` still receives
/// the required sizes and `CW_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// Handles must come from this library; buffers must hold their stated capacities.
#[no_mangle]
pub unsafe extern "C" fn cw_align(
    model: *const CwModel,
    set: *const CwCurveSet,
    index: usize,
    out: *mut CwAlignment,
    path: *mut usize,
    path_cap: usize,
    offset: *mut f64,
    offset_cap: usize,
) -> CwStatus {
    guard(|| {
        let model = unsafe { borrow(model, "model") }?;
        let set = unsafe { borrow(set, "set") }?;
        let a = viterbi_align(curve_at(set, index)?, &model.model).map_err(Error::from)?;
        let summary = CwAlignment {
            component: a.component,
            start: a.start,
            len: a.path.len(),
            dims: a.offset.len(),
            log_joint: a.log_joint,
        };
        unsafe { write_out(out, summary, "out") }?;
        if path_cap < a.path.len() || offset_cap < a.offset.len() {
            return Err(Failure::BufferTooSmall(format!(
                "need path capacity {} and offset capacity {}",
                a.path.len(),
                a.offset.len()
            )));
        }
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        if offset.is_null() {
            return Err(Failure::Null("offset"));
        }
        unsafe {
            ptr::copy_nonoverlapping(a.path.as_ptr(), path, a.path.len());
            ptr::copy_nonoverlapping(a.offset.as_ptr(), offset, a.offset.len());
        }
        Ok(())
    })
}
