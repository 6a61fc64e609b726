//! C ABI over `balshap`.
//!
//! Every fallible function returns a [`BalshapStatus`]; on failure the
//! message is available from [`balshap_last_error_message`] on the same
//! thread. Objects cross the boundary as opaque handles that the caller
//! releases with the matching `_free` function. Output pointers are written
//! only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use balshap::attribution::{explain_set, ExplainerConfig, Method, ShapMatrix};
use balshap::balance::{compose_background, undersample_explanation, MajorityClusters};
use balshap::dataset::{load_csv, Dataset, DEFAULT_LABEL_COLUMN};
use balshap::evaluation::{bootstrap_auc_ci, compute_auc};
use balshap::mlp::{MlpModel, OutputTarget};
use balshap::{Error, Matrix};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalshapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    DimensionMismatch = 5,
    InsufficientData = 6,
    InvalidConfig = 7,
    Numeric = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalshapMethod {
    Exact = 0,
    Kernel = 1,
    Deep = 2,
    Gradient = 3,
}

/// Scale of the explained model output.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalshapOutput {
    Probability = 0,
    Logit = 1,
}

/// Feature matrix with binary labels.
pub struct BalshapDataset(Dataset);

/// Trained classifier.
pub struct BalshapModel(MlpModel);

/// Attribution matrix for a set of rows.
pub struct BalshapShap(ShapMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BalshapStatus {
    match e {
        Error::Io { .. } => BalshapStatus::Io,
        Error::Csv(_) | Error::Json(_) | Error::InvalidLabel { .. } | Error::NonNumeric { .. } => BalshapStatus::Parse,
        Error::DuplicateColumn(_) | Error::MissingLabelColumn(_) => BalshapStatus::Parse,
        Error::DimensionMismatch { .. } => BalshapStatus::DimensionMismatch,
        Error::InsufficientRows { .. } | Error::Empty(_) => BalshapStatus::InsufficientData,
        Error::InvalidConfig(_) | Error::Unsupported(_) => BalshapStatus::InvalidConfig,
        Error::Diverged { .. } | Error::Calibration { .. } => BalshapStatus::Numeric,
        Error::Stage { source, .. } => status_of(source),
    }
}

struct Fail(BalshapStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(BalshapStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BalshapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BalshapStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BalshapStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(BalshapStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize, what: &str) -> Result<(), Fail> {
    if len != src.len() {
        return Err(Fail(
            BalshapStatus::DimensionMismatch,
            format!("{what}: buffer holds {len} values, need {}", src.len()),
        ));
    }
    if len > 0 {
        if dst.is_null() {
            return Err(null(what));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), dst, len);
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn balshap_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

// ---------------------------------------------------------------- datasets

/// Reads a CSV with a header row. `label_column` may be null for `"label"`.
///
/// # Safety
/// `path` and (if non-null) `label_column` must be NUL-terminated strings;
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn balshap_dataset_load_csv(
    path: *const c_char,
    label_column: *const c_char,
    out: *mut *mut BalshapDataset,
) -> BalshapStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = path_arg(path, "path")?;
        let label = if label_column.is_null() {
            DEFAULT_LABEL_COLUMN.to_string()
        } else {
            path_arg(label_column, "label_column")?.to_string_lossy().into_owned()
        };
        let ds = load_csv(&path, &label)?;
        *out = Box::into_raw(Box::new(BalshapDataset(ds)));
        Ok(())
    })
}

/// Builds a dataset from a row-major `n x d` matrix and `n` labels in {0, 1}.
///
/// # Safety
/// `features` must point to `n * d` doubles and `labels` to `n` bytes;
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn balshap_dataset_from_arrays(
    features: *const f64,
    labels: *const u8,
    n: usize,
    d: usize,
    out: *mut *mut BalshapDataset,
) -> BalshapStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let len = n
            .checked_mul(d)
            .ok_or_else(|| Fail(BalshapStatus::InvalidArgument, "n * d overflows".into()))?;
        let x = slice_arg(features, len, "features")?;
        let y = slice_arg(labels, n, "labels")?;
        let ds = Dataset::with_default_names(Matrix::from_vec(n, d, x.to_vec())?, y.to_vec())?;
        *out = Box::into_raw(Box::new(BalshapDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn balshap_dataset_free(ds: *mut BalshapDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be a live handle; `n` and `d` must be writable.
#[no_mangle]
pub unsafe extern "C" fn balshap_dataset_dims(ds: *const BalshapDataset, n: *mut usize, d: *mut usize) -> BalshapStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        let (n, d) = (out_ptr(n, "n")?, out_ptr(d, "d")?);
        *n = ds.0.n();
        *d = ds.0.d();
        Ok(())
    })
}

/// Fraction of rows with label 1.
///
/// # Safety
/// `ds` must be a live handle; `rate` must be writable.
#[no_mangle]
pub unsafe extern "C" fn balshap_dataset_event_rate(ds: *const BalshapDataset, rate: *mut f64) -> BalshapStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        *out_ptr(rate, "rate")? = ds.0.event_rate();
        Ok(())
    })
}

/// Copies the row-major feature matrix into `out` (`len` must be `n * d`).
///
/// # Safety
/// `ds` must be a live handle; `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn balshap_dataset_copy_features(ds: *const BalshapDataset, out: *mut f64, len: usize) -> BalshapStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        copy_out(ds.0.features().as_slice(), out, len, "features")
    })
}

// ---------------------------------------------------------------- models

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn balshap_model_load_json(path: *const c_char, out: *mut *mut BalshapModel) -> BalshapStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = MlpModel::load_json(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(BalshapModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn balshap_model_free(model: *mut BalshapModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `d` must be writable.
#[no_mangle]
pub unsafe extern "C" fn balshap_model_input_dim(model: *const BalshapModel, d: *mut usize) -> BalshapStatus {
    guard(|| {
        *out_ptr(d, "d")? = borrow(model, "model")?.0.input_dim();
        Ok(())
    })
}

/// Event probability for every row of `ds`; `len` must equal the row count.
///
/// # Safety
/// Handles must be live; `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn balshap_model_predict(
    model: *const BalshapModel,
    ds: *const BalshapDataset,
    out: *mut f64,
    len: usize,
) -> BalshapStatus {
    guard(|| {
        let model = borrow(model, "model")?;
        let ds = borrow(ds, "dataset")?;
        let p = model.0.predict_proba(ds.0.features())?;
        copy_out(&p, out, len, "out")
    })
}

// ---------------------------------------------------------------- balancing

/// Background of `size` rows with `round(size * p)` minority rows, drawn
/// from `source`.
///
/// # Safety
/// `source` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn balshap_compose_background(
    source: *const BalshapDataset,
    size: usize,
    p: f64,
    seed: u64,
    out: *mut *mut BalshapDataset,
) -> BalshapStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let bg = compose_background(&borrow(source, "source")?.0, size, p, seed)?;
        *out = Box::into_raw(Box::new(BalshapDataset(bg.rows)));
        Ok(())
    })
}

/// Keeps all minority rows and under-samples the majority across K-means
/// clusters to reach rate `p`. `clusters == 0` picks the count by the
/// elbow rule over 1..=`k_max`.
///
/// # Safety
/// `source` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn balshap_undersample(
    source: *const BalshapDataset,
    p: f64,
    clusters: usize,
    k_max: usize,
    seed: u64,
    out: *mut *mut BalshapDataset,
) -> BalshapStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let mode = if clusters == 0 {
            MajorityClusters::Auto { k_max }
        } else {
            MajorityClusters::Fixed(clusters)
        };
        let set = undersample_explanation(&borrow(source, "source")?.0, p, mode, seed)?;
        *out = Box::into_raw(Box::new(BalshapDataset(set.rows)));
        Ok(())
    })
}

// ---------------------------------------------------------------- attribution

/// Explains every row of `rows` against `background`. `n_samples` is used
/// by the sampled methods (0 keeps the default of 2000).
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn balshap_explain(
    model: *const BalshapModel,
    background: *const BalshapDataset,
    rows: *const BalshapDataset,
    method: BalshapMethod,
    output: BalshapOutput,
    n_samples: usize,
    seed: u64,
    out: *mut *mut BalshapShap,
) -> BalshapStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = borrow(model, "model")?;
        let bg = borrow(background, "background")?;
        let rows = borrow(rows, "rows")?;
        let mut cfg = ExplainerConfig::new(match method {
            BalshapMethod::Exact => Method::Exact,
            BalshapMethod::Kernel => Method::Kernel,
            BalshapMethod::Deep => Method::Deep,
            BalshapMethod::Gradient => Method::Gradient,
        });
        cfg.seed = seed;
        if n_samples > 0 {
            cfg.n_samples = n_samples;
        }
        cfg.output_target = match output {
            BalshapOutput::Probability => OutputTarget::Probability,
            BalshapOutput::Logit => OutputTarget::Logit,
        };
        let shap = explain_set(&model.0, bg.0.features(), rows.0.features(), rows.0.feature_names(), &cfg)?;
        *out = Box::into_raw(Box::new(BalshapShap(shap)));
        Ok(())
    })
}

/// # Safety
/// `shap` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn balshap_shap_free(shap: *mut BalshapShap) {
    if !shap.is_null() {
        drop(Box::from_raw(shap));
    }
}

/// # Safety
/// `shap` must be a live handle; `n` and `d` must be writable.
#[no_mangle]
pub unsafe extern "C" fn balshap_shap_dims(shap: *const BalshapShap, n: *mut usize, d: *mut usize) -> BalshapStatus {
    guard(|| {
        let shap = borrow(shap, "shap")?;
        let (n, d) = (out_ptr(n, "n")?, out_ptr(d, "d")?);
        *n = shap.0.n();
        *d = shap.0.d();
        Ok(())
    })
}

/// Expected model output over the background.
///
/// # Safety
/// `shap` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn balshap_shap_base_value(shap: *const BalshapShap, out: *mut f64) -> BalshapStatus {
    guard(|| {
        *out_ptr(out, "out")? = borrow(shap, "shap")?.0.base_value;
        Ok(())
    })
}

/// Copies the row-major `n x d` attributions; `len` must be `n * d`.
///
/// # Safety
/// `shap` must be a live handle; `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn balshap_shap_copy_phi(shap: *const BalshapShap, out: *mut f64, len: usize) -> BalshapStatus {
    guard(|| copy_out(borrow(shap, "shap")?.0.phi.as_slice(), out, len, "phi"))
}

/// Copies the model output for each explained row; `len` must be `n`.
///
/// # Safety
/// `shap` must be a live handle; `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn balshap_shap_copy_fx(shap: *const BalshapShap, out: *mut f64, len: usize) -> BalshapStatus {
    guard(|| copy_out(&borrow(shap, "shap")?.0.fx, out, len, "fx"))
}

/// Mean absolute attribution per feature, written to `out` (`len` = `d`).
///
/// # Safety
/// `shap` must be a live handle; `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn balshap_shap_mean_abs(shap: *const BalshapShap, out: *mut f64, len: usize) -> BalshapStatus {
    guard(|| {
        let ranking = balshap::evaluation::global_importance(&borrow(shap, "shap")?.0)?;
        copy_out(&ranking.scores, out, len, "out")
    })
}

// ---------------------------------------------------------------- AUC

/// Mann-Whitney AUC with ties counted one half.
///
/// # Safety
/// `scores` must hold `n` doubles and `labels` `n` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn balshap_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> BalshapStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = compute_auc(slice_arg(scores, n, "scores")?, slice_arg(labels, n, "labels")?)?;
        Ok(())
    })
}

/// AUC with a class-stratified percentile bootstrap interval.
///
/// # Safety
/// `scores` must hold `n` doubles and `labels` `n` bytes; the three output
/// pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn balshap_auc_bootstrap(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    replicates: usize,
    level: f64,
    seed: u64,
    auc: *mut f64,
    ci_low: *mut f64,
    ci_high: *mut f64,
) -> BalshapStatus {
    guard(|| {
        let (auc, lo, hi) = (out_ptr(auc, "auc")?, out_ptr(ci_low, "ci_low")?, out_ptr(ci_high, "ci_high")?);
        let r = bootstrap_auc_ci(
            slice_arg(scores, n, "scores")?,
            slice_arg(labels, n, "labels")?,
            replicates,
            level,
            seed,
        )?;
        *auc = r.auc;
        *lo = r.ci_low;
        *hi = r.ci_high;
        Ok(())
    })
}
