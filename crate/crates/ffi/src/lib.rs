//! C ABI over `emdlot-core`.
//!
//! Datasets and trained models cross the boundary as opaque handles that
//! the caller releases with the matching `*_free` function. Every fallible
//! call returns an [`EmdlotStatus`]; on failure the message is available
//! from [`emdlot_last_error`] on the same thread. Configurations and
//! reports are exchanged as JSON strings. Strings returned through `char**`
//! out-parameters belong to the caller and go back through
//! [`emdlot_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use emdlot_core::data::{load_dir, save_dir, synthesize, Dataset, SynthConfig};
use emdlot_core::trainer::{checkpoint_predictions, evaluate, run, test_split, Checkpoint, TrainConfig};
use emdlot_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmdlotStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Bad argument, configuration or data.
    InvalidArgument = 2,
    /// Filesystem failure.
    Io = 3,
    /// Malformed input file or JSON.
    Parse = 4,
    /// Unreadable or inconsistent checkpoint.
    Checkpoint = 5,
    /// Training or evaluation failed at run time.
    Runtime = 6,
    /// An output buffer was too small; see the `written` out-parameter.
    BufferTooSmall = 7,
    /// Internal panic caught at the boundary.
    Panic = 8,
}

/// Opaque dataset handle.
pub struct EmdlotDataset {
    inner: Dataset,
}

/// Opaque trained-model handle: parameters plus the preprocessing fitted
/// on the training split.
pub struct EmdlotModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(EmdlotStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::Shape { .. } | Error::EmptySequence(_) => EmdlotStatus::InvalidArgument,
            Error::Io { .. } => EmdlotStatus::Io,
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => EmdlotStatus::Parse,
            Error::Checkpoint(_) => EmdlotStatus::Checkpoint,
            _ => EmdlotStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(EmdlotStatus::Parse, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EmdlotStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EmdlotStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            EmdlotStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            EmdlotStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(EmdlotStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn opt_json<T: serde::de::DeserializeOwned + Default>(p: *const c_char, what: &str) -> Result<T, Failure> {
    if p.is_null() {
        return Ok(T::default());
    }
    Ok(serde_json::from_str(str_arg(p, what)?)?)
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn require_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    Ok(())
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    require_out(out)?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("string out-parameter"));
    }
    *out = CString::new(s).expect("JSON has no nul bytes").into_raw();
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn emdlot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn emdlot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn emdlot_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a dataset directory (series, text and label CSVs).
///
/// # Safety
/// `dir` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emdlot_dataset_load(dir: *const c_char, out: *mut *mut EmdlotDataset) -> EmdlotStatus {
    guard(|| {
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        require_out(out)?;
        put(out, EmdlotDataset { inner: load_dir(&dir)? })
    })
}

/// Generates a synthetic dataset. `config_json` may be null for defaults.
///
/// # Safety
/// `config_json` must be null or a valid C string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn emdlot_dataset_synthesize(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut EmdlotDataset,
) -> EmdlotStatus {
    guard(|| {
        require_out(out)?;
        let cfg: SynthConfig = opt_json(config_json, "config_json")?;
        put(out, EmdlotDataset { inner: synthesize(&cfg, seed)? })
    })
}

/// Writes a dataset directory.
///
/// # Safety
/// `ds` must be a live handle and `dir` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn emdlot_dataset_save(ds: *const EmdlotDataset, dir: *const c_char) -> EmdlotStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        Ok(save_dir(&ds.inner, &dir)?)
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn emdlot_dataset_len(ds: *const EmdlotDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `ds` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn emdlot_dataset_free(ds: *mut EmdlotDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Runs the full pipeline (split, preprocessing, training, test
/// evaluation). `config_json` may be null for defaults. When `report_json`
/// is non-null it receives the run summary as JSON.
///
/// # Safety
/// Pointers must be valid; `report_json` may be null.
#[no_mangle]
pub unsafe extern "C" fn emdlot_train(
    ds: *const EmdlotDataset,
    config_json: *const c_char,
    out: *mut *mut EmdlotModel,
    report_json: *mut *mut c_char,
) -> EmdlotStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        let config: TrainConfig = opt_json(config_json, "config_json")?;
        require_out(out)?;
        let trained = run(&config, &ds.inner)?;
        if !report_json.is_null() {
            put_string(report_json, serde_json::to_string(&trained.result)?)?;
        }
        put(out, EmdlotModel { checkpoint: trained.checkpoint })
    })
}

/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emdlot_model_load(path: *const c_char, out: *mut *mut EmdlotModel) -> EmdlotStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        require_out(out)?;
        let checkpoint = Checkpoint::load(&path)?;
        checkpoint.model()?;
        put(out, EmdlotModel { checkpoint })
    })
}

/// Writes the model as a checkpoint file.
///
/// # Safety
/// `model` must be a live handle and `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn emdlot_model_save(model: *const EmdlotModel, path: *const c_char) -> EmdlotStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        Ok(model.checkpoint.save(&path)?)
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn emdlot_model_free(model: *mut EmdlotModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Evaluates on raw (unprocessed) data and returns the flat metric report.
/// With `test_split_only` set, the model's own train/test split is
/// re-derived from `ds` and only the test part is scored.
///
/// # Safety
/// Handles must be live and `report_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emdlot_evaluate(
    model: *const EmdlotModel,
    ds: *const EmdlotDataset,
    test_split_only: bool,
    report_json: *mut *mut c_char,
) -> EmdlotStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let ds = handle(ds, "dataset")?;
        let report = if test_split_only {
            let (_, test, _, _) = test_split(&model.checkpoint.config, &ds.inner)?;
            evaluate(&model.checkpoint, &test)?
        } else {
            evaluate(&model.checkpoint, &ds.inner)?
        };
        put_string(report_json, report.to_flat_json().to_string())
    })
}

/// Writes class probabilities (performing, extended, defaulted) row-major
/// into `probs`, three per sample in dataset order. `written` receives the
/// number of values needed; when `capacity` is smaller nothing is written
/// and the call returns `BufferTooSmall`.
///
/// # Safety
/// `probs` must point to `capacity` writable doubles (or be null with
/// `capacity` 0); `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn emdlot_predict(
    model: *const EmdlotModel,
    ds: *const EmdlotDataset,
    probs: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> EmdlotStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let ds = handle(ds, "dataset")?;
        if written.is_null() {
            return Err(null("written"));
        }
        let needed = 3 * ds.inner.len();
        *written = needed;
        if capacity < needed {
            return Err(Failure(
                EmdlotStatus::BufferTooSmall,
                format!("need room for {needed} values, got {capacity}"),
            ));
        }
        if needed == 0 {
            return Ok(());
        }
        if probs.is_null() {
            return Err(null("probs"));
        }
        let p = checkpoint_predictions(&model.checkpoint, &ds.inner)?;
        let flat: Vec<f64> = p.probs.into_iter().flatten().collect();
        ptr::copy_nonoverlapping(flat.as_ptr(), probs, flat.len());
        Ok(())
    })
}
