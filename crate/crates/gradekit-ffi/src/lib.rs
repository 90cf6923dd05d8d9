//! C ABI for the gradekit grading engine.
//!
//! Handles (`GkDataset`, `GkEnsemble`, `GkCombination`) are opaque pointers
//! owned by this library; free them with the matching `gk_*_free` function.
//! Fallible calls return a [`GkStatus`] code; on failure a human-readable
//! message is stored per thread and retrievable with
//! [`gk_last_error_message`]. Structured configuration crosses the boundary
//! as JSON strings, matching the formats of the gradekit CLI.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use gradekit::combine::{apply, build_matrix, fit_ols, CombinationModel};
use gradekit::ensemble::{
    load_ensemble, predict_part, save_ensemble, train_ensemble, GraderEnsemble,
};
use gradekit::exam::{cefr_label, overall_grade, Dataset, PartId};
use gradekit::io::{load_dataset, save_dataset};
use gradekit::metrics;
use gradekit::optim::TrainConfig;
use gradekit::synth::{generate, SynthSpec};
use gradekit::Error;

/// Status code returned by fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkStatus {
    /// Success.
    GkOk = 0,
    /// Invalid arguments (null pointer, bad UTF-8, malformed JSON).
    GkUsage = 1,
    /// Data or validation failure (missing file, malformed record, shape
    /// mismatch, empty join).
    GkData = 2,
    /// Numerical failure (divergence, degenerate metric input).
    GkNumeric = 3,
    /// An internal panic was caught; state may be stale but memory is safe.
    GkPanic = 4,
}

/// The five evaluation metrics for one prediction/reference pairing.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GkMetrics {
    pub pcc: f64,
    pub src: f64,
    pub rmse: f64,
    pub within_half: f64,
    pub within_one: f64,
    pub n: usize,
}

/// Opaque dataset handle.
pub struct GkDataset(Dataset);

/// Opaque handle to a trained per-part ensemble.
pub struct GkEnsemble(GraderEnsemble);

/// Opaque handle to a fitted per-part combination model.
pub struct GkCombination(CombinationModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<Vec<u8>>) {
    let cstring = CString::new(message).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn status_for(err: &Error) -> GkStatus {
    match err {
        Error::Diverged { .. } | Error::DegenerateInput(_) => GkStatus::GkNumeric,
        _ => GkStatus::GkData,
    }
}

fn fail(err: Error) -> GkStatus {
    let status = status_for(&err);
    set_error(err.to_string());
    status
}

fn fail_usage(message: &str) -> GkStatus {
    set_error(message);
    GkStatus::GkUsage
}

/// Runs `body` with panics converted to `GkPanic`.
fn guarded(body: impl FnOnce() -> GkStatus) -> GkStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            GkStatus::GkPanic
        }
    }
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string or null.
unsafe fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, GkStatus> {
    if ptr.is_null() {
        return Err(fail_usage(&format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail_usage(&format!("{name} is not valid UTF-8")))
}

unsafe fn path_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a Path, GkStatus> {
    utf8_arg(ptr, name).map(Path::new)
}

fn out_ptr<T>(out: *mut *mut T, value: T) -> GkStatus {
    if out.is_null() {
        return fail_usage("output pointer is null");
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    GkStatus::GkOk
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn gk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns a copy of the calling thread's last error message, or null when
/// no error has occurred. Free the copy with `gk_string_free`.
#[no_mangle]
pub extern "C" fn gk_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|msg| msg.clone().into_raw())
            .unwrap_or(std::ptr::null_mut())
    })
}

/// Frees a string returned by this library.
///
/// # Safety
/// `ptr` must have been returned by a gradekit-ffi function and not freed
/// before; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gk_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(CString::from_raw(ptr));
    }
}

/// Loads a JSON-lines dataset from `path` into a new handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn gk_dataset_load(
    path: *const c_char,
    out: *mut *mut GkDataset,
) -> GkStatus {
    guarded(|| {
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_dataset(path) {
            Ok(ds) => out_ptr(out, GkDataset(ds)),
            Err(e) => fail(e),
        }
    })
}

/// Writes a dataset as JSON lines.
///
/// # Safety
/// `dataset` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gk_dataset_save(
    dataset: *const GkDataset,
    path: *const c_char,
) -> GkStatus {
    guarded(|| {
        let Some(ds) = dataset.as_ref() else {
            return fail_usage("dataset is null");
        };
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match save_dataset(&ds.0, path) {
            Ok(()) => GkStatus::GkOk,
            Err(e) => fail(e),
        }
    })
}

/// Number of speakers in a dataset; 0 for a null handle.
///
/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gk_dataset_num_speakers(dataset: *const GkDataset) -> usize {
    dataset.as_ref().map_or(0, |ds| ds.0.len())
}

/// # Safety
/// `dataset` must be a handle from this library, not freed before; null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn gk_dataset_free(dataset: *mut GkDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Generates synthetic train/calibration/test datasets from a spec given
/// as JSON (all fields optional, same schema as the CLI synth config).
///
/// # Safety
/// `spec_json` must be a valid NUL-terminated string; the three output
/// pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_synth_generate(
    spec_json: *const c_char,
    out_train: *mut *mut GkDataset,
    out_calibration: *mut *mut GkDataset,
    out_test: *mut *mut GkDataset,
) -> GkStatus {
    guarded(|| {
        let spec_text = match utf8_arg(spec_json, "spec_json") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let spec: SynthSpec = if spec_text.trim().is_empty() {
            SynthSpec::default()
        } else {
            match merge_spec(spec_text) {
                Ok(s) => s,
                Err(status) => return status,
            }
        };
        match generate(&spec) {
            Ok((train, cal, test)) => {
                let s = out_ptr(out_train, GkDataset(train));
                if s != GkStatus::GkOk {
                    return s;
                }
                let s = out_ptr(out_calibration, GkDataset(cal));
                if s != GkStatus::GkOk {
                    return s;
                }
                out_ptr(out_test, GkDataset(test))
            }
            Err(e) => fail(e),
        }
    })
}

/// Parses a possibly partial spec JSON on top of the defaults.
fn merge_spec(text: &str) -> Result<SynthSpec, GkStatus> {
    let mut base =
        serde_json::to_value(SynthSpec::default()).map_err(|e| fail_usage(&e.to_string()))?;
    let patch: serde_json::Value =
        serde_json::from_str(text).map_err(|e| fail_usage(&format!("spec_json: {e}")))?;
    let serde_json::Value::Object(patch) = patch else {
        return Err(fail_usage("spec_json must be a JSON object"));
    };
    let obj = base.as_object_mut().expect("spec serializes to an object");
    for (k, v) in patch {
        if !obj.contains_key(&k) {
            return Err(fail_usage(&format!("spec_json: unknown field {k:?}")));
        }
        obj.insert(k, v);
    }
    serde_json::from_value(base).map_err(|e| fail_usage(&format!("spec_json: {e}")))
}

/// Trains an ensemble of `members` heads on `dataset` with the training
/// config given as JSON (same schema as the CLI training config).
///
/// # Safety
/// `dataset` must be a live handle; `config_json` a valid NUL-terminated
/// string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_train_ensemble(
    dataset: *const GkDataset,
    config_json: *const c_char,
    members: usize,
    base_seed: u64,
    out: *mut *mut GkEnsemble,
) -> GkStatus {
    guarded(|| {
        let Some(ds) = dataset.as_ref() else {
            return fail_usage("dataset is null");
        };
        let text = match utf8_arg(config_json, "config_json") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let cfg: TrainConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail_usage(&format!("config_json: {e}")),
        };
        match train_ensemble(&ds.0, &cfg, members, base_seed) {
            Ok(ens) => out_ptr(out, GkEnsemble(ens)),
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `ensemble` must be a live handle; `dir` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gk_ensemble_save(
    ensemble: *const GkEnsemble,
    dir: *const c_char,
) -> GkStatus {
    guarded(|| {
        let Some(ens) = ensemble.as_ref() else {
            return fail_usage("ensemble is null");
        };
        let dir = match path_arg(dir, "dir") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match save_ensemble(&ens.0, dir) {
            Ok(()) => GkStatus::GkOk,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `dir` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_ensemble_load(
    dir: *const c_char,
    out: *mut *mut GkEnsemble,
) -> GkStatus {
    guarded(|| {
        let dir = match path_arg(dir, "dir") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_ensemble(dir) {
            Ok(ens) => out_ptr(out, GkEnsemble(ens)),
            Err(e) => fail(e),
        }
    })
}

/// Zero-based index of the part this ensemble grades (0 = P1), or -1 for a
/// null handle.
///
/// # Safety
/// `ensemble` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gk_ensemble_part_index(ensemble: *const GkEnsemble) -> i32 {
    ensemble.as_ref().map_or(-1, |e| e.0.part.index() as i32)
}

/// Scores every speaker of `dataset` with the ensemble, writing one grade
/// per speaker (dataset order) into `out_scores`. Speakers without
/// responses for the ensemble's part receive NaN. `len` must equal the
/// speaker count.
///
/// # Safety
/// `ensemble` and `dataset` must be live handles; `out_scores` must point
/// to at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_ensemble_predict(
    ensemble: *const GkEnsemble,
    dataset: *const GkDataset,
    out_scores: *mut f64,
    len: usize,
) -> GkStatus {
    guarded(|| {
        let (Some(ens), Some(ds)) = (ensemble.as_ref(), dataset.as_ref()) else {
            return fail_usage("ensemble or dataset is null");
        };
        if out_scores.is_null() {
            return fail_usage("out_scores is null");
        }
        if len != ds.0.len() {
            return fail_usage("len does not match the dataset speaker count");
        }
        let out = std::slice::from_raw_parts_mut(out_scores, len);
        for (slot, sub) in out.iter_mut().zip(&ds.0.submissions) {
            *slot = match predict_part(&ens.0, sub) {
                Ok(score) => score,
                Err(Error::MissingPart(_)) => f64::NAN,
                Err(e) => return fail(e),
            };
        }
        GkStatus::GkOk
    })
}

/// # Safety
/// `ensemble` must be a handle from this library, not freed before; null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn gk_ensemble_free(ensemble: *mut GkEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Fits combination coefficients from prediction CSV files against the
/// reference overall grades of `targets`.
///
/// # Safety
/// `csv_paths` must point to `n_paths` valid NUL-terminated strings;
/// `targets` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_combination_fit(
    csv_paths: *const *const c_char,
    n_paths: usize,
    targets: *const GkDataset,
    out: *mut *mut GkCombination,
) -> GkStatus {
    guarded(|| {
        let Some(ds) = targets.as_ref() else {
            return fail_usage("targets is null");
        };
        if csv_paths.is_null() || n_paths == 0 {
            return fail_usage("csv_paths is null or empty");
        }
        let mut paths = Vec::with_capacity(n_paths);
        for i in 0..n_paths {
            let ptr = *csv_paths.add(i);
            match path_arg(ptr, "csv_paths") {
                Ok(p) => paths.push(PathBuf::from(p)),
                Err(s) => return s,
            }
        }
        let matrix = match build_matrix(&paths, &ds.0) {
            Ok(m) => m,
            Err(e) => return fail(e),
        };
        match fit_ols(&matrix) {
            Ok(model) => out_ptr(out, GkCombination(model)),
            Err(e) => fail(e),
        }
    })
}

/// Applies a fitted combination to one row of scores given as parallel
/// arrays of column tags (`grader:part`) and values.
///
/// # Safety
/// `model` must be a live handle; `tags` must point to `n` valid
/// NUL-terminated strings; `values` to `n` doubles; `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn gk_combination_apply(
    model: *const GkCombination,
    tags: *const *const c_char,
    values: *const f64,
    n: usize,
    out: *mut f64,
) -> GkStatus {
    guarded(|| {
        let Some(m) = model.as_ref() else {
            return fail_usage("model is null");
        };
        if tags.is_null() || values.is_null() || out.is_null() {
            return fail_usage("tags, values or out is null");
        }
        let mut row = std::collections::BTreeMap::new();
        for i in 0..n {
            let tag = match utf8_arg(*tags.add(i), "tags") {
                Ok(t) => t.to_string(),
                Err(s) => return s,
            };
            row.insert(tag, *values.add(i));
        }
        match apply(&m.0, &row) {
            Ok(score) => {
                *out = score;
                GkStatus::GkOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gk_combination_save(
    model: *const GkCombination,
    path: *const c_char,
) -> GkStatus {
    guarded(|| {
        let Some(m) = model.as_ref() else {
            return fail_usage("model is null");
        };
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match m.0.save(path) {
            Ok(()) => GkStatus::GkOk,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `path` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_combination_load(
    path: *const c_char,
    out: *mut *mut GkCombination,
) -> GkStatus {
    guarded(|| {
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match CombinationModel::load(path) {
            Ok(model) => out_ptr(out, GkCombination(model)),
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must be a handle from this library, not freed before; null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn gk_combination_free(model: *mut GkCombination) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Computes the five evaluation metrics over parallel prediction and
/// reference arrays of length `n`.
///
/// # Safety
/// `pred` and `reference` must point to `n` doubles; `out` to one
/// `GkMetrics`.
#[no_mangle]
pub unsafe extern "C" fn gk_metrics_report(
    pred: *const f64,
    reference: *const f64,
    n: usize,
    out: *mut GkMetrics,
) -> GkStatus {
    guarded(|| {
        if pred.is_null() || reference.is_null() || out.is_null() {
            return fail_usage("pred, reference or out is null");
        }
        let p = std::slice::from_raw_parts(pred, n);
        let r = std::slice::from_raw_parts(reference, n);
        match metrics::report(p, r) {
            Ok(rep) => {
                *out = GkMetrics {
                    pcc: rep.pcc,
                    src: rep.src,
                    rmse: rep.rmse,
                    within_half: rep.within_half,
                    within_one: rep.within_one,
                    n: rep.n,
                };
                GkStatus::GkOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Mean of five part grades (the overall exam grade).
///
/// # Safety
/// `part_scores` must point to five doubles; `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn gk_overall_grade(part_scores: *const f64, out: *mut f64) -> GkStatus {
    guarded(|| {
        if part_scores.is_null() || out.is_null() {
            return fail_usage("part_scores or out is null");
        }
        let scores = std::slice::from_raw_parts(part_scores, 5);
        let map = PartId::ALL
            .into_iter()
            .zip(scores.iter().copied())
            .collect();
        match overall_grade(&map) {
            Ok(g) => {
                *out = g;
                GkStatus::GkOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes the CEFR label (e.g. "B2") for a score into `buf` (NUL
/// terminated); `cap` must be at least 3.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gk_cefr_label(score: f64, buf: *mut c_char, cap: usize) -> GkStatus {
    guarded(|| {
        if buf.is_null() || cap < 3 {
            return fail_usage("buf is null or cap < 3");
        }
        match cefr_label(score) {
            Ok(label) => {
                let bytes = label.as_bytes();
                let dst = std::slice::from_raw_parts_mut(buf as *mut u8, cap);
                dst[..bytes.len()].copy_from_slice(bytes);
                dst[bytes.len()] = 0;
                GkStatus::GkOk
            }
            Err(e) => fail(e),
        }
    })
}
