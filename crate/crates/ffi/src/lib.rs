//! C ABI over the `progspace` pipeline.
//!
//! Every fallible function returns a [`PsStatus`]; on failure a description
//! is available from [`ps_last_error_message`] on the same thread. Objects
//! cross the boundary as opaque handles that must be released with their
//! matching `*_free` function. Matrices are dense, row-major `double`
//! buffers. Panics never unwind into C: they surface as
//! `PS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nalgebra::DMatrix;
use progspace::config::PipelineConfig;
use progspace::dimred::nmf::{self, NmfOptions};
use progspace::eval;
use progspace::forest::{self, ForestModel, ForestParams};
use progspace::mixture::{self, GmmModel, GmmOptions};
use progspace::pipeline::{self, Analysis};
use progspace::Error;

/// Result of every fallible call. Values 1 to 3 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    Validation = 1,
    Io = 2,
    Numeric = 3,
    /// A required pointer argument was NULL.
    NullPointer = 4,
    /// Rust code panicked; the message is kept as the last error.
    Panic = 5,
}

/// Pipeline configuration handle.
pub struct PsConfig {
    inner: PipelineConfig,
}

/// Result of a full `run`.
pub struct PsAnalysis {
    inner: Analysis,
}

/// Fitted Gaussian mixture.
pub struct PsGmm {
    inner: GmmModel,
}

/// Trained random forest together with the caller's integer class labels.
pub struct PsForest {
    inner: ForestModel,
    labels: Vec<u32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Core(Error),
    Null(&'static str),
    Invalid(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            let status = match e.exit_code() {
                2 => PsStatus::Io,
                3 => PsStatus::Numeric,
                _ => PsStatus::Validation,
            };
            set_last_error(e.to_string());
            status
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("`{what}` must not be NULL"));
            PsStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(message))) => {
            set_last_error(message);
            PsStatus::Validation
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            PsStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &'static str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or(Failure::Null(what))
}

unsafe fn string(ptr: *const c_char, what: &'static str) -> Result<String, Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn write<T>(ptr: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    ptr.write(value);
    Ok(())
}

unsafe fn matrix(data: *const f64, rows: usize, cols: usize) -> Result<DMatrix<f64>, Failure> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure::Invalid("matrix dimensions overflow".into()))?;
    Ok(DMatrix::from_row_slice(rows, cols, slice(data, len, "data")?))
}

fn copy_row_major(m: &DMatrix<f64>, out: &mut [f64]) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[i * m.ncols() + j] = m[(i, j)];
        }
    }
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// New configuration with every default.
#[no_mangle]
pub extern "C" fn ps_config_new() -> *mut PsConfig {
    Box::into_raw(Box::new(PsConfig {
        inner: PipelineConfig::default(),
    }))
}

/// Parses a configuration file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_config_from_file(path: *const c_char, out: *mut *mut PsConfig) -> PsStatus {
    guard(|| {
        let path = PathBuf::from(string(path, "path")?);
        let cfg = PipelineConfig::from_file(&path)?;
        write(out, Box::into_raw(Box::new(PsConfig { inner: cfg })), "out")
    })
}

/// Applies one `section.key = value` setting.
///
/// # Safety
/// `config` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ps_config_set(config: *mut PsConfig, key: *const c_char, value: *const c_char) -> PsStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or(Failure::Null("config"))?;
        let (key, value) = (string(key, "key")?, string(value, "value")?);
        let mut updated = cfg.inner.clone();
        updated.set(&key, &value)?;
        updated.validate()?;
        cfg.inner = updated;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library (or be NULL) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ps_config_free(config: *mut PsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Writes a synthetic cohort (`visits.csv`, `truth.csv`) to `paths.output`.
///
/// # Safety
/// `config` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn ps_synth(config: *const PsConfig) -> PsStatus {
    guard(|| {
        pipeline::cmd_synth(&handle(config, "config")?.inner)?;
        Ok(())
    })
}

/// Runs the full pipeline on `paths.input`, writing reports to
/// `paths.output`. When `out` is non-NULL it receives the analysis handle.
///
/// # Safety
/// `config` must come from this library; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn ps_run(config: *const PsConfig, out: *mut *mut PsAnalysis) -> PsStatus {
    guard(|| {
        let analysis = pipeline::cmd_run(&handle(config, "config")?.inner)?;
        if !out.is_null() {
            out.write(Box::into_raw(Box::new(PsAnalysis { inner: analysis })));
        }
        Ok(())
    })
}

/// Mixture order chosen by BIC.
///
/// # Safety
/// `analysis` must come from [`ps_run`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_analysis_chosen_k(analysis: *const PsAnalysis, out: *mut usize) -> PsStatus {
    guard(|| write(out, handle(analysis, "analysis")?.inner.selection.chosen_k, "out"))
}

/// Number of input windows that were cross-validated.
///
/// # Safety
/// `analysis` must come from [`ps_run`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_analysis_n_windows(analysis: *const PsAnalysis, out: *mut usize) -> PsStatus {
    guard(|| write(out, handle(analysis, "analysis")?.inner.windows.len(), "out"))
}

/// Horizon (months) and pooled macro AUC of window `index`.
///
/// # Safety
/// `analysis` must come from [`ps_run`]; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_analysis_window_auc(
    analysis: *const PsAnalysis,
    index: usize,
    horizon_out: *mut u32,
    auc_out: *mut f64,
) -> PsStatus {
    guard(|| {
        let windows = &handle(analysis, "analysis")?.inner.windows;
        let w = windows.get(index).ok_or_else(|| {
            Failure::Invalid(format!("window {index} out of range ({} windows)", windows.len()))
        })?;
        write(horizon_out, w.horizon, "horizon_out")?;
        write(auc_out, w.report.macro_auc(), "auc_out")
    })
}

/// # Safety
/// `analysis` must come from [`ps_run`] (or be NULL) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ps_analysis_free(analysis: *mut PsAnalysis) {
    if !analysis.is_null() {
        drop(Box::from_raw(analysis));
    }
}

/// Replays the models in `artifacts` on the `external` visits file and
/// writes the replication report to `paths.output`. `auc_out` receives the
/// macro AUC (NaN when undefined) and `n_out` the number of scored patients.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ps_replicate(
    config: *const PsConfig,
    artifacts: *const c_char,
    external: *const c_char,
    auc_out: *mut f64,
    n_out: *mut usize,
) -> PsStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.inner;
        let artifacts = PathBuf::from(string(artifacts, "artifacts")?);
        let external = PathBuf::from(string(external, "external")?);
        let report = pipeline::cmd_replicate(cfg, &artifacts, &external)?;
        write(auc_out, report.macro_auc.unwrap_or(f64::NAN), "auc_out")?;
        write(n_out, report.n_patients, "n_out")
    })
}

/// Nonnegative factorization `X ≈ W·H` of a `rows × cols` matrix. `w_out`
/// holds `rows × rank` and `h_out` `rank × cols` values; `objective_out`
/// (nullable) receives the final squared reconstruction error.
///
/// # Safety
/// Buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ps_nmf(
    data: *const f64,
    rows: usize,
    cols: usize,
    rank: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
    restarts: usize,
    w_out: *mut f64,
    h_out: *mut f64,
    objective_out: *mut f64,
) -> PsStatus {
    guard(|| {
        let x = matrix(data, rows, cols)?;
        let opts = NmfOptions {
            rank,
            max_iter,
            tol,
            seed,
            restarts,
        };
        let (fit, _) = nmf::factorize(&x, &opts)?;
        copy_row_major(&fit.w, slice_mut(w_out, rows * rank, "w_out")?);
        copy_row_major(&fit.h, slice_mut(h_out, rank * cols, "h_out")?);
        if !objective_out.is_null() {
            objective_out.write(fit.objective());
        }
        Ok(())
    })
}

/// Fits a `k`-component full-covariance Gaussian mixture to `n × d` points.
///
/// # Safety
/// `data` must hold `n * d` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_gmm_fit(
    data: *const f64,
    n: usize,
    d: usize,
    k: usize,
    seed: u64,
    out: *mut *mut PsGmm,
) -> PsStatus {
    guard(|| {
        let x = matrix(data, n, d)?;
        let opts = GmmOptions {
            seed,
            ..GmmOptions::default()
        };
        let model = mixture::fit_gmm(&x, k, &opts)?;
        write(out, Box::into_raw(Box::new(PsGmm { inner: model })), "out")
    })
}

/// Number of mixture components.
///
/// # Safety
/// `gmm` must come from [`ps_gmm_fit`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_gmm_k(gmm: *const PsGmm, out: *mut usize) -> PsStatus {
    guard(|| write(out, handle(gmm, "gmm")?.inner.k(), "out"))
}

/// Training log-likelihood of the fitted mixture.
///
/// # Safety
/// `gmm` must come from [`ps_gmm_fit`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_gmm_log_likelihood(gmm: *const PsGmm, out: *mut f64) -> PsStatus {
    guard(|| write(out, handle(gmm, "gmm")?.inner.log_likelihood(), "out"))
}

/// Hard subtype ranks (1 = slowest) for `n × d` points.
///
/// # Safety
/// `data` must hold `n * d` values and `labels_out` `n` slots.
#[no_mangle]
pub unsafe extern "C" fn ps_gmm_assign(
    gmm: *const PsGmm,
    data: *const f64,
    n: usize,
    d: usize,
    labels_out: *mut u32,
) -> PsStatus {
    guard(|| {
        let model = &handle(gmm, "gmm")?.inner;
        let x = matrix(data, n, d)?;
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let assignment = mixture::assign_subtypes(model, &x, &ids)?;
        let out = slice_mut(labels_out, n, "labels_out")?;
        for (o, &l) in out.iter_mut().zip(&assignment.labels) {
            *o = l as u32;
        }
        Ok(())
    })
}

/// # Safety
/// `gmm` must come from [`ps_gmm_fit`] (or be NULL) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ps_gmm_free(gmm: *mut PsGmm) {
    if !gmm.is_null() {
        drop(Box::from_raw(gmm));
    }
}

fn class_name(label: u32) -> String {
    // zero padding keeps lexicographic class order equal to numeric order
    format!("{label:010}")
}

/// Trains a forest on `n × p` features with integer class labels. The other
/// hyperparameters keep their defaults.
///
/// # Safety
/// `data` must hold `n * p` values, `labels` `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_forest_train(
    data: *const f64,
    n: usize,
    p: usize,
    labels: *const u32,
    n_trees: usize,
    seed: u64,
    out: *mut *mut PsForest,
) -> PsStatus {
    guard(|| {
        let x = matrix(data, n, p)?;
        let labels = slice(labels, n, "labels")?;
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let params = ForestParams {
            n_trees,
            seed,
            ..ForestParams::default()
        };
        let classes: Vec<String> = labels.iter().map(|&l| class_name(l)).collect();
        let model = forest::train_forest(&x, &classes, &names, &params)?;
        let mut distinct = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        write(
            out,
            Box::into_raw(Box::new(PsForest {
                inner: model,
                labels: distinct,
            })),
            "out",
        )
    })
}

/// Number of classes, i.e. the width of each probability row.
///
/// # Safety
/// `forest` must come from [`ps_forest_train`]; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_forest_n_classes(forest: *const PsForest, out: *mut usize) -> PsStatus {
    guard(|| write(out, handle(forest, "forest")?.labels.len(), "out"))
}

/// Caller label of probability column `index` (columns ascend by label).
///
/// # Safety
/// `forest` must come from [`ps_forest_train`]; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_forest_class_label(forest: *const PsForest, index: usize, out: *mut u32) -> PsStatus {
    guard(|| {
        let labels = &handle(forest, "forest")?.labels;
        let l = labels
            .get(index)
            .ok_or_else(|| Failure::Invalid(format!("class {index} out of range")))?;
        write(out, *l, "out")
    })
}

/// Class probabilities for `n × p` rows into `out` (`n × n_classes`,
/// row-major). `out_len` must equal `n * n_classes`.
///
/// # Safety
/// `data` must hold `n * p` values and `out` `out_len` slots.
#[no_mangle]
pub unsafe extern "C" fn ps_forest_predict_proba(
    forest: *const PsForest,
    data: *const f64,
    n: usize,
    p: usize,
    out: *mut f64,
    out_len: usize,
) -> PsStatus {
    guard(|| {
        let f = handle(forest, "forest")?;
        let expected = n * f.labels.len();
        if out_len != expected {
            return Err(Failure::Invalid(format!(
                "output buffer holds {out_len} values, {expected} needed"
            )));
        }
        let proba = forest::predict_proba(&f.inner, &matrix(data, n, p)?)?;
        copy_row_major(&proba, slice_mut(out, out_len, "out")?);
        Ok(())
    })
}

/// # Safety
/// `forest` must come from [`ps_forest_train`] (or be NULL) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ps_forest_free(forest: *mut PsForest) {
    if !forest.is_null() {
        drop(Box::from_raw(forest));
    }
}

/// Area under the ROC curve; `labels` are 0 (negative) or nonzero (positive).
///
/// # Safety
/// `scores` and `labels` must hold `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_roc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> PsStatus {
    guard(|| {
        let scores = slice(scores, n, "scores")?;
        let labels: Vec<bool> = slice(labels, n, "labels")?.iter().map(|&l| l != 0).collect();
        write(out, eval::roc_curve(scores, &labels)?.auc, "out")
    })
}

/// Adjusted Rand index between two labelings of `n` elements.
///
/// # Safety
/// `a` and `b` must hold `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_adjusted_rand_index(a: *const u32, b: *const u32, n: usize, out: *mut f64) -> PsStatus {
    guard(|| {
        let ari = eval::adjusted_rand_index(slice(a, n, "a")?, slice(b, n, "b")?)?;
        write(out, ari, "out")
    })
}
