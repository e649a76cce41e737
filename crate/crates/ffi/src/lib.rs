//! C ABI over `fairgbt`.
//!
//! Datasets and models cross the boundary as opaque handles created by the
//! `fg_*` constructors and released with the matching `*_free`. Every
//! fallible call returns an [`FgStatus`]; on failure a message is kept per
//! thread and can be read with [`fg_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fairgbt::dataset::{load_csv, preprocess, stratified_split, synth_biased, Dataset, FeatureSchema, Preprocessor};
use fairgbt::evaluate::auc_roc;
use fairgbt::fair_training::{train_fair, FairnessConfig};
use fairgbt::fairness::{snapshot, wasserstein1d, GroupView};
use fairgbt::gbt::{model_io, train_baseline, TrainConfig, TreeEnsemble};
use fairgbt::pipeline::{run_mitigation, write_mitigation, PipelineConfig};
use fairgbt::shap::treeshap_ensemble;
use fairgbt::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericalError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Opaque dataset handle.
pub struct FgDataset(Dataset);

/// Opaque model handle.
pub struct FgModel(TreeEnsemble);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FgTrainParams {
    pub rounds: u32,
    pub learning_rate: f64,
    pub max_depth: u32,
    pub min_child_cover: f64,
    pub l2_leaf_reg: f64,
    pub seed: u64,
}

impl From<&FgTrainParams> for TrainConfig {
    fn from(p: &FgTrainParams) -> Self {
        TrainConfig {
            rounds: p.rounds as usize,
            learning_rate: p.learning_rate,
            max_depth: p.max_depth as usize,
            min_child_cover: p.min_child_cover,
            l2_leaf_reg: p.l2_leaf_reg,
            seed: p.seed,
        }
    }
}

/// `θ = (λ, w1, w2, w3)`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FgFairness {
    pub lambda: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

/// Hard-threshold fairness metrics of one prediction vector.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FgSnapshot {
    pub spd: f64,
    pub theil: f64,
    pub theil_normalized: f64,
    pub wasserstein: f64,
    pub rate_group0: f64,
    pub rate_group1: f64,
}

/// Settings of a full mitigation run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FgMitigateParams {
    pub train: FgTrainParams,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub threshold: f64,
    pub budget: u32,
    pub folds: u32,
    pub search_seed: u64,
    /// Non-zero: skip the search and use `theta`.
    pub use_theta: u8,
    pub theta: FgFairness,
}

/// Test-set summary of a mitigation run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FgComparison {
    pub pre: FgSnapshot,
    pub post: FgSnapshot,
    pub pre_auc: f64,
    pub post_auc: f64,
    pub lambda: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: FgStatus, msg: impl Into<String>) -> FgStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> FgStatus {
    let status = match e.exit_code() {
        fairgbt::exit::USAGE => FgStatus::InvalidArgument,
        fairgbt::exit::NUMERICAL => FgStatus::NumericalError,
        _ => FgStatus::DataError,
    };
    fail(status, e.to_string())
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), FgStatus>) -> FgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FgStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(FgStatus::Panic, "internal panic"),
    }
}

fn lift<T, E: Into<Error>>(r: Result<T, E>) -> Result<T, FgStatus> {
    r.map_err(|e| from_error(e.into()))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, FgStatus> {
    p.as_ref().ok_or_else(|| fail(FgStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], FgStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(FgStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], FgStatus> {
    if p.is_null() {
        return Err(fail(FgStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path(p: *const c_char, name: &str) -> Result<PathBuf, FgStatus> {
    if p.is_null() {
        return Err(fail(FgStatus::NullPointer, format!("{name} is null")));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FgStatus::InvalidArgument, format!("{name} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T, name: &str) -> Result<(), FgStatus> {
    if out.is_null() {
        return Err(fail(FgStatus::NullPointer, format!("{name} is null")));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn convert_snapshot(s: &fairgbt::fairness::FairnessSnapshot) -> FgSnapshot {
    FgSnapshot {
        spd: s.spd,
        theil: s.theil,
        theil_normalized: s.theil_normalized,
        wasserstein: s.wasserstein,
        rate_group0: s.rate_group0,
        rate_group1: s.rate_group1,
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn fg_train_params_default() -> FgTrainParams {
    let t = TrainConfig::default();
    FgTrainParams {
        rounds: t.rounds as u32,
        learning_rate: t.learning_rate,
        max_depth: t.max_depth as u32,
        min_child_cover: t.min_child_cover,
        l2_leaf_reg: t.l2_leaf_reg,
        seed: t.seed,
    }
}

#[no_mangle]
pub extern "C" fn fg_mitigate_params_default() -> FgMitigateParams {
    let p = PipelineConfig::default();
    FgMitigateParams {
        train: fg_train_params_default(),
        test_fraction: p.test_fraction,
        split_seed: p.split_seed,
        threshold: p.threshold,
        budget: p.search.budget as u32,
        folds: p.search.folds as u32,
        search_seed: p.search.seed,
        use_theta: 0,
        theta: FgFairness {
            lambda: 0.0,
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
        },
    }
}

/// Synthetic cohort with a proxy feature and a group-shifted intercept.
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_synth(
    rows: usize,
    cols: usize,
    bias_strength: f64,
    seed: u64,
    out: *mut *mut FgDataset,
) -> FgStatus {
    guard(|| {
        let d = lift(synth_biased(rows, cols, bias_strength, seed))?;
        put(out, FgDataset(d), "out")
    })
}

/// Reads a CSV with a TOML schema. Rows with unusable labels or sensitive
/// values are dropped.
///
/// # Safety
/// Paths must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_load_csv(
    csv_path: *const c_char,
    schema_path: *const c_char,
    out: *mut *mut FgDataset,
) -> FgStatus {
    guard(|| {
        let csv = path(csv_path, "csv_path")?;
        let schema = lift(FeatureSchema::load(&path(schema_path, "schema_path")?))?;
        let (d, _) = lift(load_csv(&csv, &schema))?;
        put(out, FgDataset(d), "out")
    })
}

/// Numeric dataset from a row-major `rows × cols` matrix, labels and
/// sensitive codes (0/1).
///
/// # Safety
/// `x` must hold `rows·cols` values; `y` and `a` must hold `rows` values.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_from_arrays(
    x: *const f64,
    rows: usize,
    cols: usize,
    y: *const u8,
    a: *const u8,
    out: *mut *mut FgDataset,
) -> FgStatus {
    guard(|| {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| fail(FgStatus::InvalidArgument, "rows·cols overflows"))?;
        let x = slice(x, n, "x")?;
        let y = slice(y, rows, "y")?.to_vec();
        let a = slice(a, rows, "a")?.to_vec();
        let specs = (0..cols)
            .map(|j| fairgbt::dataset::ColumnSpec::continuous(format!("x{j}")))
            .collect();
        let schema = lift(FeatureSchema::new(specs, "y", "a", ["0".into(), "1".into()]))?;
        let columns = (0..cols)
            .map(|j| fairgbt::dataset::FeatureColumn::Numeric((0..rows).map(|i| x[i * cols + j]).collect()))
            .collect();
        let d = lift(Dataset::new(schema, columns, y, a))?;
        put(out, FgDataset(d), "out")
    })
}

/// # Safety
/// `d` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_rows(d: *const FgDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.len())
}

/// Number of model features (after one-hot encoding once preprocessed).
///
/// # Safety
/// `d` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_features(d: *const FgDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.n_features())
}

/// Copies the 0/1 labels into `out[0..len]`.
///
/// # Safety
/// `d` must be a live handle; `out` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_labels(d: *const FgDataset, out: *mut u8, len: usize) -> FgStatus {
    guard(|| copy_codes(deref(d, "dataset")?.0.labels(), out, len))
}

/// Copies the 0/1 sensitive codes into `out[0..len]`.
///
/// # Safety
/// `d` must be a live handle; `out` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_sensitive(d: *const FgDataset, out: *mut u8, len: usize) -> FgStatus {
    guard(|| copy_codes(deref(d, "dataset")?.0.sensitive(), out, len))
}

unsafe fn copy_codes(src: &[u8], out: *mut u8, len: usize) -> Result<(), FgStatus> {
    if len < src.len() {
        return Err(fail(FgStatus::BufferTooSmall, format!("need {} values, got {len}", src.len())));
    }
    slice_mut(out, len, "out")?[..src.len()].copy_from_slice(src);
    Ok(())
}

/// Standardized, one-hot encoded copy of `d`, with statistics fitted on `d`.
///
/// # Safety
/// `d` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_preprocess(d: *const FgDataset, out: *mut *mut FgDataset) -> FgStatus {
    guard(|| {
        let d = deref(d, "dataset")?;
        let p = lift(preprocess(&d.0))?;
        put(out, FgDataset(p), "out")
    })
}

/// Stratified split; both parts are preprocessed with statistics fitted on
/// the training part.
///
/// # Safety
/// `d` must be a live handle; `train` and `test` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_split(
    d: *const FgDataset,
    test_fraction: f64,
    seed: u64,
    train: *mut *mut FgDataset,
    test: *mut *mut FgDataset,
) -> FgStatus {
    guard(|| {
        let d = deref(d, "dataset")?;
        if train.is_null() || test.is_null() {
            return Err(fail(FgStatus::NullPointer, "output handle is null"));
        }
        let split = lift(stratified_split(&d.0, test_fraction, seed))?;
        let pre = Preprocessor::fit(&split.train);
        let tr = lift(pre.apply(&split.train))?;
        let te = lift(pre.apply(&split.test))?;
        put(train, FgDataset(tr), "train")?;
        put(test, FgDataset(te), "test")
    })
}

/// # Safety
/// `d` must come from an `fg_dataset_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_free(d: *mut FgDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// Handles and `params` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_train_baseline(
    train: *const FgDataset,
    params: *const FgTrainParams,
    out: *mut *mut FgModel,
) -> FgStatus {
    guard(|| {
        let d = deref(train, "train")?;
        let cfg = TrainConfig::from(deref(params, "params")?);
        let m = lift(train_baseline(&d.0, &cfg))?;
        put(out, FgModel(m), "out")
    })
}

/// # Safety
/// Handles and parameter pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_train_fair(
    train: *const FgDataset,
    params: *const FgTrainParams,
    theta: *const FgFairness,
    out: *mut *mut FgModel,
) -> FgStatus {
    guard(|| {
        let d = deref(train, "train")?;
        let cfg = TrainConfig::from(deref(params, "params")?);
        let t = deref(theta, "theta")?;
        let f = FairnessConfig::new(t.lambda, t.w1, t.w2, t.w3);
        let m = lift(train_fair(&d.0, &cfg, &f))?;
        put(out, FgModel(m), "out")
    })
}

/// Writes one probability per row of `d` into `out[0..len]`.
///
/// # Safety
/// Handles must be valid; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fg_model_predict(
    model: *const FgModel,
    d: *const FgDataset,
    out: *mut f64,
    len: usize,
) -> FgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let d = deref(d, "dataset")?;
        if len < d.0.len() {
            return Err(fail(FgStatus::BufferTooSmall, format!("need {} values, got {len}", d.0.len())));
        }
        let x = lift(d.0.feature_matrix())?;
        let p = lift(m.0.predict_proba(&x))?;
        slice_mut(out, len, "out")?[..p.len()].copy_from_slice(&p);
        Ok(())
    })
}

/// # Safety
/// `model` must be valid; `file` must be a nul-terminated path.
#[no_mangle]
pub unsafe extern "C" fn fg_model_save(model: *const FgModel, file: *const c_char) -> FgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        lift(model_io::save(&m.0, &path(file, "path")?))
    })
}

/// # Safety
/// `file` must be a nul-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_model_load(file: *const c_char, out: *mut *mut FgModel) -> FgStatus {
    guard(|| {
        let m = lift(model_io::load(&path(file, "path")?))?;
        put(out, FgModel(m), "out")
    })
}

/// # Safety
/// `model` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn fg_model_trees(model: *const FgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.trees.len())
}

/// # Safety
/// `m` must come from `fg_train_*` or `fg_model_load` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn fg_model_free(m: *mut FgModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Hard-threshold SPD, Theil (summed and per-instance) and W₁.
///
/// # Safety
/// `p` and `a` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_fairness_snapshot(
    p: *const f64,
    a: *const u8,
    n: usize,
    threshold: f64,
    out: *mut FgSnapshot,
) -> FgStatus {
    guard(|| {
        let p = slice(p, n, "p")?;
        let a = slice(a, n, "a")?;
        if out.is_null() {
            return Err(fail(FgStatus::NullPointer, "out is null"));
        }
        let view = lift(GroupView::new(p, a, threshold))?;
        *out = convert_snapshot(&snapshot(&view));
        Ok(())
    })
}

/// # Safety
/// `p` and `y` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_auc(p: *const f64, y: *const u8, n: usize, out: *mut f64) -> FgStatus {
    guard(|| {
        let p = slice(p, n, "p")?;
        let y = slice(y, n, "y")?;
        if out.is_null() {
            return Err(fail(FgStatus::NullPointer, "out is null"));
        }
        *out = lift(auc_roc(p, y))?;
        Ok(())
    })
}

/// Exact 1-Wasserstein distance between two samples.
///
/// # Safety
/// `p0` holds `n0` values, `p1` holds `n1`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_wasserstein(
    p0: *const f64,
    n0: usize,
    p1: *const f64,
    n1: usize,
    out: *mut f64,
) -> FgStatus {
    guard(|| {
        let a = slice(p0, n0, "p0")?;
        let b = slice(p1, n1, "p1")?;
        if out.is_null() {
            return Err(fail(FgStatus::NullPointer, "out is null"));
        }
        *out = lift(wasserstein1d(a, b))?;
        Ok(())
    })
}

/// TreeSHAP values, row-major `rows × features`, plus the base value.
///
/// # Safety
/// Handles must be valid; `phi` must hold `len` doubles; `base` writable.
#[no_mangle]
pub unsafe extern "C" fn fg_shap(
    model: *const FgModel,
    d: *const FgDataset,
    phi: *mut f64,
    len: usize,
    base: *mut f64,
) -> FgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let d = deref(d, "dataset")?;
        let need = d.0.len() * d.0.n_features();
        if len < need {
            return Err(fail(FgStatus::BufferTooSmall, format!("need {need} values, got {len}")));
        }
        if base.is_null() {
            return Err(fail(FgStatus::NullPointer, "base is null"));
        }
        let x = lift(d.0.feature_matrix())?;
        let attr = lift(treeshap_ensemble(&m.0, &x))?;
        let out = slice_mut(phi, len, "phi")?;
        for (i, row) in attr.phi.iter().enumerate() {
            out[i * row.len()..(i + 1) * row.len()].copy_from_slice(row);
        }
        *base = attr.base_value;
        Ok(())
    })
}

/// Audit, search (or fixed `theta`), retrain and compare on raw data `d`.
/// When `out_dir` is non-null, the report, models and CSV artifacts are
/// written there.
///
/// # Safety
/// `d` and `params` must be valid; `out_dir` null or a nul-terminated
/// path; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fg_mitigate(
    d: *const FgDataset,
    params: *const FgMitigateParams,
    out_dir: *const c_char,
    out: *mut FgComparison,
) -> FgStatus {
    guard(|| {
        let d = deref(d, "dataset")?;
        let p = deref(params, "params")?;
        if out.is_null() {
            return Err(fail(FgStatus::NullPointer, "out is null"));
        }
        let mut cfg = PipelineConfig {
            test_fraction: p.test_fraction,
            split_seed: p.split_seed,
            threshold: p.threshold,
            train: TrainConfig::from(&p.train),
            ..PipelineConfig::default()
        };
        cfg.search.budget = p.budget as usize;
        cfg.search.init_points = cfg.search.init_points.min(p.budget as usize);
        cfg.search.folds = p.folds as usize;
        cfg.search.seed = p.search_seed;
        if p.use_theta != 0 {
            let t = p.theta;
            cfg.theta = Some(FairnessConfig::new(t.lambda, t.w1, t.w2, t.w3));
        }
        let run = lift(run_mitigation(&d.0, &cfg))?;
        if !out_dir.is_null() {
            lift(write_mitigation(&run, &path(out_dir, "out_dir")?))?;
        }
        let t = run.theta_star;
        *out = FgComparison {
            pre: convert_snapshot(&run.pre.snapshot),
            post: convert_snapshot(&run.post.snapshot),
            pre_auc: run.pre.eval.auc_roc,
            post_auc: run.post.eval.auc_roc,
            lambda: t.lambda,
            w1: t.weights.w1,
            w2: t.weights.w2,
            w3: t.weights.w3,
        };
        Ok(())
    })
}
