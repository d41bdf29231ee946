//! C ABI over the `causalmix` core.
//!
//! Every entry point returns a [`CmStatus`]. On failure the message is kept
//! in a thread-local slot readable through [`cm_last_error`]. Tables and
//! adjacency matrices cross the boundary as opaque handles that the caller
//! releases with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ndarray::ArrayView2;

use causalmix::bench::{normalize_score, MetricSign};
use causalmix::discovery::{run_discovery_ensemble, EnsembleConfig, ProbAdjacency};
use causalmix::finetune::{log_loss, pearson, roc_auc};
use causalmix::generators::generate_scm;
use causalmix::rng::seeded;
use causalmix::scm::QualityTier;
use causalmix::table::{impute, load_csv, stratified_split, zscore, SchemaHint};
use causalmix::Table;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Table = 4,
    Discovery = 5,
    Generator = 6,
    Metric = 7,
    Undefined = 8,
    Panic = 99,
}

/// Opaque table handle.
pub struct CmTable(Table);

/// Opaque edge-frequency matrix handle.
pub struct CmAdjacency(ProbAdjacency);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

type FfiResult = Result<(), (CmStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult) -> CmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            CmStatus::Panic
        }
    }
}

fn fail<E: std::fmt::Display>(status: CmStatus) -> impl Fn(E) -> (CmStatus, String) {
    move |e| (status, e.to_string())
}

fn null(what: &str) -> (CmStatus, String) {
    (CmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CmStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (CmStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], (CmStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn cm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Load a CSV. `target` may be null, in which case the last column is the target.
///
/// # Safety
/// `path` and a non-null `target` must be NUL-terminated strings; `out_table`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_table_load_csv(
    path: *const c_char,
    target: *const c_char,
    out_table: *mut *mut CmTable,
) -> CmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let target = if target.is_null() { None } else { Some(str_arg(target, "target")?.to_string()) };
        let slot = out(out_table, "out_table")?;
        let hint = SchemaHint { target, ..Default::default() };
        let t = load_csv(Path::new(path), Some(&hint)).map_err(fail(CmStatus::Table))?;
        *slot = boxed(CmTable(t));
        Ok(())
    })
}

/// # Safety
/// `table` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cm_table_free(table: *mut CmTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// # Safety
/// `table` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_table_shape(
    table: *const CmTable,
    out_rows: *mut usize,
    out_cols: *mut usize,
) -> CmStatus {
    guard(|| {
        let t = &handle(table, "table")?.0;
        *out(out_rows, "out_rows")? = t.n_rows();
        *out(out_cols, "out_cols")? = t.n_cols();
        Ok(())
    })
}

/// Copy the row-major values into `buf` (`rows * cols` doubles, NaN = missing).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cm_table_values(table: *const CmTable, buf: *mut f64, len: usize) -> CmStatus {
    guard(|| {
        let t = &handle(table, "table")?.0;
        let need = t.n_rows() * t.n_cols();
        if len < need {
            return Err((CmStatus::InvalidArgument, format!("buffer holds {len}, need {need}")));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let dst = std::slice::from_raw_parts_mut(buf, need);
        for (d, v) in dst.iter_mut().zip(t.data().iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// Mean/mode imputation followed by z-scoring, both fitted on `table`.
///
/// # Safety
/// `table` must be a live handle; `out_table` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_table_preprocess(table: *const CmTable, out_table: *mut *mut CmTable) -> CmStatus {
    guard(|| {
        let t = &handle(table, "table")?.0;
        let slot = out(out_table, "out_table")?;
        let (imp, _) = impute(t, None).map_err(fail(CmStatus::Table))?;
        let (z, _) = zscore(&imp, None).map_err(fail(CmStatus::Table))?;
        *slot = boxed(CmTable(z));
        Ok(())
    })
}

/// Capped stratified train/validation/test split.
///
/// # Safety
/// `table` must be a live handle; the three out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_table_split(
    table: *const CmTable,
    fold_seed: u64,
    out_train: *mut *mut CmTable,
    out_val: *mut *mut CmTable,
    out_test: *mut *mut CmTable,
) -> CmStatus {
    guard(|| {
        let t = &handle(table, "table")?.0;
        let (a, b, c) = (out(out_train, "out_train")?, out(out_val, "out_val")?, out(out_test, "out_test")?);
        let s = stratified_split(t, fold_seed).map_err(fail(CmStatus::Table))?;
        *a = boxed(CmTable(s.train));
        *b = boxed(CmTable(s.val));
        *c = boxed(CmTable(s.test));
        Ok(())
    })
}

/// # Safety
/// `table` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cm_table_write_csv(table: *const CmTable, path: *const c_char) -> CmStatus {
    guard(|| {
        let t = &handle(table, "table")?.0;
        let path = str_arg(path, "path")?;
        t.write_csv(path).map_err(fail(CmStatus::Io))
    })
}

/// Run `n_runs` randomized PC runs with default settings otherwise.
///
/// # Safety
/// `table` must be a live handle; `out_adjacency` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_discover(
    table: *const CmTable,
    n_runs: usize,
    seed: u64,
    out_adjacency: *mut *mut CmAdjacency,
) -> CmStatus {
    guard(|| {
        let t = &handle(table, "table")?.0;
        let slot = out(out_adjacency, "out_adjacency")?;
        let cfg = EnsembleConfig { n_runs, ..Default::default() };
        cfg.validate().map_err(fail(CmStatus::InvalidArgument))?;
        let (c, _) = run_discovery_ensemble(t, &cfg, seed).map_err(fail(CmStatus::Discovery))?;
        *slot = boxed(CmAdjacency(c));
        Ok(())
    })
}

/// Build a matrix from `n * n` row-major frequencies in [0, 1].
///
/// # Safety
/// `values` must hold `n * n` doubles; `out_adjacency` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_adjacency_from_values(
    values: *const f64,
    n: usize,
    out_adjacency: *mut *mut CmAdjacency,
) -> CmStatus {
    guard(|| {
        let v = slice(values, n * n, "values")?;
        let slot = out(out_adjacency, "out_adjacency")?;
        let m = ndarray::Array2::from_shape_vec((n, n), v.to_vec()).map_err(fail(CmStatus::InvalidArgument))?;
        let c = ProbAdjacency::from_matrix(m).map_err(fail(CmStatus::InvalidArgument))?;
        *slot = boxed(CmAdjacency(c));
        Ok(())
    })
}

/// # Safety
/// `adjacency` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_adjacency_free(adjacency: *mut CmAdjacency) {
    if !adjacency.is_null() {
        drop(Box::from_raw(adjacency));
    }
}

/// # Safety
/// `adjacency` must be a live handle; `out_n` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_adjacency_nodes(adjacency: *const CmAdjacency, out_n: *mut usize) -> CmStatus {
    guard(|| {
        *out(out_n, "out_n")? = handle(adjacency, "adjacency")?.0.n_nodes();
        Ok(())
    })
}

/// Frequency of the directed edge `i -> j`.
///
/// # Safety
/// `adjacency` must be a live handle; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_adjacency_get(
    adjacency: *const CmAdjacency,
    i: usize,
    j: usize,
    out_value: *mut f64,
) -> CmStatus {
    guard(|| {
        let c = &handle(adjacency, "adjacency")?.0;
        let n = c.n_nodes();
        if i >= n || j >= n {
            return Err((CmStatus::InvalidArgument, format!("index ({i}, {j}) outside {n} nodes")));
        }
        *out(out_value, "out_value")? = c.get(i, j);
        Ok(())
    })
}

/// Sample a DAG from `adjacency`, fit an SCM on `table` and draw `n` rows.
/// `tier` is 0 for GOOD and 1 for BETTER.
///
/// # Safety
/// Handles must be live; `out_table` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_generate_scm(
    table: *const CmTable,
    adjacency: *const CmAdjacency,
    tier: u32,
    n: usize,
    seed: u64,
    out_table: *mut *mut CmTable,
) -> CmStatus {
    guard(|| {
        let t = &handle(table, "table")?.0;
        let c = &handle(adjacency, "adjacency")?.0;
        let slot = out(out_table, "out_table")?;
        let tier = match tier {
            0 => QualityTier::Good,
            1 => QualityTier::Better,
            other => return Err((CmStatus::InvalidArgument, format!("unknown tier {other}"))),
        };
        let mut rng = seeded(seed);
        let s = generate_scm(t, c, tier, n, &mut rng).map_err(fail(CmStatus::Generator))?;
        *slot = boxed(CmTable(s));
        Ok(())
    })
}

/// ROC-AUC from an `n x k` row-major probability matrix.
///
/// # Safety
/// `probs` must hold `n * k` doubles and `labels` `n` values.
#[no_mangle]
pub unsafe extern "C" fn cm_roc_auc(
    probs: *const f64,
    labels: *const usize,
    n: usize,
    k: usize,
    out_value: *mut f64,
) -> CmStatus {
    guard(|| {
        let p = slice(probs, n * k, "probs")?;
        let y = slice(labels, n, "labels")?;
        let view = ArrayView2::from_shape((n, k), p).map_err(fail(CmStatus::InvalidArgument))?;
        *out(out_value, "out_value")? = roc_auc(view, y).map_err(fail(CmStatus::Metric))?;
        Ok(())
    })
}

/// Mean multiclass log-loss from an `n x k` row-major probability matrix.
///
/// # Safety
/// `probs` must hold `n * k` doubles and `labels` `n` values.
#[no_mangle]
pub unsafe extern "C" fn cm_log_loss(
    probs: *const f64,
    labels: *const usize,
    n: usize,
    k: usize,
    out_value: *mut f64,
) -> CmStatus {
    guard(|| {
        let p = slice(probs, n * k, "probs")?;
        let y = slice(labels, n, "labels")?;
        let view = ArrayView2::from_shape((n, k), p).map_err(fail(CmStatus::InvalidArgument))?;
        *out(out_value, "out_value")? = log_loss(view, y).map_err(fail(CmStatus::Metric))?;
        Ok(())
    })
}

/// # Safety
/// `xs` and `ys` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn cm_pearson(xs: *const f64, ys: *const f64, n: usize, out_value: *mut f64) -> CmStatus {
    guard(|| {
        let (x, y) = (slice(xs, n, "xs")?, slice(ys, n, "ys")?);
        *out(out_value, "out_value")? = pearson(x, y).map_err(fail(CmStatus::Metric))?;
        Ok(())
    })
}

/// Baseline-relative score. Returns `Undefined` when the baseline is zero.
///
/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_normalize_score(
    method: f64,
    baseline: f64,
    higher_is_better: bool,
    out_value: *mut f64,
) -> CmStatus {
    guard(|| {
        let slot = out(out_value, "out_value")?;
        let sign = if higher_is_better { MetricSign::HigherBetter } else { MetricSign::LowerBetter };
        *slot = normalize_score(method, baseline, sign)
            .ok_or((CmStatus::Undefined, "normalized score undefined".to_string()))?;
        Ok(())
    })
}
