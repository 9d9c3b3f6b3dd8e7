//! C ABI for the sopool library.
//!
//! Matrices and datasets are opaque handles; every fallible call returns a
//! [`SopStatus`] and leaves a human-readable message in thread-local storage
//! retrievable via [`sop_last_error_message`]. Output handles are written
//! through out-pointers and owned by the caller, who must free them with the
//! matching `*_free` function.
//!
//! The generated header lives at `include/sopool.h`.
//!
//! Pointer contracts (ownership, buffer lengths, nullability) are stated on
//! each function for the C caller's benefit rather than in `# Safety`
//! sections.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sopool::data::{load_dataset, Dataset};
use sopool::error::Error;
use sopool::layers::GnnVariant;
use sopool::matrix::DenseMatrix;
use sopool::pooling::{self, FirstOrder, PoolKind};
use sopool::trainer::{train_cv, EpochSelect, ExperimentConfig};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SopStatus {
    SopOk = 0,
    SopNullPointer = 1,
    SopInvalidArgument = 2,
    SopShapeError = 3,
    SopDataError = 4,
    SopDivergence = 5,
    SopIoError = 6,
    SopPanic = 7,
}

/// First-order pooling modes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SopFirstOrder {
    SopFirstOrderSum = 0,
    SopFirstOrderAvg = 1,
    SopFirstOrderMax = 2,
}

/// Pooling families with a defined classifier parameter count.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SopCountKind {
    SopCountFlatten = 0,
    SopCountBimap = 1,
    SopCountAttn = 2,
}

/// GNN variants for training.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SopGnn {
    SopGnnGin0 = 0,
    SopGnnGinEps = 1,
    SopGnnSumOneLayer = 2,
    SopGnnMeanMlp = 3,
    SopGnnMeanOneLayer = 4,
    SopGnnMaxMlp = 5,
    SopGnnMaxOneLayer = 6,
}

/// Pooling selection for training.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SopPool {
    SopPoolSum = 0,
    SopPoolAvg = 1,
    SopPoolMax = 2,
    SopPoolSopool = 3,
    SopPoolBimap = 4,
    SopPoolAttn = 5,
    SopPoolMattn = 6,
    SopPoolCov = 7,
    SopPoolAttnPool = 8,
}

/// Training configuration. Zero-valued optional fields mean "unset":
/// `fprime` (required for the bimap poolings), `blocks` (0 = flat model),
/// `k` (0 = derive from the dataset's average size).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SopTrainConfig {
    pub gnn: SopGnn,
    pub pool: SopPool,
    pub hidden: usize,
    pub batch_size: usize,
    pub fprime: usize,
    pub blocks: usize,
    pub k: usize,
    pub epochs: usize,
    pub seed: u64,
    /// 0 = mean epoch selection, nonzero = per-fold.
    pub epoch_select_per_fold: i32,
}

pub struct SopMatrix(DenseMatrix);
pub struct SopDataset(Dataset);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").expect("empty"));
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("nul stripped");
    });
}

fn status_for(err: &Error) -> SopStatus {
    match err {
        Error::Config(_)
        | Error::Label { .. }
        | Error::Budget(_)
        | Error::Contract(_)
        | Error::DegenerateBatch(_)
        | Error::EmptyInput(_) => SopStatus::SopInvalidArgument,
        Error::Shape { .. } => SopStatus::SopShapeError,
        Error::Parse { .. }
        | Error::Integrity(_)
        | Error::Stratification { .. }
        | Error::Schema { .. } => SopStatus::SopDataError,
        Error::Divergence(_) => SopStatus::SopDivergence,
        Error::Io { .. } => SopStatus::SopIoError,
    }
}

fn guard(body: impl FnOnce() -> SopStatus) -> SopStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            SopStatus::SopPanic
        }
    }
}

unsafe fn matrix_ref<'a>(ptr: *const SopMatrix) -> Option<&'a DenseMatrix> {
    ptr.as_ref().map(|m| &m.0)
}

fn emit(out: *mut *mut SopMatrix, value: DenseMatrix) -> SopStatus {
    unsafe {
        *out = Box::into_raw(Box::new(SopMatrix(value)));
    }
    SopStatus::SopOk
}

macro_rules! require {
    ($ptr:expr, $name:literal) => {
        match matrix_ref($ptr) {
            Some(m) => m,
            None => {
                set_error(concat!($name, ": null argument"));
                return SopStatus::SopNullPointer;
            }
        }
    };
}

/// Library version string; static storage, do not free.
#[no_mangle]
pub extern "C" fn sop_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent error on this thread; valid until the next
/// failing call. Do not free.
#[no_mangle]
pub extern "C" fn sop_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Creates a rows×cols matrix from row-major data. Returns null on bad input.
#[no_mangle]
pub unsafe extern "C" fn sop_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
) -> *mut SopMatrix {
    if data.is_null() && rows * cols != 0 {
        set_error("sop_matrix_new: null data pointer");
        return ptr::null_mut();
    }
    let values = if rows * cols == 0 {
        Vec::new()
    } else {
        std::slice::from_raw_parts(data, rows * cols).to_vec()
    };
    match DenseMatrix::from_vec(rows, cols, values) {
        Ok(m) => Box::into_raw(Box::new(SopMatrix(m))),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn sop_matrix_free(matrix: *mut SopMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

#[no_mangle]
pub unsafe extern "C" fn sop_matrix_rows(matrix: *const SopMatrix) -> usize {
    matrix_ref(matrix).map_or(0, |m| m.rows())
}

#[no_mangle]
pub unsafe extern "C" fn sop_matrix_cols(matrix: *const SopMatrix) -> usize {
    matrix_ref(matrix).map_or(0, |m| m.cols())
}

/// Copies the row-major contents into `out`, which must hold exactly
/// rows·cols doubles.
#[no_mangle]
pub unsafe extern "C" fn sop_matrix_copy_data(
    matrix: *const SopMatrix,
    out: *mut f64,
    len: usize,
) -> SopStatus {
    guard(|| {
        let Some(m) = matrix_ref(matrix) else {
            set_error("sop_matrix_copy_data: null matrix");
            return SopStatus::SopNullPointer;
        };
        if out.is_null() {
            set_error("sop_matrix_copy_data: null output buffer");
            return SopStatus::SopNullPointer;
        }
        if len != m.data().len() {
            set_error("sop_matrix_copy_data: buffer length mismatch");
            return SopStatus::SopShapeError;
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(m.data());
        SopStatus::SopOk
    })
}

/// Columnwise sum/avg/max pooling; writes an f×1 matrix.
#[no_mangle]
pub unsafe extern "C" fn sop_pool_first_order(
    h: *const SopMatrix,
    mode: SopFirstOrder,
    out: *mut *mut SopMatrix,
) -> SopStatus {
    guard(|| {
        let h = require!(h, "sop_pool_first_order");
        let mode = match mode {
            SopFirstOrder::SopFirstOrderSum => FirstOrder::Sum,
            SopFirstOrder::SopFirstOrderAvg => FirstOrder::Avg,
            SopFirstOrder::SopFirstOrderMax => FirstOrder::Max,
        };
        emit(out, pooling::pool_first_order(h, mode))
    })
}

/// Second-order pooling HᵀH; writes an f×f matrix.
#[no_mangle]
pub unsafe extern "C" fn sop_sopool(h: *const SopMatrix, out: *mut *mut SopMatrix) -> SopStatus {
    guard(|| {
        let h = require!(h, "sop_sopool");
        emit(out, pooling::sopool(h))
    })
}

/// Bilinear-mapping pooling; writes the flattened f′²×1 vector.
#[no_mangle]
pub unsafe extern "C" fn sop_sopool_bimap(
    h: *const SopMatrix,
    mapping: *const SopMatrix,
    out: *mut *mut SopMatrix,
) -> SopStatus {
    guard(|| {
        let h = require!(h, "sop_sopool_bimap");
        let w = require!(mapping, "sop_sopool_bimap");
        match pooling::sopool_bimap(h, w) {
            Ok(v) => emit(out, v),
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Attentional pooling HᵀHμ; writes an f×1 vector.
#[no_mangle]
pub unsafe extern "C" fn sop_sopool_attn(
    h: *const SopMatrix,
    attention: *const SopMatrix,
    out: *mut *mut SopMatrix,
) -> SopStatus {
    guard(|| {
        let h = require!(h, "sop_sopool_attn");
        let mu = require!(attention, "sop_sopool_attn");
        match pooling::sopool_attn(h, mu) {
            Ok(v) => emit(out, v),
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Multi-head pooling UHᵀH; writes a k×f matrix.
#[no_mangle]
pub unsafe extern "C" fn sop_sopool_mattn(
    h: *const SopMatrix,
    heads: *const SopMatrix,
    out: *mut *mut SopMatrix,
) -> SopStatus {
    guard(|| {
        let h = require!(h, "sop_sopool_mattn");
        let u = require!(heads, "sop_sopool_mattn");
        match pooling::sopool_mattn(h, u) {
            Ok(v) => emit(out, v),
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Covariance pooling (mean-centered HᵀH); writes an f×f matrix.
#[no_mangle]
pub unsafe extern "C" fn sop_covpool(h: *const SopMatrix, out: *mut *mut SopMatrix) -> SopStatus {
    guard(|| {
        let h = require!(h, "sop_covpool");
        emit(out, pooling::covpool(h))
    })
}

/// Softmax-attention pooling HᵀSoftmax(Hμ); writes an f×1 vector.
#[no_mangle]
pub unsafe extern "C" fn sop_attnpool(
    h: *const SopMatrix,
    attention: *const SopMatrix,
    out: *mut *mut SopMatrix,
) -> SopStatus {
    guard(|| {
        let h = require!(h, "sop_attnpool");
        let mu = require!(attention, "sop_attnpool");
        match pooling::attnpool(h, mu) {
            Ok(v) => emit(out, v),
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Hierarchical pooling step: writes A′ = CACᵀ (k×k), H′ = UHᵀH (k×f), and
/// C = UHᵀ (k×n).
#[no_mangle]
pub unsafe extern "C" fn sop_update_adjacency(
    adjacency: *const SopMatrix,
    h: *const SopMatrix,
    heads: *const SopMatrix,
    adjacency_out: *mut *mut SopMatrix,
    reps_out: *mut *mut SopMatrix,
    contribution_out: *mut *mut SopMatrix,
) -> SopStatus {
    guard(|| {
        let a = require!(adjacency, "sop_update_adjacency");
        let h = require!(h, "sop_update_adjacency");
        let u = require!(heads, "sop_update_adjacency");
        match pooling::update_adjacency(a, h, u) {
            Ok(pooled) => {
                emit(adjacency_out, pooled.adjacency);
                emit(reps_out, pooled.node_reps);
                emit(contribution_out, pooled.contribution)
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Bias-free parameter count of pooling + 1-layer classifier. `fprime` is
/// only read for the bimap kind.
#[no_mangle]
pub unsafe extern "C" fn sop_count_classifier_params(
    kind: SopCountKind,
    f: u64,
    fprime: u64,
    classes: u64,
    out: *mut u64,
) -> SopStatus {
    guard(|| {
        if out.is_null() {
            set_error("sop_count_classifier_params: null output");
            return SopStatus::SopNullPointer;
        }
        let (pool, fp) = match kind {
            SopCountKind::SopCountFlatten => (PoolKind::Sopool, None),
            SopCountKind::SopCountBimap => (PoolKind::SopoolBimap, Some(fprime)),
            SopCountKind::SopCountAttn => (PoolKind::SopoolAttn, None),
        };
        match pooling::count_classifier_params(pool, f, fp, classes) {
            Some(count) => {
                *out = count;
                SopStatus::SopOk
            }
            None => {
                set_error("sop_count_classifier_params: count undefined for this kind");
                SopStatus::SopInvalidArgument
            }
        }
    })
}

/// Parses a TUDataset directory (`dir/name` holding `name_*.txt`) with the
/// default feature construction.
#[no_mangle]
pub unsafe extern "C" fn sop_dataset_parse(
    dir: *const c_char,
    name: *const c_char,
    out: *mut *mut SopDataset,
) -> SopStatus {
    guard(|| {
        if dir.is_null() || name.is_null() || out.is_null() {
            set_error("sop_dataset_parse: null argument");
            return SopStatus::SopNullPointer;
        }
        let (Ok(dir), Ok(name)) = (CStr::from_ptr(dir).to_str(), CStr::from_ptr(name).to_str())
        else {
            set_error("sop_dataset_parse: arguments must be UTF-8");
            return SopStatus::SopInvalidArgument;
        };
        match load_dataset(&Path::new(dir).join(name), name, None) {
            Ok(dataset) => {
                *out = Box::into_raw(Box::new(SopDataset(dataset)));
                SopStatus::SopOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn sop_dataset_free(dataset: *mut SopDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub unsafe extern "C" fn sop_dataset_graph_count(dataset: *const SopDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn sop_dataset_num_classes(dataset: *const SopDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.num_classes)
}

#[no_mangle]
pub unsafe extern "C" fn sop_dataset_feature_dim(dataset: *const SopDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.feature_dim)
}

/// Runs stratified 10-fold cross-validation training and writes the selected
/// mean±std validation accuracy.
#[no_mangle]
pub unsafe extern "C" fn sop_train_cv(
    dataset: *const SopDataset,
    config: *const SopTrainConfig,
    mean_out: *mut f64,
    std_out: *mut f64,
) -> SopStatus {
    guard(|| {
        let Some(dataset) = dataset.as_ref() else {
            set_error("sop_train_cv: null dataset");
            return SopStatus::SopNullPointer;
        };
        let Some(config) = config.as_ref() else {
            set_error("sop_train_cv: null config");
            return SopStatus::SopNullPointer;
        };
        if mean_out.is_null() || std_out.is_null() {
            set_error("sop_train_cv: null output");
            return SopStatus::SopNullPointer;
        }
        let gnn = match config.gnn {
            SopGnn::SopGnnGin0 => GnnVariant::SumMlpGin0,
            SopGnn::SopGnnGinEps => GnnVariant::SumMlpGinEps,
            SopGnn::SopGnnSumOneLayer => GnnVariant::SumOneLayer,
            SopGnn::SopGnnMeanMlp => GnnVariant::MeanMlp,
            SopGnn::SopGnnMeanOneLayer => GnnVariant::MeanOneLayer,
            SopGnn::SopGnnMaxMlp => GnnVariant::MaxMlp,
            SopGnn::SopGnnMaxOneLayer => GnnVariant::MaxOneLayer,
        };
        let pool = match config.pool {
            SopPool::SopPoolSum => PoolKind::Sum,
            SopPool::SopPoolAvg => PoolKind::Avg,
            SopPool::SopPoolMax => PoolKind::Max,
            SopPool::SopPoolSopool => PoolKind::Sopool,
            SopPool::SopPoolBimap => PoolKind::SopoolBimap,
            SopPool::SopPoolAttn => PoolKind::SopoolAttn,
            SopPool::SopPoolMattn => PoolKind::SopoolMattn,
            SopPool::SopPoolCov => PoolKind::CovPool,
            SopPool::SopPoolAttnPool => PoolKind::AttnPool,
        };
        let mut experiment = ExperimentConfig::new(dataset.0.name.clone(), gnn, pool);
        experiment.hidden = config.hidden;
        experiment.batch_size = config.batch_size;
        experiment.reduced_dim = (config.fprime > 0).then_some(config.fprime);
        experiment.blocks = (config.blocks > 0).then_some(config.blocks);
        experiment.head_count = (config.k > 0).then_some(config.k);
        experiment.epochs = config.epochs;
        experiment.seed = config.seed;
        experiment.epoch_select = if config.epoch_select_per_fold != 0 {
            EpochSelect::PerFold
        } else {
            EpochSelect::Mean
        };
        experiment.allow_off_grid = true;
        if let Err(e) = experiment.validate() {
            set_error(&e.to_string());
            return status_for(&e);
        }
        match train_cv(&experiment, &dataset.0) {
            Ok((result, _)) => {
                *mean_out = result.mean_accuracy;
                *std_out = result.std_accuracy;
                SopStatus::SopOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}
