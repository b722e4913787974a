//! C ABI over `tsad`.
//!
//! Every fallible call returns a [`TsadStatus`]; on failure the message is
//! kept per thread and read with [`tsad_last_error`]. Matrices are dense
//! row-major `f64` buffers of `n` rows by `m` columns, labels are `u8`
//! buffers of 0/1. Models are opaque [`TsadModel`] handles released with
//! [`tsad_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ndarray::Array2;
use tsad::diagnosis::{rank_channels, SpanStatistic};
use tsad::ingest::WindowSpec;
use tsad::metrics::{auprc, auroc, confusion, f1_point, f1_point_adjusted, fc1};
use tsad::models::{self, ModelConfig, ModelKind, TrainedModel};
use tsad::rankstats::{average_ranks, friedman, RankTable};
use tsad::scoring::{fit_gauss, score_gauss_d, score_gauss_d_k, score_gauss_s, DynamicWindow, KernelSpec};
use tsad::thresholding::{tail_p_threshold, threshold_best_f, threshold_top_k, FScore, ThresholdResult};
use tsad::types::{ChannelScores, ErrorMatrix, Event, LabelVector, ScoreSeries, ScoredChannels, SeriesMatrix};
use tsad::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsadStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    InsufficientData = 4,
    Io = 5,
    Parse = 6,
    Training = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsadModelKind {
    Raw = 0,
    Pca = 1,
    Uae = 2,
    FcAe = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsadFScore {
    F1 = 0,
    Fpa1 = 1,
    Fc1 = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsadSpanStatistic {
    Mean = 0,
    Max = 1,
}

/// Training options for [`tsad_model_fit`]. Zero in `latent_dim`,
/// `batch_size` or `learning_rate` selects the per-model default.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsadFitOptions {
    pub kind: TsadModelKind,
    pub window_length: usize,
    pub window_stride: usize,
    pub latent_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub pca_variance_fraction: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TsadMetrics {
    pub f1: f64,
    pub fpa1: f64,
    pub fc1: f64,
    pub prec_t: f64,
    pub rec_e: f64,
}

/// Opaque trained reconstruction model.
pub struct TsadModel {
    inner: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TsadStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) | Error::OutOfRange { .. } | Error::Config(_) => TsadStatus::InvalidArgument,
            Error::Shape(_) => TsadStatus::Shape,
            Error::InsufficientData { .. } => TsadStatus::InsufficientData,
            Error::Io { .. } => TsadStatus::Io,
            Error::Parse { .. } | Error::MissingColumn { .. } | Error::Csv { .. } | Error::Json(_) => TsadStatus::Parse,
            Error::Training { .. } => TsadStatus::Training,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult = Result<(), Failure>;

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> FfiResult) -> TsadStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            TsadStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TsadStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TsadStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(TsadStatus::InvalidArgument, message.into())
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

fn cells(n: usize, m: usize) -> Result<usize, Failure> {
    n.checked_mul(m).ok_or_else(|| invalid("matrix size overflows"))
}

unsafe fn matrix(ptr: *const f64, n: usize, m: usize, what: &str) -> Result<Array2<f64>, Failure> {
    let data = slice(ptr, cells(n, m)?, what)?;
    Array2::from_shape_vec((n, m), data.to_vec()).map_err(|e| Failure(TsadStatus::Shape, e.to_string()))
}

unsafe fn labels(ptr: *const u8, n: usize, what: &str) -> Result<LabelVector, Failure> {
    Ok(LabelVector::from_u8(slice(ptr, n, what)?)?)
}

unsafe fn scores(ptr: *const f64, n: usize) -> Result<ScoreSeries, Failure> {
    Ok(ScoreSeries(slice(ptr, n, "scores")?.to_vec()))
}

unsafe fn c_path<'a>(ptr: *const c_char) -> Result<&'a Path, Failure> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(ptr).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(Path::new(s))
}

unsafe fn write_threshold(
    r: ThresholdResult,
    out_threshold: *mut f64,
    out_labels: *mut u8,
    n: usize,
) -> FfiResult {
    if out_threshold.is_null() {
        return Err(null("out_threshold"));
    }
    *out_threshold = r.threshold;
    if !out_labels.is_null() {
        slice_mut(out_labels, n, "out_labels")?.copy_from_slice(&r.predictions.to_u8());
    }
    Ok(())
}

fn score_out(series: &ScoreSeries, out: &mut [f64]) {
    out.copy_from_slice(series.as_slice());
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. Valid until the next `tsad_*` call on the same thread.
#[no_mangle]
pub extern "C" fn tsad_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// NUL-terminated library version; static storage.
#[no_mangle]
pub extern "C" fn tsad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Defaults for `kind`: window 100 with stride 1, 100 epochs, patience 10.
#[no_mangle]
pub extern "C" fn tsad_fit_options_default(kind: TsadModelKind) -> TsadFitOptions {
    TsadFitOptions {
        kind,
        window_length: 100,
        window_stride: 1,
        latent_dim: 0,
        batch_size: 0,
        learning_rate: 0.0,
        max_epochs: 100,
        patience: 10,
        pca_variance_fraction: 0.9,
        seed: 0,
    }
}

fn model_config(o: &TsadFitOptions) -> ModelConfig {
    let kind = match o.kind {
        TsadModelKind::Raw => ModelKind::Raw,
        TsadModelKind::Pca => ModelKind::Pca,
        TsadModelKind::Uae => ModelKind::Uae,
        TsadModelKind::FcAe => ModelKind::FcAe,
    };
    let mut cfg = ModelConfig::new(kind).with_seed(o.seed);
    cfg.latent_dim = (o.latent_dim > 0).then_some(o.latent_dim);
    cfg.batch_size = (o.batch_size > 0).then_some(o.batch_size);
    cfg.learning_rate = (o.learning_rate > 0.0).then_some(o.learning_rate);
    cfg.max_epochs = o.max_epochs;
    cfg.patience = o.patience;
    cfg.pca_variance_fraction = o.pca_variance_fraction;
    cfg
}

/// Fits a model on an already normalized `n x m` training matrix.
///
/// # Safety
/// `train` must point to `n * m` readable values, `options` to a valid
/// struct and `out_model` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tsad_model_fit(
    train: *const f64,
    n: usize,
    m: usize,
    options: *const TsadFitOptions,
    out_model: *mut *mut TsadModel,
) -> TsadStatus {
    guard(|| {
        if options.is_null() {
            return Err(null("options"));
        }
        if out_model.is_null() {
            return Err(null("out_model"));
        }
        let o = &*options;
        let series = SeriesMatrix::from_values(matrix(train, n, m, "train")?)?;
        let window = WindowSpec::new(o.window_length, o.window_stride)?;
        let inner = models::fit(&series, &model_config(o), window)?;
        *out_model = Box::into_raw(Box::new(TsadModel { inner }));
        Ok(())
    })
}

/// Releases a model handle. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tsad_model_free(model: *mut TsadModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Channel count and window length of a fitted model; either output may be NULL.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tsad_model_shape(
    model: *const TsadModel,
    out_channels: *mut usize,
    out_window_length: *mut usize,
) -> TsadStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if !out_channels.is_null() {
            *out_channels = model.inner.m;
        }
        if !out_window_length.is_null() {
            *out_window_length = models::Reconstructor::window_len(&model.inner);
        }
        Ok(())
    })
}

/// Signed reconstruction errors for each of the `n` rows of `x`, written to
/// `out_errors` (`n * m`). Windowed models need `tail_n >= window_length - 1`
/// rows of preceding context in `tail`; other models accept `tail == NULL`.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn tsad_model_residuals(
    model: *const TsadModel,
    x: *const f64,
    n: usize,
    tail: *const f64,
    tail_n: usize,
    out_errors: *mut f64,
) -> TsadStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let m = model.inner.m;
        let series = SeriesMatrix::from_values(matrix(x, n, m, "x")?)?;
        let context = if tail.is_null() {
            None
        } else {
            Some(SeriesMatrix::from_values(matrix(tail, tail_n, m, "tail")?)?)
        };
        let err = models::residuals(&model.inner, &series, context.as_ref())?;
        slice_mut(out_errors, cells(n, m)?, "out_errors")?.copy_from_slice(err.0.as_slice().expect("standard layout"));
        Ok(())
    })
}

/// Writes the model as JSON to `path`.
///
/// # Safety
/// `model` must be live and `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn tsad_model_save(model: *const TsadModel, path: *const c_char) -> TsadStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        model.inner.save(c_path(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn tsad_model_load(path: *const c_char, out_model: *mut *mut TsadModel) -> TsadStatus {
    guard(|| {
        if out_model.is_null() {
            return Err(null("out_model"));
        }
        let inner = TrainedModel::load(c_path(path)?)?;
        *out_model = Box::into_raw(Box::new(TsadModel { inner }));
        Ok(())
    })
}

/// Gauss-S: fits per-channel mean and deviation on `train_errors`, then
/// writes summed negative-log survival scores of `test_errors` to
/// `out_scores` (`n_test`). `out_channel_scores` (`n_test * m`) may be NULL.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn tsad_score_gauss_s(
    train_errors: *const f64,
    n_train: usize,
    test_errors: *const f64,
    n_test: usize,
    m: usize,
    out_scores: *mut f64,
    out_channel_scores: *mut f64,
) -> TsadStatus {
    guard(|| {
        let train = ErrorMatrix(matrix(train_errors, n_train, m, "train_errors")?);
        let test = ErrorMatrix(matrix(test_errors, n_test, m, "test_errors")?);
        let (ch, total) = score_gauss_s(&test, &fit_gauss(&train)?, &ScoredChannels::all(m))?;
        write_scores(&ch, &total, n_test, m, out_scores, out_channel_scores)
    })
}

unsafe fn write_scores(
    ch: &ChannelScores,
    total: &ScoreSeries,
    n: usize,
    m: usize,
    out_scores: *mut f64,
    out_channel_scores: *mut f64,
) -> FfiResult {
    score_out(total, slice_mut(out_scores, n, "out_scores")?);
    if !out_channel_scores.is_null() {
        slice_mut(out_channel_scores, cells(n, m)?, "out_channel_scores")?
            .copy_from_slice(ch.0.as_slice().expect("standard layout"));
    }
    Ok(())
}

/// Gauss-D over a rolling window of `window` errors ending at each test
/// point; `tail_errors` (`n_tail` rows, may be 0) precede the test set.
/// With `kernel_sigma > 0` the per-channel scores are also smoothed
/// (Gauss-D-K).
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn tsad_score_gauss_d(
    test_errors: *const f64,
    n_test: usize,
    tail_errors: *const f64,
    n_tail: usize,
    m: usize,
    window: usize,
    kernel_sigma: f64,
    out_scores: *mut f64,
    out_channel_scores: *mut f64,
) -> TsadStatus {
    guard(|| {
        let test = ErrorMatrix(matrix(test_errors, n_test, m, "test_errors")?);
        let tail = ErrorMatrix(matrix(tail_errors, n_tail, m, "tail_errors")?);
        let scored = ScoredChannels::all(m);
        let (mut ch, mut total) = score_gauss_d(&test, &tail, DynamicWindow::new(window)?, &scored)?;
        if kernel_sigma > 0.0 {
            (ch, total) = score_gauss_d_k(&ch, KernelSpec::new(kernel_sigma)?, &scored)?;
        }
        write_scores(&ch, &total, n_test, m, out_scores, out_channel_scores)
    })
}

/// Threshold giving exactly `k` positives; ties broken toward earlier points.
/// `out_labels` (`n`) may be NULL.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn tsad_threshold_top_k(
    scores: *const f64,
    n: usize,
    k: usize,
    out_threshold: *mut f64,
    out_labels: *mut u8,
) -> TsadStatus {
    guard(|| {
        let r = threshold_top_k(&self::scores(scores, n)?, k)?;
        write_threshold(r, out_threshold, out_labels, n)
    })
}

/// Threshold maximizing `metric` against `truth`. `out_value` may be NULL.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn tsad_threshold_best_f(
    scores: *const f64,
    truth: *const u8,
    n: usize,
    metric: TsadFScore,
    out_threshold: *mut f64,
    out_value: *mut f64,
    out_labels: *mut u8,
) -> TsadStatus {
    guard(|| {
        let metric = match metric {
            TsadFScore::F1 => FScore::F1,
            TsadFScore::Fpa1 => FScore::Fpa1,
            TsadFScore::Fc1 => FScore::Fc1,
        };
        let r = threshold_best_f(&self::scores(scores, n)?, &labels(truth, n, "truth")?, metric)?;
        if !out_value.is_null() {
            *out_value = r.metric_value.unwrap_or(0.0);
        }
        write_threshold(r, out_threshold, out_labels, n)
    })
}

/// `m_scored * neg_log_eps`.
///
/// # Safety
/// `out_threshold` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsad_threshold_tail_p(m_scored: usize, neg_log_eps: u32, out_threshold: *mut f64) -> TsadStatus {
    guard(|| {
        let th = tail_p_threshold(m_scored, neg_log_eps)?;
        *out_threshold.as_mut().ok_or_else(|| null("out_threshold"))? = th;
        Ok(())
    })
}

/// F1, Fpa1, Fc1 and its two components.
///
/// # Safety
/// `pred` and `truth` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tsad_metrics(pred: *const u8, truth: *const u8, n: usize, out: *mut TsadMetrics) -> TsadStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (p, y) = (labels(pred, n, "pred")?, labels(truth, n, "truth")?);
        let c = fc1(&p, &y)?;
        *out = TsadMetrics {
            f1: f1_point(&confusion(&p, &y)?),
            fpa1: f1_point_adjusted(&p, &y)?,
            fc1: c.fc1,
            prec_t: c.prec_t,
            rec_e: c.rec_e,
        };
        Ok(())
    })
}

/// Areas under the ROC and precision-recall curves; either output may be NULL.
///
/// # Safety
/// `scores` and `truth` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn tsad_ranking_metrics(
    scores: *const f64,
    truth: *const u8,
    n: usize,
    out_auroc: *mut f64,
    out_auprc: *mut f64,
) -> TsadStatus {
    guard(|| {
        let (s, y) = (self::scores(scores, n)?, labels(truth, n, "truth")?);
        if !out_auroc.is_null() {
            *out_auroc = auroc(&s, &y)?;
        }
        if !out_auprc.is_null() {
            *out_auprc = auprc(&s, &y)?;
        }
        Ok(())
    })
}

/// Friedman test over `values`, `k` methods by `n_groups` groups, row-major
/// by method. `out_average_ranks` (`k`, rank 1 = highest value) may be NULL.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn tsad_friedman(
    values: *const f64,
    k: usize,
    n_groups: usize,
    out_statistic: *mut f64,
    out_p_value: *mut f64,
    out_average_ranks: *mut f64,
) -> TsadStatus {
    guard(|| {
        let data = slice(values, cells(k, n_groups)?, "values")?;
        let rows = data.chunks(n_groups.max(1)).map(<[f64]>::to_vec).collect();
        let table = RankTable::new(
            (0..k).map(|i| format!("m{i}")).collect(),
            (0..n_groups).map(|j| format!("g{j}")).collect(),
            rows,
        )?;
        let f = friedman(&table)?;
        *out_statistic.as_mut().ok_or_else(|| null("out_statistic"))? = f.statistic;
        if !out_p_value.is_null() {
            *out_p_value = f.p_value;
        }
        if !out_average_ranks.is_null() {
            slice_mut(out_average_ranks, k, "out_average_ranks")?.copy_from_slice(&average_ranks(&table, true));
        }
        Ok(())
    })
}

/// Orders all `m` channels by their span statistic over test rows
/// `start..=end`, most anomalous first, into `out_order` (`m`).
///
/// # Safety
/// `channel_scores` must hold `n * m` values and `out_order` `m`.
#[no_mangle]
pub unsafe extern "C" fn tsad_rank_channels(
    channel_scores: *const f64,
    n: usize,
    m: usize,
    start: usize,
    end: usize,
    statistic: TsadSpanStatistic,
    out_order: *mut usize,
) -> TsadStatus {
    guard(|| {
        if start > end {
            return Err(invalid(format!("event start {start} is after end {end}")));
        }
        let ch = ChannelScores(matrix(channel_scores, n, m, "channel_scores")?);
        let stat = match statistic {
            TsadSpanStatistic::Mean => SpanStatistic::Mean,
            TsadSpanStatistic::Max => SpanStatistic::Max,
        };
        let d = rank_channels(&ch, &Event::new(start, end), 0, &ScoredChannels::all(m), stat)?;
        slice_mut(out_order, m, "out_order")?.copy_from_slice(&d.ranked_channels);
        Ok(())
    })
}
