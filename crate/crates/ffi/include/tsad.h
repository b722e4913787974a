#ifndef TSAD_H
#define TSAD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsadModelKind {
  TSAD_MODEL_KIND_RAW = 0,
  TSAD_MODEL_KIND_PCA = 1,
  TSAD_MODEL_KIND_UAE = 2,
  TSAD_MODEL_KIND_FC_AE = 3,
} TsadModelKind;

typedef enum TsadStatus {
  TSAD_STATUS_OK = 0,
  TSAD_STATUS_NULL_POINTER = 1,
  TSAD_STATUS_INVALID_ARGUMENT = 2,
  TSAD_STATUS_SHAPE = 3,
  TSAD_STATUS_INSUFFICIENT_DATA = 4,
  TSAD_STATUS_IO = 5,
  TSAD_STATUS_PARSE = 6,
  TSAD_STATUS_TRAINING = 7,
  TSAD_STATUS_PANIC = 8,
} TsadStatus;

typedef enum TsadFScore {
  TSAD_F_SCORE_F1 = 0,
  TSAD_F_SCORE_FPA1 = 1,
  TSAD_F_SCORE_FC1 = 2,
} TsadFScore;

typedef enum TsadSpanStatistic {
  TSAD_SPAN_STATISTIC_MEAN = 0,
  TSAD_SPAN_STATISTIC_MAX = 1,
} TsadSpanStatistic;

// Opaque trained reconstruction model.
typedef struct TsadModel TsadModel;

// Training options for [`tsad_model_fit`]. Zero in `latent_dim`,
// `batch_size` or `learning_rate` selects the per-model default.
typedef struct TsadFitOptions {
  enum TsadModelKind kind;
  size_t window_length;
  size_t window_stride;
  size_t latent_dim;
  size_t batch_size;
  double learning_rate;
  size_t max_epochs;
  size_t patience;
  double pca_variance_fraction;
  uint64_t seed;
} TsadFitOptions;

typedef struct TsadMetrics {
  double f1;
  double fpa1;
  double fc1;
  double prec_t;
  double rec_e;
} TsadMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL after a
// successful call. Valid until the next `tsad_*` call on the same thread.
const char *tsad_last_error(void);

// NUL-terminated library version; static storage.
const char *tsad_version(void);

// Defaults for `kind`: window 100 with stride 1, 100 epochs, patience 10.
struct TsadFitOptions tsad_fit_options_default(enum TsadModelKind kind);

// Fits a model on an already normalized `n x m` training matrix.
//
// # Safety
// `train` must point to `n * m` readable values, `options` to a valid
// struct and `out_model` to writable storage for one pointer.
enum TsadStatus tsad_model_fit(const double *train,
                               size_t n,
                               size_t m,
                               const struct TsadFitOptions *options,
                               struct TsadModel **out_model);

// Releases a model handle. NULL is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void tsad_model_free(struct TsadModel *model);

// Channel count and window length of a fitted model; either output may be NULL.
//
// # Safety
// `model` must be a live handle.
enum TsadStatus tsad_model_shape(const struct TsadModel *model,
                                 size_t *out_channels,
                                 size_t *out_window_length);

// Signed reconstruction errors for each of the `n` rows of `x`, written to
// `out_errors` (`n * m`). Windowed models need `tail_n >= window_length - 1`
// rows of preceding context in `tail`; other models accept `tail == NULL`.
//
// # Safety
// Buffers must hold the stated number of values.
enum TsadStatus tsad_model_residuals(const struct TsadModel *model,
                                     const double *x,
                                     size_t n,
                                     const double *tail,
                                     size_t tail_n,
                                     double *out_errors);

// Writes the model as JSON to `path`.
//
// # Safety
// `model` must be live and `path` a NUL-terminated UTF-8 string.
enum TsadStatus tsad_model_save(const struct TsadModel *model, const char *path);

// # Safety
// `path` must be a NUL-terminated UTF-8 string and `out_model` writable.
enum TsadStatus tsad_model_load(const char *path, struct TsadModel **out_model);

// Gauss-S: fits per-channel mean and deviation on `train_errors`, then
// writes summed negative-log survival scores of `test_errors` to
// `out_scores` (`n_test`). `out_channel_scores` (`n_test * m`) may be NULL.
//
// # Safety
// Buffers must hold the stated number of values.
enum TsadStatus tsad_score_gauss_s(const double *train_errors,
                                   size_t n_train,
                                   const double *test_errors,
                                   size_t n_test,
                                   size_t m,
                                   double *out_scores,
                                   double *out_channel_scores);

// Gauss-D over a rolling window of `window` errors ending at each test
// point; `tail_errors` (`n_tail` rows, may be 0) precede the test set.
// With `kernel_sigma > 0` the per-channel scores are also smoothed
// (Gauss-D-K).
//
// # Safety
// Buffers must hold the stated number of values.
enum TsadStatus tsad_score_gauss_d(const double *test_errors,
                                   size_t n_test,
                                   const double *tail_errors,
                                   size_t n_tail,
                                   size_t m,
                                   size_t window,
                                   double kernel_sigma,
                                   double *out_scores,
                                   double *out_channel_scores);

// Threshold giving exactly `k` positives; ties broken toward earlier points.
// `out_labels` (`n`) may be NULL.
//
// # Safety
// Buffers must hold the stated number of values.
enum TsadStatus tsad_threshold_top_k(const double *scores,
                                     size_t n,
                                     size_t k,
                                     double *out_threshold,
                                     uint8_t *out_labels);

// Threshold maximizing `metric` against `truth`. `out_value` may be NULL.
//
// # Safety
// Buffers must hold the stated number of values.
enum TsadStatus tsad_threshold_best_f(const double *scores,
                                      const uint8_t *truth,
                                      size_t n,
                                      enum TsadFScore metric,
                                      double *out_threshold,
                                      double *out_value,
                                      uint8_t *out_labels);

// `m_scored * neg_log_eps`.
//
// # Safety
// `out_threshold` must be writable.
enum TsadStatus tsad_threshold_tail_p(size_t m_scored, uint32_t neg_log_eps, double *out_threshold);

// F1, Fpa1, Fc1 and its two components.
//
// # Safety
// `pred` and `truth` must hold `n` values; `out` must be writable.
enum TsadStatus tsad_metrics(const uint8_t *pred,
                             const uint8_t *truth,
                             size_t n,
                             struct TsadMetrics *out);

// Areas under the ROC and precision-recall curves; either output may be NULL.
//
// # Safety
// `scores` and `truth` must hold `n` values.
enum TsadStatus tsad_ranking_metrics(const double *scores,
                                     const uint8_t *truth,
                                     size_t n,
                                     double *out_auroc,
                                     double *out_auprc);

// Friedman test over `values`, `k` methods by `n_groups` groups, row-major
// by method. `out_average_ranks` (`k`, rank 1 = highest value) may be NULL.
//
// # Safety
// Buffers must hold the stated number of values.
enum TsadStatus tsad_friedman(const double *values,
                              size_t k,
                              size_t n_groups,
                              double *out_statistic,
                              double *out_p_value,
                              double *out_average_ranks);

// Orders all `m` channels by their span statistic over test rows
// `start..=end`, most anomalous first, into `out_order` (`m`).
//
// # Safety
// `channel_scores` must hold `n * m` values and `out_order` `m`.
enum TsadStatus tsad_rank_channels(const double *channel_scores,
                                   size_t n,
                                   size_t m,
                                   size_t start,
                                   size_t end,
                                   enum TsadSpanStatistic statistic,
                                   size_t *out_order);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSAD_H */
