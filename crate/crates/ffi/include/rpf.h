#ifndef RPF_H
#define RPF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call. Values 2 to 4 match the CLI exit codes.
 */
typedef enum RpfStatus {
  RPF_STATUS_OK = 0,
  /*
   A required pointer was null or a string was not valid UTF-8.
   */
  RPF_STATUS_INVALID_ARGUMENT = 1,
  /*
   Bad configuration, shapes, labels or missing files.
   */
  RPF_STATUS_INPUT = 2,
  /*
   Divergence or another non-finite result.
   */
  RPF_STATUS_NUMERICAL = 3,
  /*
   Unrecognized checkpoint or manifest format, or unsupported version.
   */
  RPF_STATUS_FORMAT = 4,
  /*
   An internal panic was caught.
   */
  RPF_STATUS_PANIC = 5,
} RpfStatus;

/*
 A generated or loaded synthetic benchmark.
 */
typedef struct RpfBenchmark RpfBenchmark;

/*
 A trained model: backbone, head and their frozen references.
 */
typedef struct RpfModel RpfModel;

/*
 Headline numbers of one training run.
 */
typedef struct RpfRunSummary {
  size_t selected_epoch;
  double selected_val_acc;
  double acc_known;
  double best_h_score;
  double best_threshold;
} RpfRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or null. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *rpf_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *rpf_version(void);

/*
 Generates a benchmark. `config` holds `key=value` lines and may be null
 for the defaults.

 # Safety
 `config` must be null or a NUL-terminated string; `out` must be writable.
 */
enum RpfStatus rpf_benchmark_generate(const char *config, uint64_t seed, struct RpfBenchmark **out);

/*
 Loads a benchmark directory written by `rpf generate` or
 [`rpf_benchmark_save`].

 # Safety
 `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum RpfStatus rpf_benchmark_load(const char *dir, struct RpfBenchmark **out);

/*
 # Safety
 `bench` must be a live handle; `dir` a NUL-terminated string.
 */
enum RpfStatus rpf_benchmark_save(const struct RpfBenchmark *bench, const char *dir);

/*
 # Safety
 `bench` must be a live handle; the output pointers must be writable.
 */
enum RpfStatus rpf_benchmark_shape(const struct RpfBenchmark *bench,
                                   size_t *input_dim,
                                   size_t *num_known,
                                   size_t *num_target);

/*
 Copies the target domain into caller buffers: `x` holds
 `num_target × input_dim` row-major values and `y` the labels.

 # Safety
 `x` and `y` must be writable for the sizes reported by
 [`rpf_benchmark_shape`].
 */
enum RpfStatus rpf_benchmark_target(const struct RpfBenchmark *bench, double *x, size_t *y);

/*
 # Safety
 `bench` must be null or a handle not yet freed.
 */
void rpf_benchmark_free(struct RpfBenchmark *bench);

/*
 Runs pre-training, linear probing and fine-tuning on `bench`. `config`
 holds training `key=value` lines (null for defaults). The trained model
 is returned through `out_model` and its headline numbers through
 `summary`, which may be null.

 # Safety
 `bench` must be a live handle, `config` null or NUL-terminated,
 `out_model` writable.
 */
enum RpfStatus rpf_run_experiment(const struct RpfBenchmark *bench,
                                  const char *config,
                                  struct RpfModel **out_model,
                                  struct RpfRunSummary *summary);

/*
 Loads a checkpoint, plus its JSON sidecar when present.

 # Safety
 `path` must be NUL-terminated; `out` writable.
 */
enum RpfStatus rpf_model_load(const char *path, struct RpfModel **out);

/*
 Writes the checkpoint (and its sidecar when metadata is known).

 # Safety
 `model` must be a live handle; `path` NUL-terminated.
 */
enum RpfStatus rpf_model_save(const struct RpfModel *model, const char *path);

/*
 # Safety
 `model` must be a live handle; outputs writable.
 */
enum RpfStatus rpf_model_shape(const struct RpfModel *model,
                               size_t *input_dim,
                               size_t *num_classes);

/*
 Softmax class probabilities for `rows × cols` row-major inputs, written
 as `rows × num_classes` values into `out`.

 # Safety
 `x` must hold `rows × cols` values, `out` room for `rows × num_classes`.
 */
enum RpfStatus rpf_model_predict_proba(const struct RpfModel *model,
                                       const double *x,
                                       size_t rows,
                                       size_t cols,
                                       double *out);

/*
 Open-set labels at `threshold`: the argmax class, or `num_classes` when
 the top probability is below the threshold.

 # Safety
 `x` must hold `rows × cols` values, `labels` room for `rows`.
 */
enum RpfStatus rpf_model_predict(const struct RpfModel *model,
                                 const double *x,
                                 size_t rows,
                                 size_t cols,
                                 double threshold,
                                 size_t *labels);

/*
 # Safety
 `model` must be null or a handle not yet freed.
 */
void rpf_model_free(struct RpfModel *model);

/*
 Harmonic mean of known-class and unknown-class accuracy (0 when both are 0).

 # Safety
 `out` must be writable.
 */
enum RpfStatus rpf_h_score(double acc_known, double acc_open, double *out);

/*
 Spearman rank correlation of two length-`n` series.

 # Safety
 `a` and `b` must hold `n` values; `out` must be writable.
 */
enum RpfStatus rpf_spearman_rho(const double *a, const double *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RPF_H */
