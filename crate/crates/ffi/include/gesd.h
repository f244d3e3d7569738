#ifndef GESD_H
#define GESD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; 1 to 3 match the CLI exit codes.
 */
typedef enum GesdStatus {
  GESD_STATUS_OK = 0,
  GESD_STATUS_CONFIG_ERROR = 1,
  GESD_STATUS_DATA_ERROR = 2,
  GESD_STATUS_NUMERIC_ERROR = 3,
  GESD_STATUS_NULL_POINTER = 4,
  GESD_STATUS_INVALID_ARGUMENT = 5,
  GESD_STATUS_PANIC = 6,
} GesdStatus;

/**
 * Config plus its loaded train/test split.
 */
typedef struct GesdExperiment GesdExperiment;

typedef struct GesdModel GesdModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call on this thread.
 */
const char *gesd_last_error_message(void);

void gesd_string_free(char *s);

/**
 * Loads a TOML experiment config, its CSV and the configured split.
 */
enum GesdStatus gesd_experiment_load(const char *config_path, struct GesdExperiment **out);

void gesd_experiment_free(struct GesdExperiment *exp);

/**
 * Encoded feature count of the experiment's data.
 */
enum GesdStatus gesd_experiment_n_features(const struct GesdExperiment *exp, size_t *out);

/**
 * Copies the standardized test split: `features` must hold
 * `n_rows * n_features` doubles, `labels` and `groups` `n_rows` entries.
 * Pass NULL buffers to query `n_rows` only.
 */
enum GesdStatus gesd_experiment_test_data(const struct GesdExperiment *exp,
                                          double *features,
                                          uint8_t *labels,
                                          size_t *groups,
                                          size_t *n_rows);

enum GesdStatus gesd_model_load_json(const char *path, struct GesdModel **out);

void gesd_model_free(struct GesdModel *model);

enum GesdStatus gesd_model_n_features(const struct GesdModel *model, size_t *out);

enum GesdStatus gesd_model_threshold(const struct GesdModel *model, double *out);

/**
 * Scores `n_rows` row-major rows of the model's width into `out`.
 */
enum GesdStatus gesd_model_predict_scores(const struct GesdModel *model,
                                          const double *rows,
                                          size_t n_rows,
                                          double *out);

/**
 * Full audit of `model` on the experiment's test split; writes the
 * `audit.json` document to `*out_json`.
 */
enum GesdStatus gesd_audit_json(const struct GesdExperiment *exp,
                                const struct GesdModel *model,
                                char **out_json);

/**
 * Rank AUC with half credit for ties; labels are 0/1.
 */
enum GesdStatus gesd_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Demographic parity difference between groups 0 and 1.
 */
enum GesdStatus gesd_dp_difference(const uint8_t *predicted,
                                   const size_t *groups,
                                   size_t n,
                                   double *out);

/**
 * Two-sided Mann–Whitney test; `u` is the statistic of sample `a`.
 * `exact` may be NULL.
 */
enum GesdStatus gesd_mann_whitney(const double *a,
                                  size_t n_a,
                                  const double *b,
                                  size_t n_b,
                                  double *u,
                                  double *p_value,
                                  bool *exact);

/**
 * Exact hypervolume of `n` row-major 3-D points (minimization) against `reference[3]`.
 */
enum GesdStatus gesd_hypervolume_3d(const double *points,
                                    size_t n,
                                    const double *reference,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GESD_H */
