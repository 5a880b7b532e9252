#ifndef SKIPNET_H
#define SKIPNET_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum SkipnetStatus {
  SKIPNET_STATUS_OK = 0,
  SKIPNET_STATUS_NULL_POINTER = 1,
  SKIPNET_STATUS_INVALID_ARGUMENT = 2,
  SKIPNET_STATUS_IO = 3,
  SKIPNET_STATUS_CHECKPOINT = 4,
  SKIPNET_STATUS_INPUT = 5,
  SKIPNET_STATUS_INTERNAL = 6,
} SkipnetStatus;

/**
 * Opaque trained model.
 */
typedef struct SkipnetModel SkipnetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *skipnet_last_error(void);

/**
 * Loads a checkpoint file into a new handle stored in `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SkipnetStatus skipnet_model_load(const char *path, struct SkipnetModel **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must come from [`skipnet_model_load`] and not be used afterwards.
 */
void skipnet_model_free(struct SkipnetModel *model);

/**
 * Number of output classes, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t skipnet_model_num_classes(const struct SkipnetModel *model);

/**
 * Trainable parameter count, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t skipnet_model_param_count(const struct SkipnetModel *model);

/**
 * Name of class `index`, owned by the handle; null when out of range.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
const char *skipnet_model_class_name(const struct SkipnetModel *model, size_t index);

/**
 * Classifies `n_points` xyz triples. Writes `num_classes` probabilities to
 * `probs` (may be null) and the arg-max class to `*label` (may be null).
 *
 * # Safety
 * `points` must hold `3 * n_points` doubles, `probs` room for
 * `probs_len` doubles.
 */
enum SkipnetStatus skipnet_model_classify(const struct SkipnetModel *model,
                                          const double *points,
                                          size_t n_points,
                                          double *probs,
                                          size_t probs_len,
                                          size_t *label);

/**
 * Sets `*flat` when the cloud's smallest-to-largest covariance eigenvalue
 * ratio is below `tau`.
 *
 * # Safety
 * `points` must hold `3 * n_points` doubles and `flat` be valid.
 */
enum SkipnetStatus skipnet_detect_flat(const double *points,
                                       size_t n_points,
                                       double tau,
                                       bool *flat);

/**
 * Farthest point sampling of `count` indices starting at `start`.
 *
 * # Safety
 * `points` must hold `3 * n_points` doubles, `indices` room for `count`.
 */
enum SkipnetStatus skipnet_farthest_point_sample(const double *points,
                                                 size_t n_points,
                                                 size_t count,
                                                 size_t start,
                                                 size_t *indices);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKIPNET_H */
