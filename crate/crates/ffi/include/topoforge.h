#ifndef TOPOFORGE_H
#define TOPOFORGE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  TF_STATUS_OK = 0,
  TF_STATUS_NULL_POINTER = 1,
  TF_STATUS_INVALID_ARGUMENT = 2,
  TF_STATUS_SHAPE = 3,
  TF_STATUS_SINGULAR = 4,
  TF_STATUS_NUMERIC = 5,
  TF_STATUS_CONFIG = 6,
  TF_STATUS_STATE = 7,
  TF_STATUS_FORMAT = 8,
  TF_STATUS_IO = 9,
  TF_STATUS_BUFFER_TOO_SMALL = 10,
  TF_STATUS_PANIC = 11,
} TfStatus;

/**
 * Trained generator loaded from a checkpoint.
 */
typedef struct TfModel TfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *tf_version(void);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *tf_last_error(void);

/**
 * Runs SIMP on the cantilever problem. `out` must hold `nelx * nely`
 * doubles; `out_compliance` may be null.
 *
 * # Safety
 * `out` must be valid for `out_len` writes and `out_compliance` null or valid.
 */
TfStatus tf_optimize(size_t nelx,
                     size_t nely,
                     double volfrac,
                     double penal,
                     double rmin,
                     double *out,
                     size_t out_len,
                     double *out_compliance);

/**
 * Loads a checkpoint file and stores a new handle in `*out_model`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_model` a valid pointer.
 */
TfStatus tf_model_load(const char *path, TfModel **out_model);

/**
 * Releases a handle from [`tf_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void tf_model_free(TfModel *model);

/**
 * Output grid size of a model.
 *
 * # Safety
 * `model` must be a live handle; `out_nelx` and `out_nely` valid pointers.
 */
TfStatus tf_model_resolution(const TfModel *model, size_t *out_nelx, size_t *out_nely);

/**
 * Generates `count` structures for `volfrac` into `out`, which must hold
 * `count * nelx * nely` doubles. With `post` non-zero the samples are
 * thresholded and smoothed.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for `out_len` writes.
 */
TfStatus tf_model_sample(const TfModel *model,
                         double volfrac,
                         size_t count,
                         uint64_t seed,
                         int32_t post,
                         double *out,
                         size_t out_len);

/**
 * Thresholds then Gaussian-smooths a grid. `input` and `out` may alias.
 *
 * # Safety
 * `input` must be valid for `nelx * nely` reads and `out` for as many writes.
 */
TfStatus tf_postprocess(size_t nelx,
                        size_t nely,
                        const double *input,
                        double threshold,
                        size_t kernel_size,
                        double sigma,
                        double *out);

/**
 * Binarizes a grid at 0.5 and reports its cantilever compliance.
 * Infeasible designs succeed with `*out_feasible = 0` and infinite
 * compliance. `out_feasible` and `out_disconnected` may be null.
 *
 * # Safety
 * `densities` must be valid for `nelx * nely` reads; outputs null or valid.
 */
TfStatus tf_compliance(size_t nelx,
                       size_t nely,
                       const double *densities,
                       double *out_compliance,
                       int32_t *out_feasible,
                       int32_t *out_disconnected);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPOFORGE_H */
