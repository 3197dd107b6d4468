#ifndef AFFECTLENS_H
#define AFFECTLENS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AffectStatus {
  AFFECT_STATUS_OK = 0,
  AFFECT_STATUS_NULL_POINTER = 1,
  AFFECT_STATUS_INVALID_UTF8 = 2,
  AFFECT_STATUS_IO = 3,
  AFFECT_STATUS_PARSE = 4,
  AFFECT_STATUS_DIMENSION = 5,
  AFFECT_STATUS_INVALID_INPUT = 6,
  AFFECT_STATUS_NUMERIC = 7,
  AFFECT_STATUS_PANIC = 99,
} AffectStatus;

// Fitted kernel ridge regressor for one dimension.
typedef struct AffectKrr AffectKrr;

// Affect subspace direction for one dimension.
typedef struct AffectSubspace AffectSubspace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *affect_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *affect_version(void);

// Load an `affect-krr/1` model file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum AffectStatus affect_krr_load(const char *path, struct AffectKrr **out);

// Fit on `n` row-major feature vectors of length `d`. `dimension` is
// 0 for power, 1 for sentiment, 2 for agency.
//
// # Safety
// `x` must hold `n * d` values, `y` must hold `n`, and `out` must be writable.
enum AffectStatus affect_krr_fit(const double *x,
                                 size_t n,
                                 size_t d,
                                 const double *y,
                                 double alpha,
                                 double gamma,
                                 uint32_t dimension,
                                 struct AffectKrr **out);

// Predict `n` row-major queries of length `d` into `out[0..n]`.
//
// # Safety
// `model` must come from this library; `x` holds `n * d` values and `out` `n`.
enum AffectStatus affect_krr_predict(const struct AffectKrr *model,
                                     const double *x,
                                     size_t n,
                                     size_t d,
                                     double *out);

// Write the model as an `affect-krr/1` file.
//
// # Safety
// `model` must come from this library and `path` be NUL-terminated.
enum AffectStatus affect_krr_save(const struct AffectKrr *model, const char *path);

// Feature length the model expects, or 0 for a null handle.
//
// # Safety
// `model` must be null or come from this library.
size_t affect_krr_dim(const struct AffectKrr *model);

// # Safety
// `model` must be null or come from this library, and is invalid afterwards.
void affect_krr_free(struct AffectKrr *model);

// Load an `affect-asp/1` subspace file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum AffectStatus affect_subspace_load(const char *path, struct AffectSubspace **out);

// Project `n` row-major vectors of length `d` onto the direction.
//
// # Safety
// `subspace` must come from this library; `x` holds `n * d` values and `out` `n`.
enum AffectStatus affect_subspace_project(const struct AffectSubspace *subspace,
                                          const double *x,
                                          size_t n,
                                          size_t d,
                                          double *out);

// Direction length, or 0 for a null handle.
//
// # Safety
// `subspace` must be null or come from this library.
size_t affect_subspace_dim(const struct AffectSubspace *subspace);

// # Safety
// `subspace` must be null or come from this library, and is invalid afterwards.
void affect_subspace_free(struct AffectSubspace *subspace);

// # Safety
// `x` and `y` must each hold `n` values; `out` must be writable.
enum AffectStatus affect_pearson(const double *x, const double *y, size_t n, double *out);

// # Safety
// `x` and `y` must each hold `n` values; `out` must be writable.
enum AffectStatus affect_spearman(const double *x, const double *y, size_t n, double *out);

// Scale `v[0..n]` to unit length in place.
//
// # Safety
// `v` must hold `n` writable values.
enum AffectStatus affect_normalize_unit(double *v, size_t n);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AFFECTLENS_H */
