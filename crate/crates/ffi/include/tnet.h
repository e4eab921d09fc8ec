#ifndef TNET_H
#define TNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TnetStatus {
  TNET_STATUS_OK = 0,
  TNET_STATUS_NULL_POINTER = 1,
  TNET_STATUS_INVALID_ARGUMENT = 2,
  TNET_STATUS_SHAPE_MISMATCH = 3,
  TNET_STATUS_PARSE_ERROR = 4,
  TNET_STATUS_OUT_OF_BOUNDS = 5,
  TNET_STATUS_TOO_LARGE = 6,
  TNET_STATUS_NUMERICAL = 7,
  TNET_STATUS_BUFFER_TOO_SMALL = 8,
  TNET_STATUS_PANIC = 9,
} TnetStatus;

/**
 * Dense row-major tensor.
 */
typedef struct TnetTensor TnetTensor;

/**
 * Tensor train with `(left, physical, right)` cores.
 */
typedef struct TnetTensorTrain TnetTensorTrain;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *tnet_last_error(void);

/**
 * Create a tensor from a shape and `len` row-major values (copied).
 * `ndim = 0` makes a scalar.
 *
 * # Safety
 * `shape` must point to `ndim` values and `data` to `len` values; `out` must be writable.
 */
enum TnetStatus tnet_tensor_new(const size_t *shape,
                                size_t ndim,
                                const double *data,
                                size_t len,
                                struct TnetTensor **out);

/**
 * # Safety
 * `t` must come from this library and not be freed twice. NULL is ignored.
 */
void tnet_tensor_free(struct TnetTensor *t);

/**
 * Number of legs; 0 for scalars and NULL.
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t tnet_tensor_ndim(const struct TnetTensor *t);

/**
 * Number of elements; 0 for NULL.
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t tnet_tensor_len(const struct TnetTensor *t);

/**
 * Copy the shape into `out` (capacity `cap`).
 *
 * # Safety
 * `t` must be a live handle and `out` writable for `cap` values.
 */
enum TnetStatus tnet_tensor_shape(const struct TnetTensor *t, size_t *out, size_t cap);

/**
 * Copy the row-major data into `out` (capacity `cap`).
 *
 * # Safety
 * `t` must be a live handle and `out` writable for `cap` values.
 */
enum TnetStatus tnet_tensor_data(const struct TnetTensor *t, double *out, size_t cap);

/**
 * Evaluate an einsum expression (`"i j, j k -> i k"`) over `n` tensors.
 *
 * # Safety
 * `expr` must be a NUL-terminated string, `inputs` an array of `n` live
 * handles, and `out` writable.
 */
enum TnetStatus tnet_einsum(const char *expr,
                            const struct TnetTensor *const *inputs,
                            size_t n,
                            struct TnetTensor **out);

/**
 * Rank-`k` SVD of a matrix (`k = 0` keeps all). Writes `U` (m×k), `s`
 * (length k), `Vt` (k×n) and the Frobenius truncation error (`err` may be NULL).
 *
 * # Safety
 * `m` must be a live handle; `u`, `s`, `vt` writable.
 */
enum TnetStatus tnet_svd(const struct TnetTensor *m,
                         size_t k,
                         struct TnetTensor **u,
                         struct TnetTensor **s,
                         struct TnetTensor **vt,
                         double *err);

/**
 * Tensor-train decomposition. `max_bond = 0` means unbounded; singular
 * values at or below `tol` times the largest are dropped.
 *
 * # Safety
 * `t` must be a live handle and `out` writable.
 */
enum TnetStatus tnet_tt_decompose(const struct TnetTensor *t,
                                  size_t max_bond,
                                  double tol,
                                  struct TnetTensorTrain **out);

/**
 * # Safety
 * `tt` must come from this library and not be freed twice. NULL is ignored.
 */
void tnet_tt_free(struct TnetTensorTrain *tt);

/**
 * Number of cores; 0 for NULL.
 *
 * # Safety
 * `tt` must be NULL or a live handle.
 */
size_t tnet_tt_len(const struct TnetTensorTrain *tt);

/**
 * Copy the `len + 1` bond dimensions (boundaries included) into `out`.
 *
 * # Safety
 * `tt` must be a live handle and `out` writable for `cap` values.
 */
enum TnetStatus tnet_tt_bond_dims(const struct TnetTensorTrain *tt, size_t *out, size_t cap);

/**
 * Contract the train into a dense tensor.
 *
 * # Safety
 * `tt` must be a live handle and `out` writable.
 */
enum TnetStatus tnet_tt_to_dense(const struct TnetTensorTrain *tt, struct TnetTensor **out);

/**
 * Attention pattern of the toy induction head on a repeated random sequence
 * (`(pattern_len·repeats)²`, rows = query).
 *
 * # Safety
 * `out` must be writable.
 */
enum TnetStatus tnet_induction_pattern(size_t pattern_len,
                                       size_t repeats,
                                       size_t hidden,
                                       uint64_t seed,
                                       struct TnetTensor **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TNET_H */
