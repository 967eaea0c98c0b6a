/* C interface to the ortho diffusion-map library. */

#ifndef ORTHO_H
#define ORTHO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum OrthoStatus {
  ORTHO_STATUS_OK = 0,
  ORTHO_STATUS_NULL_POINTER = 1,
  ORTHO_STATUS_INVALID_INPUT = 2,
  ORTHO_STATUS_DIMENSION_MISMATCH = 3,
  ORTHO_STATUS_DEGENERATE_NEIGHBORHOOD = 4,
  ORTHO_STATUS_NOT_CONJUGATE_SYMMETRIC = 5,
  ORTHO_STATUS_ROW_UNDERFLOW = 6,
  ORTHO_STATUS_CONVERGENCE_FAILURE = 7,
  ORTHO_STATUS_BUFFER_TOO_SMALL = 8,
  ORTHO_STATUS_IO = 9,
  ORTHO_STATUS_PANIC = 10,
} OrthoStatus;

/**
 * Opaque row-stochastic kernel with its stationary distribution.
 */
typedef struct OrthoKernel OrthoKernel;

/**
 * Opaque result of a fixed-point run.
 */
typedef struct OrthoResult OrthoResult;

/**
 * Fixed-point settings; obtain defaults from [`ortho_settings_default`].
 */
typedef struct OrthoSettings {
  double c2;
  /**
   * Divide `c2` by the median positive diffusion distance of the start kernel.
   */
  bool c2_relative;
  /**
   * Use the symmetric doubly stochastic variant.
   */
  bool doubly_stochastic;
  /**
   * Leading eigenpairs used for diffusion distances; 0 means exact distances.
   */
  size_t truncation;
  double tol;
  size_t max_iter;
  double sinkhorn_tol;
  size_t sinkhorn_max_iter;
  double exponent_floor;
  size_t max_restarts;
  size_t divergence_window;
} OrthoSettings;

typedef struct OrthoMetrics {
  double ari;
  double nmi;
  double purity;
} OrthoMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or NULL. The pointer
 * stays valid until the next call into this library from the same thread.
 */
const char *ortho_last_error_message(void);

/**
 * Kernel from an `n×n` nonnegative affinity matrix.
 *
 * # Safety
 * `data` must point to `n*n` doubles and `out` to writable storage for a pointer.
 */
enum OrthoStatus ortho_kernel_from_affinity(const double *data,
                                            size_t n,
                                            double alpha,
                                            bool symmetrize,
                                            struct OrthoKernel **out);

/**
 * Kernel from `n_points` points in `dim` dimensions. A positive `neighbors`
 * selects adaptive bandwidths; otherwise `epsilon` is the global bandwidth.
 *
 * # Safety
 * `points` must point to `n_points*dim` doubles and `out` to writable storage for a pointer.
 */
enum OrthoStatus ortho_kernel_from_points(const double *points,
                                          size_t n_points,
                                          size_t dim,
                                          size_t neighbors,
                                          double epsilon,
                                          double alpha,
                                          bool symmetrize,
                                          struct OrthoKernel **out);

/**
 * Number of points of a kernel (0 for NULL).
 *
 * # Safety
 * `kernel` must be NULL or a live handle.
 */
size_t ortho_kernel_size(const struct OrthoKernel *kernel);

/**
 * Copies the `n×n` transition matrix into `out` (row-major).
 *
 * # Safety
 * `kernel` must be a live handle and `out` must hold `len` doubles.
 */
enum OrthoStatus ortho_kernel_matrix(const struct OrthoKernel *kernel, double *out, size_t len);

/**
 * Copies the stationary distribution (`n` doubles) into `out`.
 *
 * # Safety
 * `kernel` must be a live handle and `out` must hold `len` doubles.
 */
enum OrthoStatus ortho_kernel_stationary(const struct OrthoKernel *kernel, double *out, size_t len);

/**
 * # Safety
 * `kernel` must be NULL or a handle not yet freed.
 */
void ortho_kernel_free(struct OrthoKernel *kernel);

/**
 * Eigenvalues of the kernel (`n` doubles), largest magnitude first.
 *
 * # Safety
 * `kernel` must be a live handle and `out` must hold `len` doubles.
 */
enum OrthoStatus ortho_spectrum(const struct OrthoKernel *kernel, double *out, size_t len);

/**
 * Diffusion coordinates at time `t`: `n×dims` row-major, constant
 * coordinate omitted, `1 <= dims <= n − 1`.
 *
 * # Safety
 * `kernel` must be a live handle and `out` must hold `len` doubles.
 */
enum OrthoStatus ortho_diffusion_coordinates(const struct OrthoKernel *kernel,
                                             double t,
                                             size_t dims,
                                             double *out,
                                             size_t len);

struct OrthoSettings ortho_settings_default(void);

/**
 * Runs the fixed-point iteration from the prior kernel `q`. A NULL
 * `settings` uses the defaults. Reaching `max_iter` still succeeds; check
 * [`ortho_result_converged`].
 *
 * # Safety
 * `q` must be a live handle, `settings` NULL or valid, `out` writable.
 */
enum OrthoStatus ortho_fixpoint(const struct OrthoKernel *q,
                                const struct OrthoSettings *settings,
                                struct OrthoResult **out);

/**
 * # Safety
 * `result` must be NULL or a live handle.
 */
bool ortho_result_converged(const struct OrthoResult *result);

/**
 * Steps taken by the final attempt (0 for NULL).
 *
 * # Safety
 * `result` must be NULL or a live handle.
 */
size_t ortho_result_iterations(const struct OrthoResult *result);

/**
 * Weight actually used by the final attempt (NaN for NULL).
 *
 * # Safety
 * `result` must be NULL or a live handle.
 */
double ortho_result_effective_c2(const struct OrthoResult *result);

/**
 * Number of recorded residuals across all attempts (0 for NULL).
 *
 * # Safety
 * `result` must be NULL or a live handle.
 */
size_t ortho_result_trace_len(const struct OrthoResult *result);

/**
 * Copies the residual history into `out`.
 *
 * # Safety
 * `result` must be a live handle and `out` must hold `len` doubles.
 */
enum OrthoStatus ortho_result_residuals(const struct OrthoResult *result, double *out, size_t len);

/**
 * New kernel handle holding the last iterate; free it separately.
 *
 * # Safety
 * `result` must be a live handle and `out` writable.
 */
enum OrthoStatus ortho_result_kernel(const struct OrthoResult *result, struct OrthoKernel **out);

/**
 * # Safety
 * `result` must be NULL or a handle not yet freed.
 */
void ortho_result_free(struct OrthoResult *result);

/**
 * k-means on `n×m` row-major coordinates; writes `n` labels numbered by
 * first appearance.
 *
 * # Safety
 * `coords` must hold `n*m` doubles and `labels_out` `n` entries.
 */
enum OrthoStatus ortho_kmeans(const double *coords,
                              size_t n,
                              size_t m,
                              size_t k,
                              uint64_t seed,
                              size_t restarts,
                              size_t *labels_out);

/**
 * ARI, NMI and purity of `pred` against `truth`, both of length `n`.
 *
 * # Safety
 * `pred` and `truth` must hold `n` entries; `out` must be writable.
 */
enum OrthoStatus ortho_metrics(const size_t *pred,
                               const size_t *truth,
                               size_t n,
                               struct OrthoMetrics *out);

/**
 * Noisy-block affinity of size `(block_size·num_blocks)²` and its block
 * labels.
 *
 * # Safety
 * `matrix_out` must hold `matrix_len` doubles and `labels_out` `labels_len` entries.
 */
enum OrthoStatus ortho_noisy_blocks(size_t block_size,
                                    size_t num_blocks,
                                    double noise_scale,
                                    uint64_t seed,
                                    double *matrix_out,
                                    size_t matrix_len,
                                    size_t *labels_out,
                                    size_t labels_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORTHO_H */
