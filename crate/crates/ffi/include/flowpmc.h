#ifndef FLOWPMC_H
#define FLOWPMC_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlowpmcAlgorithm {
  FLOWPMC_ALGORITHM_PMC = 0,
  FLOWPMC_ALGORITHM_GR_PMC = 1,
  FLOWPMC_ALGORITHM_LR_PMC = 2,
  FLOWPMC_ALGORITHM_SL_PMC = 3,
  FLOWPMC_ALGORITHM_NF_PMC = 4,
} FlowpmcAlgorithm;

typedef enum FlowpmcStatus {
  FLOWPMC_STATUS_OK = 0,
  FLOWPMC_STATUS_NULL_POINTER = 1,
  FLOWPMC_STATUS_INVALID_ARGUMENT = 2,
  FLOWPMC_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * Non-positive-definite matrix, non-finite flow or gradient, degenerate weights.
   */
  FLOWPMC_STATUS_NUMERICAL = 4,
  FLOWPMC_STATUS_PANIC = 5,
} FlowpmcStatus;

/**
 * Opaque result of one sampler run.
 */
typedef struct FlowpmcOutput FlowpmcOutput;

/**
 * Opaque target density.
 */
typedef struct FlowpmcTarget FlowpmcTarget;

/**
 * Sampler settings. Obtain defaults from [`flowpmc_ais_params_default`].
 */
typedef struct FlowpmcAisParams {
  enum FlowpmcAlgorithm algorithm;
  size_t proposals;
  size_t samples_per_proposal;
  size_t iterations;
  double sigma;
  double init_low;
  double init_high;
  double base_lr;
  double langevin_step;
  bool langevin_noise;
} FlowpmcAisParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *flowpmc_last_error_message(void);

struct FlowpmcAisParams flowpmc_ais_params_default(enum FlowpmcAlgorithm algorithm);

/**
 * Gaussian mixture from `components` weights, `components·dim` row-major means and
 * `components·dim·dim` row-major covariances.
 *
 * # Safety
 * Array arguments must be valid for the stated lengths; `out` must be writable.
 */
enum FlowpmcStatus flowpmc_gmm_target_new(size_t dim,
                                          size_t components,
                                          const double *weights,
                                          const double *means,
                                          const double *covariances,
                                          struct FlowpmcTarget **out);

/**
 * A random mixture drawn with the benchmark generator from stream `(seed, stream)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum FlowpmcStatus flowpmc_gmm_target_random(uint64_t seed,
                                             uint64_t stream,
                                             size_t dim,
                                             size_t components,
                                             struct FlowpmcTarget **out);

/**
 * Logistic-regression posterior with prior `N(0, zeta²I)` over `n` observations:
 * `design` is `n·dim` row-major, `labels` holds 0 or 1.
 *
 * # Safety
 * Array arguments must be valid for the stated lengths; `out` must be writable.
 */
enum FlowpmcStatus flowpmc_logistic_target_new(size_t dim,
                                               size_t n,
                                               const double *design,
                                               const uint8_t *labels,
                                               double zeta,
                                               struct FlowpmcTarget **out);

/**
 * # Safety
 * `target` is null or a handle from this library that has not been freed.
 */
void flowpmc_target_free(struct FlowpmcTarget *target);

/**
 * Dimension of the target, or 0 for a null handle.
 *
 * # Safety
 * `target` is null or a live handle.
 */
size_t flowpmc_target_dim(const struct FlowpmcTarget *target);

/**
 * # Safety
 * `x` is valid for `len` reads; `out` is writable.
 */
enum FlowpmcStatus flowpmc_target_log_density(const struct FlowpmcTarget *target,
                                              const double *x,
                                              size_t len,
                                              double *out);

/**
 * Writes `∇ log π(x)` into `grad` (length `len`).
 *
 * # Safety
 * `x` and `grad` are valid for `len` elements.
 */
enum FlowpmcStatus flowpmc_target_grad_log_density(const struct FlowpmcTarget *target,
                                                   const double *x,
                                                   size_t len,
                                                   double *grad);

/**
 * Runs the sampler on `target` with randomness from stream `(seed, stream)`.
 *
 * # Safety
 * `target` and `params` are live; `out` is writable.
 */
enum FlowpmcStatus flowpmc_run_ais(const struct FlowpmcTarget *target,
                                   const struct FlowpmcAisParams *params,
                                   uint64_t seed,
                                   uint64_t stream,
                                   struct FlowpmcOutput **out);

/**
 * # Safety
 * `output` is null or a live handle.
 */
void flowpmc_output_free(struct FlowpmcOutput *output);

/**
 * Number of weighted samples, or 0 for a null handle.
 *
 * # Safety
 * `output` is null or a live handle.
 */
size_t flowpmc_output_sample_count(const struct FlowpmcOutput *output);

/**
 * Copies all sample points (`count·dim` row-major) and their unnormalized log
 * weights (`count`). Either destination may be null to skip it.
 *
 * # Safety
 * Non-null destinations are valid for the stated lengths.
 */
enum FlowpmcStatus flowpmc_output_samples(const struct FlowpmcOutput *output,
                                          double *points,
                                          size_t points_len,
                                          double *log_weights,
                                          size_t log_weights_len);

/**
 * Self-normalized mean over samples from iterations `>= burn_in`. `ess` and
 * `evidence` may be null.
 *
 * # Safety
 * `mean` is valid for `len` writes; non-null scalars are writable.
 */
enum FlowpmcStatus flowpmc_output_snis_mean(const struct FlowpmcOutput *output,
                                            size_t burn_in,
                                            double *mean,
                                            size_t len,
                                            double *ess,
                                            double *evidence);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWPMC_H */
