#ifndef FEDSIM_H
#define FEDSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Aggregation normalizer selector.
 */
typedef enum FedsimNormalizer {
  FEDSIM_NORMALIZER_UNBIASED = 0,
  FEDSIM_NORMALIZER_SUM_ONE = 1,
  FEDSIM_NORMALIZER_FED_AVG = 2,
} FedsimNormalizer;

/**
 * Status codes returned by every fallible function.
 */
typedef enum FedsimStatus {
  FEDSIM_STATUS_OK = 0,
  FEDSIM_STATUS_NULL_POINTER = 1,
  FEDSIM_STATUS_INVALID_ARGUMENT = 2,
  FEDSIM_STATUS_CONFIG = 3,
  FEDSIM_STATUS_IO = 4,
  FEDSIM_STATUS_DIVERGENCE = 5,
  FEDSIM_STATUS_INTERNAL = 6,
} FedsimStatus;

/**
 * Opaque problem handle.
 */
typedef struct FedsimProblem FedsimProblem;

/**
 * Opaque handle holding the logs of a configuration run, one per seed.
 */
typedef struct FedsimRun FedsimRun;

/**
 * Opaque sampling-scheme handle.
 */
typedef struct FedsimScheme FedsimScheme;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last error on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *fedsim_last_error(void);

/**
 * Problem whose client `i` holds `sizes[i]` copies of the row-major anchor
 * `anchors[i*dim..(i+1)*dim]`, with weights proportional to size.
 *
 * # Safety
 * `anchors` must point to `n*dim` doubles, `sizes` to `n` values.
 */
enum FedsimStatus fedsim_problem_duplicated_quadratic(const double *anchors,
                                                      const size_t *sizes,
                                                      size_t n,
                                                      size_t dim,
                                                      struct FedsimProblem **out);

/**
 * Logistic-regression problem with synthetic data.
 *
 * # Safety
 * `sizes` must point to `n` values.
 */
enum FedsimStatus fedsim_problem_logistic(const size_t *sizes,
                                          size_t n,
                                          size_t dim,
                                          double ridge,
                                          uint64_t seed,
                                          struct FedsimProblem **out);

/**
 * # Safety
 * `problem` must be null or a handle from this library not yet freed.
 */
void fedsim_problem_free(struct FedsimProblem *problem);

/**
 * # Safety
 * `problem` must be a live handle.
 */
size_t fedsim_problem_dim(const struct FedsimProblem *problem);

/**
 * # Safety
 * `problem` must be a live handle.
 */
size_t fedsim_problem_n_clients(const struct FedsimProblem *problem);

/**
 * Copies the objective weights into `out[0..n]`.
 *
 * # Safety
 * `out` must have room for `n_clients` doubles.
 */
enum FedsimStatus fedsim_problem_weights(const struct FedsimProblem *problem, double *out);

/**
 * Full objective value and gradient at `x`; `grad` may be null.
 *
 * # Safety
 * `x` and `grad` must hold `dim` doubles.
 */
enum FedsimStatus fedsim_problem_evaluate(const struct FedsimProblem *problem,
                                          const double *x,
                                          double *value,
                                          double *grad);

/**
 * Full participation of `n` clients.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FedsimStatus fedsim_scheme_full(size_t n, struct FedsimScheme **out);

/**
 * Uniform sampling of `b` of `n` clients without replacement.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FedsimStatus fedsim_scheme_uniform(size_t n, size_t b, struct FedsimScheme **out);

/**
 * Each client participates independently with probability `p[i]`.
 *
 * # Safety
 * `p` must point to `n` doubles.
 */
enum FedsimStatus fedsim_scheme_independent(const double *p, size_t n, struct FedsimScheme **out);

/**
 * Exactly one client per round, client `i` with probability `pi[i]`.
 *
 * # Safety
 * `pi` must point to `n` doubles.
 */
enum FedsimStatus fedsim_scheme_one_client(const double *pi, size_t n, struct FedsimScheme **out);

/**
 * # Safety
 * `scheme` must be null or a handle from this library not yet freed.
 */
void fedsim_scheme_free(struct FedsimScheme *scheme);

/**
 * Inclusion probabilities `p_i` into `out[0..n]`.
 *
 * # Safety
 * `out` must have room for `n` doubles.
 */
enum FedsimStatus fedsim_scheme_probabilities(const struct FedsimScheme *scheme, double *out);

/**
 * Constant `M = max_i s_i w_i / p_i` of the scheme for weights `w`.
 *
 * # Safety
 * `w` must point to `n` doubles.
 */
enum FedsimStatus fedsim_scheme_m_constant(const struct FedsimScheme *scheme,
                                           const double *w,
                                           double *out);

/**
 * Expected aggregation coefficient `w_i / q_i` of every client.
 *
 * # Safety
 * `w` and `out` must hold `n` doubles.
 */
enum FedsimStatus fedsim_expected_contribution(const struct FedsimScheme *scheme,
                                               enum FedsimNormalizer normalizer,
                                               const double *w,
                                               double *out);

/**
 * Normalized effective weights `ŵ` of a parametrization.
 *
 * # Safety
 * All arrays must hold `n` doubles, where `n` is the scheme size.
 */
enum FedsimStatus fedsim_effective_weights(const struct FedsimScheme *scheme,
                                           enum FedsimNormalizer normalizer,
                                           const double *agg_weights,
                                           const double *step_normalizers,
                                           const double *local_steps,
                                           const double *w,
                                           double *out);

/**
 * Runs a JSON run configuration, one log per configured seed. A nonzero
 * `use_seed` replaces the configured seeds with `seed`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string.
 */
enum FedsimStatus fedsim_run_json(const char *config_json,
                                  bool use_seed,
                                  uint64_t seed,
                                  struct FedsimRun **out);

/**
 * # Safety
 * `run` must be null or a handle from this library not yet freed.
 */
void fedsim_run_free(struct FedsimRun *run);

/**
 * Number of logs (seeds) held by the run.
 *
 * # Safety
 * `run` must be a live handle.
 */
size_t fedsim_run_count(const struct FedsimRun *run);

/**
 * Number of recorded rounds of log `index`, or 0 for a bad handle.
 *
 * # Safety
 * `run` must be a live handle.
 */
size_t fedsim_run_rounds(const struct FedsimRun *run, size_t index);

/**
 * Dimension of the final iterate of log `index`, or 0 for a bad handle.
 *
 * # Safety
 * `run` must be a live handle.
 */
size_t fedsim_run_dim(const struct FedsimRun *run, size_t index);

/**
 * Copies the final iterate of log `index`.
 *
 * # Safety
 * `out` must have room for [`fedsim_run_dim`] doubles.
 */
enum FedsimStatus fedsim_run_final_iterate(const struct FedsimRun *run, size_t index, double *out);

/**
 * Copies the per-round optimality gaps `f(x^r) − f*` of log `index`.
 *
 * # Safety
 * `out` must have room for [`fedsim_run_rounds`] doubles.
 */
enum FedsimStatus fedsim_run_f_gaps(const struct FedsimRun *run, size_t index, double *out);

/**
 * Copies the per-round squared distances to the minimizer of log `index`.
 *
 * # Safety
 * `out` must have room for [`fedsim_run_rounds`] doubles.
 */
enum FedsimStatus fedsim_run_dist_sq(const struct FedsimRun *run, size_t index, double *out);

/**
 * Writes log `index` as CSV to `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum FedsimStatus fedsim_run_write_csv(const struct FedsimRun *run, size_t index, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDSIM_H */
