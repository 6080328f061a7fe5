/* C interface to the covnoise library. Matrices are row-major. */

#ifndef COVNOISE_H
#define COVNOISE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible entry point.
 */
typedef enum CovnoiseStatus {
  COVNOISE_STATUS_OK = 0,
  COVNOISE_STATUS_NULL_POINTER = 1,
  COVNOISE_STATUS_INVALID_ARGUMENT = 2,
  COVNOISE_STATUS_NOT_SYMMETRIC = 3,
  COVNOISE_STATUS_NOT_POSITIVE_DEFINITE = 4,
  COVNOISE_STATUS_DIM_MISMATCH = 5,
  COVNOISE_STATUS_SINGULAR = 6,
  COVNOISE_STATUS_NON_FINITE = 7,
  COVNOISE_STATUS_INTERNAL = 8,
} CovnoiseStatus;

/**
 * Opaque Ornstein-Uhlenbeck system.
 */
typedef struct CovnoiseOu CovnoiseOu;

/**
 * Opaque convex-quadratic problem (symmetric positive-definite matrix with
 * cached spectrum).
 */
typedef struct CovnoiseQuadratic CovnoiseQuadratic;

/**
 * Opaque deterministic random generator.
 */
typedef struct CovnoiseRng CovnoiseRng;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *covnoise_version(void);

/**
 * Copy the calling thread's last error message into `buf` (truncating) and
 * return the full message length in bytes, excluding the terminator. `buf`
 * may be null to query the length.
 *
 * # Safety
 * `buf` must point to `len` writable bytes when non-null.
 */
size_t covnoise_last_error_message(char *buf, size_t len);

/**
 * Build a quadratic problem from a row-major `dim x dim` symmetric
 * positive-definite matrix.
 *
 * # Safety
 * `a` must point to `dim * dim` doubles and `out` to a writable pointer.
 */
enum CovnoiseStatus covnoise_quadratic_new(size_t dim,
                                           const double *a,
                                           struct CovnoiseQuadratic **out);

/**
 * # Safety
 * `p` must come from `covnoise_quadratic_new` (or be null).
 */
void covnoise_quadratic_free(struct CovnoiseQuadratic *p);

/**
 * Problem dimension; zero for a null handle.
 *
 * # Safety
 * `p` must be a valid handle or null.
 */
size_t covnoise_quadratic_dim(const struct CovnoiseQuadratic *p);

/**
 * Extreme eigenvalues of the problem matrix.
 *
 * # Safety
 * Pointers must be valid; `p` from `covnoise_quadratic_new`.
 */
enum CovnoiseStatus covnoise_quadratic_eigen_range(const struct CovnoiseQuadratic *p,
                                                   double *lambda_min,
                                                   double *lambda_max);

/**
 * L(theta) = 1/2 theta^T A theta.
 *
 * # Safety
 * `theta` must hold `dim` doubles; `p` valid; `out` writable.
 */
enum CovnoiseStatus covnoise_quadratic_loss(const struct CovnoiseQuadratic *p,
                                            const double *theta,
                                            double *out);

/**
 * grad L(theta) = A theta, written to `out` (`dim` doubles).
 *
 * # Safety
 * `theta` and `out` must hold `dim` doubles; `p` valid.
 */
enum CovnoiseStatus covnoise_quadratic_gradient(const struct CovnoiseQuadratic *p,
                                                const double *theta,
                                                double *out);

/**
 * Tr(C^T A C) for a row-major `dim x dim` C.
 *
 * # Safety
 * `c` must hold `dim * dim` doubles; `p` valid; `out` writable.
 */
enum CovnoiseStatus covnoise_quadratic_trace_ctac(const struct CovnoiseQuadratic *p,
                                                  const double *c,
                                                  double *out);

/**
 * The decaying-schedule expectation bound nu/(k + gamma).
 *
 * # Safety
 * `c` is `dim x dim` row-major, `theta0` holds `dim` doubles; `p` valid.
 */
enum CovnoiseStatus covnoise_quadratic_theorem_bound(const struct CovnoiseQuadratic *p,
                                                     const double *c,
                                                     const double *theta0,
                                                     double gamma,
                                                     uint64_t k,
                                                     double *out);

/**
 * Symmetric PSD square root of a row-major matrix, written row-major to
 * `out` (`dim * dim` doubles).
 *
 * # Safety
 * `s` and `out` must hold `dim * dim` doubles.
 */
enum CovnoiseStatus covnoise_matrix_sqrt(size_t dim, const double *s, double *out);

/**
 * Create a deterministic generator for the given seed.
 *
 * # Safety
 * `out` must be writable.
 */
enum CovnoiseStatus covnoise_rng_new(uint64_t seed, struct CovnoiseRng **out);

/**
 * # Safety
 * `rng` must come from `covnoise_rng_new` (or be null).
 */
void covnoise_rng_free(struct CovnoiseRng *rng);

/**
 * Fill `out` with `n` standard normal draws.
 *
 * # Safety
 * `out` must hold `n` doubles; `rng` valid.
 */
enum CovnoiseStatus covnoise_rng_standard_normal(struct CovnoiseRng *rng, double *out, size_t n);

/**
 * Number of rows a quadratic run with these settings will log (step 0, the
 * multiples of `log_every`, and the final step).
 */
size_t covnoise_trajectory_len(uint64_t steps, uint64_t log_every);

/**
 * Run perturbed gradient descent on the quadratic with noise matrix `c`
 * (row-major, may be null for no noise). Uses the decaying schedule
 * 2/((k+gamma) lambda_min) when `gamma > 0`, otherwise the constant step
 * `alpha`. Writes one loss per logged row into `out_losses` and the row
 * count into `out_len`.
 *
 * # Safety
 * `theta0` holds `dim` doubles; `out_losses` holds
 * `covnoise_trajectory_len(steps, log_every)` doubles; `p` valid.
 */
enum CovnoiseStatus covnoise_run_quadratic(const struct CovnoiseQuadratic *p,
                                           const double *c,
                                           const double *theta0,
                                           uint64_t steps,
                                           uint64_t log_every,
                                           uint64_t seed,
                                           double gamma,
                                           double alpha,
                                           double *out_losses,
                                           size_t out_capacity,
                                           size_t *out_len);

/**
 * Build an Ornstein-Uhlenbeck system d theta = -A theta dt + sqrt(alpha) C dW.
 *
 * # Safety
 * `a` and `c` are `dim x dim` row-major; `theta0` holds `dim` doubles;
 * `out` writable.
 */
enum CovnoiseStatus covnoise_ou_new(size_t dim,
                                    const double *a,
                                    const double *c,
                                    double alpha,
                                    const double *theta0,
                                    struct CovnoiseOu **out);

/**
 * # Safety
 * `sys` must come from `covnoise_ou_new` (or be null).
 */
void covnoise_ou_free(struct CovnoiseOu *sys);

/**
 * Marginal mean exp(-A t) theta0, written to `out` (`dim` doubles).
 *
 * # Safety
 * `out` must hold `dim` doubles; `sys` valid.
 */
enum CovnoiseStatus covnoise_ou_mean(const struct CovnoiseOu *sys, double t, double *out);

/**
 * Closed-form marginal covariance at time `t`, written row-major to `out`
 * (`dim * dim` doubles).
 *
 * # Safety
 * `out` must hold `dim * dim` doubles; `sys` valid.
 */
enum CovnoiseStatus covnoise_ou_covariance(const struct CovnoiseOu *sys, double t, double *out);

/**
 * Squared Hellinger distance between N(mean1, cov1) and N(mean2, cov2)
 * (row-major covariances).
 *
 * # Safety
 * Means hold `dim` doubles, covariances `dim * dim`; `out` writable.
 */
enum CovnoiseStatus covnoise_hellinger_sq(size_t dim,
                                          const double *mean1,
                                          const double *cov1,
                                          const double *mean2,
                                          const double *cov2,
                                          double *out);

/**
 * Hellinger distance between the two systems' marginals at time `t` with
 * both diffusions scaled by `lambda`.
 *
 * # Safety
 * Both handles must be valid; `out` writable.
 */
enum CovnoiseStatus covnoise_scaled_hellinger(const struct CovnoiseOu *sys1,
                                              const struct CovnoiseOu *sys2,
                                              double lambda,
                                              double t,
                                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVNOISE_H */
