#ifndef SABRE_H
#define SABRE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SabreStatus {
  SABRE_STATUS_OK = 0,
  SABRE_STATUS_NULL_POINTER = 1,
  SABRE_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Knots, basis size or a covariate outside `[0, 1]`.
   */
  SABRE_STATUS_SPLINE = 3,
  /**
   * A response or linear predictor outside the family's domain.
   */
  SABRE_STATUS_DOMAIN = 4,
  SABRE_STATUS_SINGULAR_DESIGN = 5,
  /**
   * The fit was produced but did not converge; the handle is still set.
   */
  SABRE_STATUS_NON_CONVERGENCE = 6,
  SABRE_STATUS_SEPARATION_SUSPECTED = 7,
  SABRE_STATUS_PHI_BOUNDARY = 8,
  SABRE_STATUS_REPLICATE_FAILURES = 9,
  SABRE_STATUS_INADMISSIBLE = 10,
  SABRE_STATUS_INFERENCE = 11,
  SABRE_STATUS_BUFFER_TOO_SMALL = 12,
  SABRE_STATUS_PANIC = 13,
} SabreStatus;

typedef enum SabreFamily {
  SABRE_FAMILY_GAUSSIAN = 0,
  SABRE_FAMILY_BERNOULLI = 1,
  SABRE_FAMILY_POISSON = 2,
  SABRE_FAMILY_INVERSE_GAUSSIAN = 3,
  SABRE_FAMILY_NEGATIVE_BINOMIAL = 4,
} SabreFamily;

typedef struct SabreBasis SabreBasis;

typedef struct SabreFit SabreFit;

typedef struct SabreModel SabreModel;

/**
 * Settings for [`sabre_fit_sabre`]. Start from [`sabre_options_default`].
 */
typedef struct SabreOptions {
  size_t h;
  size_t max_iter;
  double step;
  double tol;
  uint64_t master_seed;
  /**
   * 0 uses all cores.
   */
  size_t threads;
} SabreOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message for the last failed call on this thread, or an empty string.
 * Valid until the next call into this library on the same thread.
 */
const char *sabre_last_error(void);

/**
 * `floor(n^(num/den))` with an exact integer boundary check.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SabreStatus sabre_knot_count(uint64_t n, uint32_t num, uint32_t den, size_t *out);

/**
 * Clamped B-spline basis of the given order with `n_interior` knots at
 * empirical quantiles of `z`.
 *
 * # Safety
 * `z` must point to `n` readable values and `out` must be valid for a write.
 */
enum SabreStatus sabre_basis_new(const double *z,
                                 size_t n,
                                 size_t n_interior,
                                 size_t order,
                                 struct SabreBasis **out);

/**
 * Number of basis functions, or 0 for a null handle.
 *
 * # Safety
 * `basis` must be null or a live handle.
 */
size_t sabre_basis_len(const struct SabreBasis *basis);

/**
 * Evaluates every basis function at `z` into `out[0..len)`.
 *
 * # Safety
 * `basis` must be a live handle and `out` must hold `len` writable values.
 */
enum SabreStatus sabre_basis_eval(const struct SabreBasis *basis,
                                  double z,
                                  double *out,
                                  size_t len);

/**
 * # Safety
 * `basis` must be null or a handle not yet freed.
 */
void sabre_basis_free(struct SabreBasis *basis);

/**
 * A family with no response distortion.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SabreStatus sabre_model_new(enum SabreFamily family, struct SabreModel **out);

/**
 * Bernoulli-logit observed through known false positive and false negative
 * rates.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SabreStatus sabre_model_misclassified(double fpr, double fnr, struct SabreModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void sabre_model_free(struct SabreModel *model);

/**
 * Defaults: 50 replicates, 200 iterations, unit gain, tolerance 1e-5.
 */
struct SabreOptions sabre_options_default(void);

/**
 * Fits the B-spline MLE. `x` is `n × p` row-major, `z` lies in `[0, 1]`.
 *
 * # Safety
 * Handles must be live, `x` must hold `n * p` values, `z` and `y` `n`
 * values, and `out` must be valid for a write.
 */
enum SabreStatus sabre_fit_smle(const struct SabreModel *model,
                                const struct SabreBasis *basis,
                                const double *x,
                                const double *z,
                                const double *y,
                                size_t n,
                                size_t p,
                                struct SabreFit **out);

/**
 * Fits the bias-corrected estimator. A null `options` uses the defaults.
 * On [`SabreStatus::NonConvergence`] the handle holds the last iterate and
 * must still be freed.
 *
 * # Safety
 * As for [`sabre_fit_smle`]; `options` must be null or readable.
 */
enum SabreStatus sabre_fit_sabre(const struct SabreModel *model,
                                 const struct SabreBasis *basis,
                                 const double *x,
                                 const double *z,
                                 const double *y,
                                 size_t n,
                                 size_t p,
                                 const struct SabreOptions *options,
                                 struct SabreFit **out);

/**
 * Number of linear coefficients, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t sabre_fit_p(const struct SabreFit *fit);

/**
 * Number of spline coefficients, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t sabre_fit_k(const struct SabreFit *fit);

/**
 * # Safety
 * `fit` must be a live handle and `out` must hold `len` writable values.
 */
enum SabreStatus sabre_fit_beta(const struct SabreFit *fit, double *out, size_t len);

/**
 * # Safety
 * `fit` must be a live handle and `out` must hold `len` writable values.
 */
enum SabreStatus sabre_fit_alpha(const struct SabreFit *fit, double *out, size_t len);

/**
 * # Safety
 * `fit` must be a live handle and `out` valid for a write.
 */
enum SabreStatus sabre_fit_phi(const struct SabreFit *fit, double *out);

/**
 * # Safety
 * `fit` must be null or a live handle.
 */
bool sabre_fit_converged(const struct SabreFit *fit);

/**
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t sabre_fit_iterations(const struct SabreFit *fit);

/**
 * Plug-in standard errors of β̂ from the profiled information.
 *
 * # Safety
 * `fit` must be a live handle and `out` must hold `len` writable values.
 */
enum SabreStatus sabre_fit_beta_se(const struct SabreFit *fit, double *out, size_t len);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void sabre_fit_free(struct SabreFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SABRE_H */
