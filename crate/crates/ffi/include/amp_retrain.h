#ifndef AMP_RETRAIN_H
#define AMP_RETRAIN_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum AmpStatus {
  AMP_STATUS_OK = 0,
  AMP_STATUS_NULL_POINTER = 1,
  AMP_STATUS_INVALID_ARGUMENT = 2,
  AMP_STATUS_NUMERICAL = 3,
  AMP_STATUS_IO = 4,
  AMP_STATUS_PARSE = 5,
  /**
   * A result that does not exist for these inputs (no root, no crossover).
   */
  AMP_STATUS_NOT_FOUND = 6,
  AMP_STATUS_BUFFER_TOO_SMALL = 7,
  AMP_STATUS_PANIC = 8,
} AmpStatus;

/**
 * Which η² map to evaluate.
 */
typedef enum AmpMapKind {
  AMP_MAP_KIND_OPTIMAL = 0,
  AMP_MAP_KIND_FULL_RETRAINING_LIMIT = 1,
  AMP_MAP_KIND_CONSENSUS_RETRAINING_LIMIT = 2,
} AmpMapKind;

typedef enum AmpLinkKind {
  AMP_LINK_KIND_SIGN = 0,
  AMP_LINK_KIND_LOGISTIC = 1,
  AMP_LINK_KIND_PROBIT = 2,
} AmpLinkKind;

/**
 * Linear model with binary response.
 */
typedef struct AmpGlmModel AmpGlmModel;

/**
 * Two-class Gaussian mixture model parameters.
 */
typedef struct AmpGmmModel AmpGmmModel;

/**
 * Fitted two-component mixture over logits.
 */
typedef struct AmpMixtureFit AmpMixtureFit;

/**
 * Plain copy of a fitted mixture.
 */
typedef struct AmpMixtureParams {
  double mu_plus;
  double mu_minus;
  double sigma_plus;
  double sigma_minus;
  double pi_plus;
  double loglik;
  uint64_t iterations;
  /**
   * Nonzero when a standard deviation was raised to the floor.
   */
  int32_t sigma_clamped;
} AmpMixtureParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. The pointer stays valid
 * until the next call on the same thread.
 */
const char *amp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *amp_version(void);

/**
 * Creates a mixture model; `n` is the sample count and d = round(alpha·n).
 * Pass n = 0 for theory-only use.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum AmpStatus amp_gmm_new(double gamma,
                           double alpha,
                           double p,
                           double pi_plus,
                           uint64_t n,
                           struct AmpGmmModel **out);

/**
 * # Safety
 * `model` must come from [`amp_gmm_new`] and not be used afterwards. Null is ignored.
 */
void amp_gmm_free(struct AmpGmmModel *model);

/**
 * One application of an η² map.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum AmpStatus amp_gmm_eta_map(const struct AmpGmmModel *model,
                               enum AmpMapKind kind,
                               double u,
                               double *out);

/**
 * Smallest positive crossing of the full- and consensus-retraining maps.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum AmpStatus amp_gmm_crossover(const struct AmpGmmModel *model, double *out);

/**
 * Flip threshold p* for signal strength `gamma` and ratio `alpha`.
 *
 * # Safety
 * `out` must be writable; `guaranteed` may be null.
 */
enum AmpStatus amp_p_star(double gamma, double alpha, double *out, int32_t *guaranteed);

/**
 * Predicted test error for t = 1..iterations under the optimal schedule.
 *
 * # Safety
 * `model` must be a live handle; `out` must hold `len` doubles.
 */
enum AmpStatus amp_gmm_se_errors(const struct AmpGmmModel *model,
                                 uint64_t iterations,
                                 double *out,
                                 uint64_t len);

/**
 * Test error of one simulated optimal-retraining run, for t = 1..iterations.
 * The model must have been created with n > 0.
 *
 * # Safety
 * `model` must be a live handle; `out` must hold `len` doubles.
 */
enum AmpStatus amp_gmm_run(const struct AmpGmmModel *model,
                           uint64_t iterations,
                           uint64_t seed,
                           uint64_t replication,
                           double *out,
                           uint64_t len);

/**
 * Creates a linear model. `link_scale` is ignored for the sign link.
 * Pass n = 0 for theory-only use.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum AmpStatus amp_glm_new(double gamma,
                           double alpha,
                           double p,
                           enum AmpLinkKind link,
                           double link_scale,
                           uint64_t n,
                           struct AmpGlmModel **out);

/**
 * # Safety
 * `model` must come from [`amp_glm_new`] and not be used afterwards. Null is ignored.
 */
void amp_glm_free(struct AmpGlmModel *model);

/**
 * Predicted test error for t = 1..iterations under the optimal schedule.
 *
 * # Safety
 * `model` must be a live handle; `out` must hold `len` doubles.
 */
enum AmpStatus amp_glm_se_errors(const struct AmpGlmModel *model,
                                 uint64_t iterations,
                                 double *out,
                                 uint64_t len);

/**
 * Fits a two-component mixture to `len` logits with default EM settings.
 *
 * # Safety
 * `logits` must point to `len` doubles; `out` must be writable.
 */
enum AmpStatus amp_mixture_fit(const double *logits, uint64_t len, struct AmpMixtureFit **out);

/**
 * # Safety
 * `fit` must be a live handle and `out` writable.
 */
enum AmpStatus amp_mixture_params(const struct AmpMixtureFit *fit, struct AmpMixtureParams *out);

/**
 * Soft targets for `len` (logit, noisy label) pairs at flip probability `p`.
 *
 * # Safety
 * `fit` must be a live handle; `logits`, `labels` and `out` must each hold `len` doubles.
 */
enum AmpStatus amp_mixture_targets(const struct AmpMixtureFit *fit,
                                   double p,
                                   const double *logits,
                                   const double *labels,
                                   uint64_t len,
                                   double *out);

/**
 * # Safety
 * `fit` must come from [`amp_mixture_fit`] and not be used afterwards. Null is ignored.
 */
void amp_mixture_free(struct AmpMixtureFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMP_RETRAIN_H */
