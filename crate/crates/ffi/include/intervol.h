#ifndef INTERVOL_H
#define INTERVOL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum IvStatus {
  IV_STATUS_OK = 0,
  IV_STATUS_NULL_POINTER = 1,
  IV_STATUS_INVALID_ARGUMENT = 2,
  IV_STATUS_DOMAIN = 3,
  IV_STATUS_INSUFFICIENT_DATA = 4,
  IV_STATUS_SCORE_UNDEFINED = 5,
  IV_STATUS_FILTER_DIVERGED = 6,
  IV_STATUS_IO = 7,
  IV_STATUS_PARSE = 8,
  IV_STATUS_BUFFER_TOO_SMALL = 9,
  IV_STATUS_PANIC = 10,
} IvStatus;

/**
 * Estimates for one model on one day.
 */
typedef struct IvFit IvFit;

/**
 * A day of integer price changes.
 */
typedef struct IvSeries IvSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *iv_version(void);

/**
 * Copies the calling thread's last error message into `buf`.
 *
 * `required` receives the size including the terminating NUL. Returns
 * `BufferTooSmall` when `len` is short; the copy is then truncated.
 */
enum IvStatus iv_last_error_message(char *buf, size_t len, size_t *required);

/**
 * Creates a series of `n` changes stamped at `frequency`, `2 * frequency`, ...
 */
enum IvStatus iv_series_new(const char *day,
                            double frequency,
                            const int64_t *changes,
                            size_t n,
                            struct IvSeries **out);

/**
 * # Safety
 * `series` is null or a live handle from `iv_series_new` / `iv_simulate`.
 */
void iv_series_free(struct IvSeries *series);

enum IvStatus iv_series_len(const struct IvSeries *series, size_t *out);

/**
 * Copies up to `len` changes into `buf`.
 */
enum IvStatus iv_series_changes(const struct IvSeries *series, int64_t *buf, size_t len);

/**
 * Log probability that a normal (`nu <= 0`) or Student t variable rounds to `k`.
 */
enum IvStatus iv_interval_logprob(int64_t k, double mu, double sigma2, double nu, double *out);

/**
 * Skellam log pmf parameterized by mean and variance.
 */
enum IvStatus iv_skellam_logpmf(int64_t k, double mu, double sigma2, double *out);

/**
 * Average log-likelihood of `series` under `model` with the given parameters.
 */
enum IvStatus iv_loglik(const struct IvSeries *series,
                        const char *model_name,
                        const double *params,
                        size_t n_params,
                        double *out);

/**
 * Fits `model` to one day. `regime` may be null for the unbounded regime.
 */
enum IvStatus iv_fit(const struct IvSeries *series,
                     const char *model_name,
                     const char *regime,
                     struct IvFit **out);

/**
 * # Safety
 * `fit` is null or a live handle from `iv_fit`.
 */
void iv_fit_free(struct IvFit *fit);

enum IvStatus iv_fit_param_count(const struct IvFit *fit, size_t *out);

/**
 * Copies the estimates into `buf`, which must hold the parameter count.
 */
enum IvStatus iv_fit_params(const struct IvFit *fit, double *buf, size_t len);

/**
 * Name of parameter `i`; the string lives as long as the fit handle.
 */
enum IvStatus iv_fit_param_name(const struct IvFit *fit, size_t i, const char **out);

enum IvStatus iv_fit_loglik_avg(const struct IvFit *fit, double *out);

enum IvStatus iv_fit_converged(const struct IvFit *fit, bool *out);

/**
 * The fit serialized as JSON; release with [`iv_string_free`].
 */
enum IvStatus iv_fit_to_json(const struct IvFit *fit, char **out);

/**
 * # Safety
 * `s` is null or a string returned by this library.
 */
void iv_string_free(char *s);

/**
 * Simulates one day of `n` changes from `model`.
 */
enum IvStatus iv_simulate(const char *model_name,
                          const double *params,
                          size_t n_params,
                          size_t n,
                          uint64_t seed,
                          struct IvSeries **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* INTERVOL_H */
