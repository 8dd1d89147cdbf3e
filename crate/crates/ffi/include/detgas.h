#ifndef DETGAS_H
#define DETGAS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DetgasStatus {
  DETGAS_STATUS_OK = 0,
  DETGAS_STATUS_NULL_POINTER = 1,
  DETGAS_STATUS_INVALID_ARGUMENT = 2,
  DETGAS_STATUS_CONFIG_ERROR = 3,
  DETGAS_STATUS_NUMERICAL_FAILURE = 4,
  DETGAS_STATUS_MISSING_INPUT = 5,
  DETGAS_STATUS_BUFFER_TOO_SMALL = 6,
  DETGAS_STATUS_PANIC = 7,
  DETGAS_STATUS_OTHER = 8,
} DetgasStatus;

/*
 A compact set with its weight.
 */
typedef struct DetgasDomain DetgasDomain;

/*
 An ensemble of degree `p` and inverse temperature `beta` for the uniform
 base measure, with a basis orthonormalized for it.
 */
typedef struct DetgasEnsemble DetgasEnsemble;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Last error message on this thread, or NULL. Valid until the next call on this thread.
 */
const char *detgas_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *detgas_version(void);

/*
 Box `prod [lower_i, upper_i]` in R^dim with `phi = quadratic_a |x|^2`.

 # Safety
 `lower` and `upper` must point to `dim` doubles; `out` must be writable.
 */
enum DetgasStatus detgas_domain_box(size_t dim,
                                    const double *lower,
                                    const double *upper,
                                    double quadratic_a,
                                    struct DetgasDomain **out);

/*
 Full sphere S^dim (dim = 1 or 2) with `phi = 0`.

 # Safety
 `out` must be writable.
 */
enum DetgasStatus detgas_domain_sphere(size_t dim, struct DetgasDomain **out);

/*
 Domain of a complete experiment config given as TOML text.

 # Safety
 `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum DetgasStatus detgas_domain_from_config(const char *toml, struct DetgasDomain **out);

/*
 Number of coordinates of a point of the domain.

 # Safety
 `domain` must be a live handle or NULL.
 */
size_t detgas_domain_coord_dim(const struct DetgasDomain *domain);

/*
 # Safety
 `domain` must come from a `detgas_domain_*` constructor and not be used afterwards.
 */
void detgas_domain_free(struct DetgasDomain *domain);

/*
 Builds the degree-`p` ensemble with inverse temperature `beta` over the
 uniform measure of `domain`.

 # Safety
 `domain` must be a live handle; `out` must be writable.
 */
enum DetgasStatus detgas_ensemble_new(const struct DetgasDomain *domain,
                                      size_t p,
                                      double beta,
                                      struct DetgasEnsemble **out);

/*
 `N_p`, the number of points of a configuration (0 for NULL).

 # Safety
 `ens` must be a live handle or NULL.
 */
size_t detgas_ensemble_n(const struct DetgasEnsemble *ens);

/*
 # Safety
 `ens` must come from [`detgas_ensemble_new`] and not be used afterwards.
 */
void detgas_ensemble_free(struct DetgasEnsemble *ens);

/*
 `log|det|` of the weighted evaluation matrix at `N_p` points (`-inf` when singular).

 # Safety
 `points` must hold `N_p * coord_dim` doubles; `out_logdet` must be writable.
 */
enum DetgasStatus detgas_logdet(const struct DetgasEnsemble *ens,
                                const double *points,
                                double *out_logdet);

/*
 Bergman function `rho_p(x)`.

 # Safety
 `x` must hold `coord_dim` doubles; `out` must be writable.
 */
enum DetgasStatus detgas_bergman(const struct DetgasEnsemble *ens, const double *x, double *out);

/*
 Approximate Fekete configuration written to `out_points` (`N_p * coord_dim` doubles).
 `grid_res = 0` selects 256 on curves and 32 otherwise.

 # Safety
 `out_points` must hold `capacity` doubles; `out_logdet` may be NULL.
 */
enum DetgasStatus detgas_fekete(const struct DetgasEnsemble *ens,
                                uint64_t seed,
                                size_t grid_res,
                                double *out_points,
                                size_t capacity,
                                double *out_logdet);

/*
 `keep` configurations of an MCMC chain started from `init` (`N_p * coord_dim`
 doubles), written consecutively to `out_points`. Zero `burn_in` or `thin`
 select the defaults `50 N_p^2` and `N_p`. `out_acceptance` may be NULL.

 # Safety
 Buffers must have the stated sizes.
 */
enum DetgasStatus detgas_sample_mcmc(const struct DetgasEnsemble *ens,
                                     const double *init,
                                     uint64_t seed,
                                     uint64_t stream,
                                     size_t burn_in,
                                     size_t thin,
                                     size_t keep,
                                     double *out_points,
                                     size_t capacity,
                                     double *out_acceptance);

/*
 One exact sample of a `beta = 2` ensemble.

 # Safety
 `out_points` must hold `capacity` doubles.
 */
enum DetgasStatus detgas_sample_dpp(const struct DetgasEnsemble *ens,
                                    uint64_t seed,
                                    double *out_points,
                                    size_t capacity);

/*
 Runs a harness command (`fekete`, `sample`, `ldp` or `diag`) on a config
 file. `out_dir` may be NULL to use the config's directory; the seed
 overrides the config's when `has_seed` is nonzero. `out_exit_code`, if not
 NULL, receives the command-line exit code.

 # Safety
 Strings must be NUL-terminated.
 */
enum DetgasStatus detgas_run_command(const char *command,
                                     const char *config_path,
                                     const char *out_dir,
                                     int32_t has_seed,
                                     uint64_t seed,
                                     size_t workers,
                                     int32_t *out_exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DETGAS_H */
