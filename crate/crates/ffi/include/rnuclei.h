#ifndef RNUCLEI_H
#define RNUCLEI_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

/**
 * Statistics accepted by [`rn_estimate_moment`].
 */
typedef enum RnStatistic {
  RN_STATISTIC_X0 = 0,
  RN_STATISTIC_X1 = 1,
  /**
   * `X'_p` with exponent and cap passed separately.
   */
  RN_STATISTIC_XP_TRUNCATED = 2,
  RN_STATISTIC_DELTA_AT_ORIGIN = 3,
  RN_STATISTIC_INVERSE_DELTA_AT_ORIGIN = 4,
  RN_STATISTIC_CHARGE_PER_CELL = 5,
} RnStatistic;

/**
 * Status codes. Codes 2 to 4 match the command-line exit codes.
 */
typedef enum RnStatus {
  RN_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  RN_STATUS_NULL_ARGUMENT = 1,
  /**
   * A specification violates the schema.
   */
  RN_STATUS_SCHEMA = 2,
  /**
   * Invalid input or a failed numerical precondition.
   */
  RN_STATUS_NUMERICAL = 3,
  /**
   * File or CSV failure.
   */
  RN_STATUS_IO = 4,
  /**
   * A string argument is not valid UTF-8.
   */
  RN_STATUS_INVALID_UTF8 = 5,
  /**
   * An index is out of range.
   */
  RN_STATUS_OUT_OF_RANGE = 6,
  /**
   * The library panicked. This is a bug.
   */
  RN_STATUS_PANIC = 7,
} RnStatus;

/**
 * One sampled nuclear configuration.
 */
typedef struct RnConfiguration RnConfiguration;

/**
 * A measurable domain in space.
 */
typedef struct RnDomain RnDomain;

/**
 * A random nuclear model.
 */
typedef struct RnModel RnModel;

typedef struct RnMoment {
  double mean;
  double std_error;
  double ci_lo;
  double ci_hi;
  double level;
  uintptr_t replicas;
  uintptr_t truncated;
} RnMoment;

typedef struct RnEnergy {
  double kinetic;
  double boundary;
  double total;
  uintptr_t nuclei;
  uintptr_t collar_nuclei;
  uintptr_t on_top;
  bool truncated;
} RnEnergy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or an empty string. Valid until
 * the next call into the library from the same thread.
 */
const char *rn_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rn_version(void);

/**
 * Gaussian-perturbed cubic lattice with unit charges and standard deviation `sigma`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum RnStatus rn_model_gaussian(double sigma, struct RnModel **out);

/**
 * Model from a TOML table, e.g. `kind = "poisson"`, `intensity = 1`, `charge = { kind = "constant", z = 1 }`.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RnStatus rn_model_from_toml(const char *toml,
                                 struct RnModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void rn_model_free(struct RnModel *model);

/**
 * Mean charge per unit volume of the model.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum RnStatus rn_model_charge_density(const struct RnModel *model, double *out);

/**
 * Samples the nuclei falling in the box `[lo, hi)` expanded by `margin`.
 *
 * # Safety
 * `lo` and `hi` must point to three doubles, `model` must be live and `out` valid.
 */
enum RnStatus rn_model_sample(const struct RnModel *model,
                              const double *lo,
                              const double *hi,
                              double margin,
                              uint64_t seed,
                              struct RnConfiguration **out);

/**
 * # Safety
 * `config` must be null or a handle from this library not yet freed.
 */
void rn_configuration_free(struct RnConfiguration *config);

/**
 * Number of nuclei; 0 for a null handle.
 *
 * # Safety
 * `config` must be null or a live handle.
 */
uintptr_t rn_configuration_len(const struct RnConfiguration *config);

/**
 * Position and charge of nucleus `index`.
 *
 * # Safety
 * `config` must be live, `position` must point to three writable doubles and `charge` to one.
 */
enum RnStatus rn_configuration_nucleus(const struct RnConfiguration *config,
                                       uintptr_t index,
                                       double *position,
                                       double *charge);

/**
 * Union of `side^3` unit lattice cells `[-1/2, side - 1/2)^3`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RnStatus rn_domain_aligned_cube(uintptr_t side, struct RnDomain **out);

/**
 * Domain from a TOML table, e.g. `kind = "ball"` and `radius = 4`.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RnStatus rn_domain_from_toml(const char *toml, struct RnDomain **out);

/**
 * # Safety
 * `domain` must be null or a handle from this library not yet freed.
 */
void rn_domain_free(struct RnDomain *domain);

/**
 * # Safety
 * `domain` must be live and `out` valid.
 */
enum RnStatus rn_domain_volume(const struct RnDomain *domain, double *out);

/**
 * Signed distance to the boundary, negative inside.
 *
 * # Safety
 * `domain` must be live, `point` must point to three doubles and `out` be valid.
 */
enum RnStatus rn_domain_signed_distance(const struct RnDomain *domain,
                                        const double *point,
                                        double *out);

/**
 * # Safety
 * `domain` must be live, `point` must point to three doubles and `out` be valid.
 */
enum RnStatus rn_domain_contains(const struct RnDomain *domain, const double *point, bool *out);

/**
 * Monte Carlo estimate of `E[statistic^p]` at the origin cell over `replicas`
 * independent configurations. `xp` and `eps` are used by `XpTruncated` only.
 *
 * # Safety
 * `model` must be live and `out` valid.
 */
enum RnStatus rn_estimate_moment(const struct RnModel *model,
                                 enum RnStatistic statistic,
                                 double xp,
                                 double eps,
                                 double p,
                                 uintptr_t replicas,
                                 uint64_t seed,
                                 struct RnMoment *out);

/**
 * Proxy energy of the screened trial state of `config` restricted to `domain`.
 *
 * # Safety
 * `config` and `domain` must be live and `out` valid.
 */
enum RnStatus rn_trial_energy(const struct RnConfiguration *config,
                              const struct RnDomain *domain,
                              double cone_epsilon,
                              double c_kin,
                              struct RnEnergy *out);

/**
 * Pair Coulomb energy of `n` point charges; `positions` holds `3n` doubles.
 *
 * # Safety
 * `positions` must point to `3n` doubles, `charges` to `n` doubles and `out` be valid.
 */
enum RnStatus rn_coulomb_energy(const double *positions,
                                const double *charges,
                                uintptr_t n,
                                double *out);

/**
 * Pair Yukawa energy with screening mass `mass`.
 *
 * # Safety
 * As for [`rn_coulomb_energy`].
 */
enum RnStatus rn_yukawa_energy(const double *positions,
                               const double *charges,
                               uintptr_t n,
                               double mass,
                               double *out);

/**
 * Runs an experiment specification (TOML text) into `out_dir`. `threads = 0`
 * uses the default pool. On success `*manifest`, if non-null, receives the
 * manifest TOML, released with [`rn_string_free`].
 *
 * # Safety
 * `spec_toml` and `out_dir` must be NUL-terminated strings; `manifest` may be null.
 */
enum RnStatus rn_run_experiment(const char *spec_toml,
                                const char *out_dir,
                                uintptr_t threads,
                                char **manifest);

/**
 * Checks an experiment specification without running it. On schema failure the
 * error message lists every violation separated by `"; "`.
 *
 * # Safety
 * `spec_toml` must be a NUL-terminated string.
 */
enum RnStatus rn_validate_experiment(const char *spec_toml);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void rn_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RNUCLEI_H */
