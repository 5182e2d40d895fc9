#ifndef IRS_OUTAGE_H
#define IRS_OUTAGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum IrsStatus {
  IRS_STATUS_OK = 0,
  IRS_STATUS_NULL_POINTER = 1,
  IRS_STATUS_INVALID_ARGUMENT = 2,
  IRS_STATUS_CONFIG = 3,
  IRS_STATUS_SOLVER = 4,
  IRS_STATUS_BUFFER_TOO_SMALL = 5,
  IRS_STATUS_PANIC = 6,
} IrsStatus;

/**
 * Design scheme selector.
 */
typedef enum IrsScheme {
  IRS_SCHEME_PROPOSED = 0,
  IRS_SCHEME_RANDOM_IRS = 1,
  IRS_SCHEME_OPTIMIZED_MRT = 2,
  IRS_SCHEME_RANDOM_MRT = 3,
} IrsScheme;

/**
 * Optimizer outcome of a design.
 */
typedef enum IrsDesignStatus {
  IRS_DESIGN_STATUS_CONVERGED = 0,
  IRS_DESIGN_STATUS_MAX_ITERS = 1,
  IRS_DESIGN_STATUS_INFEASIBLE = 2,
} IrsDesignStatus;

/**
 * Channels and the design computed on them (opaque).
 */
typedef struct IrsDesign IrsDesign;

/**
 * Scenario parameters (opaque).
 */
typedef struct IrsScenario IrsScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call on the same thread.
 */
const char *irs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *irs_version(void);

/**
 * Creates a scenario with the default parameters.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum IrsStatus irs_scenario_new(struct IrsScenario **out);

/**
 * Creates a scenario from configuration-file text; a `[sweep]` section,
 * if present, is ignored.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum IrsStatus irs_scenario_from_config(const char *text, struct IrsScenario **out);

/**
 * Sets one scenario parameter using the configuration-file key names.
 *
 * # Safety
 * `scenario` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum IrsStatus irs_scenario_set(struct IrsScenario *scenario, const char *key, const char *value);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 * `scenario` must come from this library and not be used afterwards.
 */
void irs_scenario_free(struct IrsScenario *scenario);

/**
 * Draws the channels for `seed` and runs `scheme` on them. The result is
 * identical to the CLI cell with the same scenario, seed and scheme.
 *
 * # Safety
 * `scenario` must come from this library and `out` must be writable.
 */
enum IrsStatus irs_design_run(const struct IrsScenario *scenario,
                              enum IrsScheme scheme,
                              uint64_t seed,
                              struct IrsDesign **out);

/**
 * Releases a design. Null is ignored.
 *
 * # Safety
 * `design` must come from this library and not be used afterwards.
 */
void irs_design_free(struct IrsDesign *design);

/**
 * Optimizer outcome.
 *
 * # Safety
 * `design` must come from this library and `out` must be writable.
 */
enum IrsStatus irs_design_status(const struct IrsDesign *design, enum IrsDesignStatus *out);

/**
 * Transmitted power `||w||^2 + Tr(Z)` in watts.
 *
 * # Safety
 * `design` must come from this library and `out` must be writable.
 */
enum IrsStatus irs_design_power(const struct IrsDesign *design, double *out);

/**
 * Share of the transmitted power spent on artificial noise.
 *
 * # Safety
 * `design` must come from this library and `out` must be writable.
 */
enum IrsStatus irs_design_an_fraction(const struct IrsDesign *design, double *out);

/**
 * Number of covariance updates performed.
 *
 * # Safety
 * `design` must come from this library and `out` must be writable.
 */
enum IrsStatus irs_design_iterations(const struct IrsDesign *design, uintptr_t *out);

/**
 * Transmit antennas, IRS elements and Eves of the design's scenario.
 *
 * # Safety
 * `design` must come from this library; each output pointer may be null.
 */
enum IrsStatus irs_design_dims(const struct IrsDesign *design,
                               uintptr_t *n_t,
                               uintptr_t *m,
                               uintptr_t *k_eves);

/**
 * Beamformer `w` as interleaved (re, im) pairs, `2 N_t` values.
 *
 * # Safety
 * `design` must come from this library; `out` must hold `len` doubles;
 * `needed` may be null.
 */
enum IrsStatus irs_design_beamformer(const struct IrsDesign *design,
                                     double *out,
                                     uintptr_t len,
                                     uintptr_t *needed);

/**
 * IRS reflection coefficients as interleaved (re, im) pairs, `2 M` values.
 *
 * # Safety
 * `design` must come from this library; `out` must hold `len` doubles;
 * `needed` may be null.
 */
enum IrsStatus irs_design_phases(const struct IrsDesign *design,
                                 double *out,
                                 uintptr_t len,
                                 uintptr_t *needed);

/**
 * AN covariance, column-major, as interleaved (re, im) pairs, `2 N_t^2`
 * values.
 *
 * # Safety
 * `design` must come from this library; `out` must hold `len` doubles;
 * `needed` may be null.
 */
enum IrsStatus irs_design_an_covariance(const struct IrsDesign *design,
                                        double *out,
                                        uintptr_t len,
                                        uintptr_t *needed);

/**
 * Monte-Carlo secrecy outage per Eve (one value per Eve). `trials` must be
 * at least 1. The draws are the CLI validation stream for the design's
 * seed and scheme.
 *
 * # Safety
 * `design` must come from this library; `out` must hold `len` doubles;
 * `needed` may be null.
 */
enum IrsStatus irs_design_outage(const struct IrsDesign *design,
                                 uintptr_t trials,
                                 double *out,
                                 uintptr_t len,
                                 uintptr_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRS_OUTAGE_H */
