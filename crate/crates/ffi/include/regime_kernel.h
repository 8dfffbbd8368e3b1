#ifndef REGIME_KERNEL_H
#define REGIME_KERNEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RkStatus {
  RK_STATUS_OK = 0,
  RK_STATUS_NULL_POINTER = 1,
  RK_STATUS_INVALID_UTF8 = 2,
  RK_STATUS_INVALID_ARGUMENT = 3,
  RK_STATUS_INVALID_SCENARIO = 4,
  RK_STATUS_PARSE_ERROR = 5,
  RK_STATUS_IO = 6,
  RK_STATUS_PANIC = 7,
} RkStatus;

/**
 * Outcome of a run.
 */
typedef enum RkVerdict {
  RK_VERDICT_COMPLETED = 0,
  RK_VERDICT_COMPLETED_WITH_VIOLATIONS = 1,
  RK_VERDICT_TERMINATED = 2,
} RkVerdict;

/**
 * The report of a finished run.
 */
typedef struct RkRunReport RkRunReport;

/**
 * A validated scenario.
 */
typedef struct RkScenario RkScenario;

/**
 * A Horn theory.
 */
typedef struct RkTheory RkTheory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *rk_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library, freed once.
 */
void rk_string_free(char *s);

/**
 * Parses and validates a TOML scenario.
 *
 * # Safety
 * `toml` must be a valid nul-terminated string; `out` valid for one write.
 */
enum RkStatus rk_scenario_parse(const char *toml, struct RkScenario **out);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` must be a valid nul-terminated string; `out` valid for one write.
 */
enum RkStatus rk_scenario_load(const char *path, struct RkScenario **out);

/**
 * # Safety
 * `scenario` must be null or a handle from this library, freed once.
 */
void rk_scenario_free(struct RkScenario *scenario);

/**
 * Executes a scenario. A terminated run still succeeds with a report.
 *
 * # Safety
 * `scenario` must be a live handle; `out` valid for one write.
 */
enum RkStatus rk_run(const struct RkScenario *scenario, struct RkRunReport **out);

/**
 * # Safety
 * `report` must be null or a handle from this library, freed once.
 */
void rk_report_free(struct RkRunReport *report);

/**
 * Verdict of a run; `step` receives the termination step, or the horizon
 * for completed runs.
 *
 * # Safety
 * `report` must be a live handle; `verdict` and `step` valid for one write.
 */
enum RkStatus rk_report_verdict(const struct RkRunReport *report,
                                enum RkVerdict *verdict,
                                size_t *step);

/**
 * Number of step records in the report.
 *
 * # Safety
 * `report` must be a live handle; `out` valid for one write.
 */
enum RkStatus rk_report_len(const struct RkRunReport *report, size_t *out);

/**
 * Drift value `W_t` of record `index`; NaN when the regime has no anchor.
 *
 * # Safety
 * `report` must be a live handle; `out` valid for one write.
 */
enum RkStatus rk_report_w(const struct RkRunReport *report, size_t index, double *out);

/**
 * Serializes the report. `csv` selects CSV instead of JSON. Release the
 * result with [`rk_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out` valid for one write.
 */
enum RkStatus rk_report_serialize(const struct RkRunReport *report, bool csv, char **out);

/**
 * Parses a Horn theory, one clause per line (`a b -> c`, `-> fact`).
 *
 * # Safety
 * `source` must be a valid nul-terminated string; `out` valid for one write.
 */
enum RkStatus rk_theory_parse(const char *source, struct RkTheory **out);

/**
 * # Safety
 * `theory` must be null or a handle from this library, freed once.
 */
void rk_theory_free(struct RkTheory *theory);

/**
 * Decides whether the theory entails every atom of `goal` (space separated).
 *
 * # Safety
 * `theory` must be a live handle, `goal` a valid string, `out` valid for one write.
 */
enum RkStatus rk_theory_entails(const struct RkTheory *theory, const char *goal, bool *out);

/**
 * Closed-form drift bound after `n` steps with the given costs.
 *
 * # Safety
 * `costs` must be valid for `n` reads (or null when `n` is 0); `out` valid for one write.
 */
enum RkStatus rk_theorem_bound(double alpha,
                               double delta,
                               double beta,
                               double w0,
                               const double *costs,
                               size_t n,
                               double *out);

/**
 * Product and union lower bounds on chain success.
 *
 * # Safety
 * `deltas` must be valid for `n` reads (or null when `n` is 0); outputs valid for one write.
 */
enum RkStatus rk_pac_chain_bound(const double *deltas,
                                 size_t n,
                                 double *product,
                                 double *union_bound);

/**
 * `d · ln(1 + 2·diam·L/ε) + C`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum RkStatus rk_covering_bound(size_t dimension,
                                double diameter,
                                double resolution,
                                double transport_regularity,
                                double innovation,
                                double *out);

/**
 * `(1 + 1/ε)‖μ_src − μ_dst‖²` for anchors of length `dim`.
 *
 * # Safety
 * `mu_src` and `mu_dst` must be valid for `dim` reads; `out` valid for one write.
 */
enum RkStatus rk_transport_overhead(double eps,
                                    const double *mu_src,
                                    const double *mu_dst,
                                    size_t dim,
                                    double *out);

/**
 * Default Young-split parameter for contraction rate `alpha`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum RkStatus rk_default_epsilon(double alpha, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REGIME_KERNEL_H */
