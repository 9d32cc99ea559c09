#ifndef LOWREG_H
#define LOWREG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum LowregStatus {
  LOWREG_STATUS_OK = 0,
  LOWREG_STATUS_NULL_POINTER = 1,
  LOWREG_STATUS_INVALID_UTF8 = 2,
  LOWREG_STATUS_EXPRESSION = 3,
  LOWREG_STATUS_CONFIG = 4,
  LOWREG_STATUS_INVALID_INPUT = 5,
  LOWREG_STATUS_RESOLUTION = 6,
  LOWREG_STATUS_SOLVER = 7,
  LOWREG_STATUS_UNCERTIFIED = 8,
  LOWREG_STATUS_IO = 9,
  LOWREG_STATUS_PANIC = 10,
} LowregStatus;

/**
 * Derivative mode.
 */
typedef enum LowregMode {
  LOWREG_MODE_ANALYTIC = 0,
  LOWREG_MODE_FD = 1,
} LowregMode;

/**
 * Pipeline run by [`lowreg_experiment_run`], one per CLI subcommand.
 */
typedef enum LowregCommand {
  LOWREG_COMMAND_CURVATURE = 0,
  LOWREG_COMMAND_WEAK_VERIFY = 1,
  LOWREG_COMMAND_MOLLIFY_CONVERGE = 2,
  LOWREG_COMMAND_GRADAPPROX = 3,
  LOWREG_COMMAND_HEAT_CHECK = 4,
  LOWREG_COMMAND_VOLUME_CHECK = 5,
} LowregCommand;

typedef enum LowregVerdict {
  LOWREG_VERDICT_PASS = 0,
  LOWREG_VERDICT_FAIL = 1,
} LowregVerdict;

/**
 * Validated experiment configuration.
 */
typedef struct LowregExperiment LowregExperiment;

/**
 * Parsed expression.
 */
typedef struct LowregExpr LowregExpr;

/**
 * Catalog model sampled on its default chart.
 */
typedef struct LowregModel LowregModel;

/**
 * Verdict and report lines of one pipeline run.
 */
typedef struct LowregOutcome LowregOutcome;

/**
 * Summary of a lower-bound sweep over the default test family.
 */
typedef struct LowregSweepSummary {
  size_t tests;
  /**
   * Tests whose deficit falls below minus the quadrature defect.
   */
  size_t failing;
  /**
   * Deficit and defect of the test with the smallest `deficit + defect`.
   */
  double worst_deficit;
  double worst_defect;
} LowregSweepSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lowreg_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call into the library on this
 * thread.
 */
const char *lowreg_last_error_message(void);

/**
 * Releases a string returned by the library.
 *
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void lowreg_string_free(char *s);

/**
 * Parses `source` over variables `x1..x{dim}`.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LowregStatus lowreg_expr_parse(const char *source, size_t dim, struct LowregExpr **out);

/**
 * Evaluates at `point[0..len]`.
 *
 * # Safety
 * `expr` must be a live handle, `point` must hold `len` doubles and `out`
 * must be valid.
 */
enum LowregStatus lowreg_expr_eval(const struct LowregExpr *expr,
                                   const double *point,
                                   size_t len,
                                   double *out);

/**
 * Symbolic partial derivative with respect to `x{var + 1}`.
 *
 * # Safety
 * `expr` must be a live handle and `out` valid.
 */
enum LowregStatus lowreg_expr_diff(const struct LowregExpr *expr,
                                   size_t var,
                                   struct LowregExpr **out);

/**
 * Canonical source text; release with [`lowreg_string_free`].
 *
 * # Safety
 * `expr` must be a live handle and `out` valid.
 */
enum LowregStatus lowreg_expr_to_string(const struct LowregExpr *expr, char **out);

/**
 * # Safety
 * `expr` must be NULL or a handle not yet freed.
 */
void lowreg_expr_free(struct LowregExpr *expr);

/**
 * Builds catalog model `name` on its default chart with `m` nodes per axis.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` valid.
 */
enum LowregStatus lowreg_model_new(const char *name, size_t m, struct LowregModel **out);

/**
 * Number of grid nodes (collar included).
 *
 * # Safety
 * `model` must be a live handle and `out` valid.
 */
enum LowregStatus lowreg_model_node_count(const struct LowregModel *model, size_t *out);

/**
 * Interior sup of `|Ric_(μ,∞) − κ g|` against the model's exact curvature,
 * skipping nodes next to kinks.
 *
 * # Safety
 * `model` must be a live handle and `out` valid.
 */
enum LowregStatus lowreg_model_ricci_deviation(const struct LowregModel *model,
                                               enum LowregMode m,
                                               double *out);

/**
 * Lower-bound deficits `Ric_(μ,N) ≥ K` over the default test family drawn
 * with `seed`. Pass `INFINITY` for `big_n` to drop the dimension term.
 *
 * # Safety
 * `model` must be a live handle and `out` valid.
 */
enum LowregStatus lowreg_model_lower_bound_sweep(const struct LowregModel *model,
                                                 double k,
                                                 double big_n,
                                                 uint64_t seed,
                                                 enum LowregMode m,
                                                 struct LowregSweepSummary *out);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void lowreg_model_free(struct LowregModel *model);

/**
 * Parses and validates a TOML experiment configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` valid.
 */
enum LowregStatus lowreg_experiment_from_toml(const char *toml, struct LowregExperiment **out);

/**
 * Reads, parses and validates a TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid.
 */
enum LowregStatus lowreg_experiment_from_path(const char *path, struct LowregExperiment **out);

/**
 * Runs one pipeline, writing its CSV files into `out_dir` (created if
 * missing). A FAIL verdict is a successful call; inspect the outcome.
 *
 * # Safety
 * `exp` must be a live handle, `out_dir` a NUL-terminated string and `out`
 * valid.
 */
enum LowregStatus lowreg_experiment_run(const struct LowregExperiment *exp,
                                        enum LowregCommand command,
                                        const char *out_dir,
                                        struct LowregOutcome **out);

/**
 * # Safety
 * `exp` must be NULL or a handle not yet freed.
 */
void lowreg_experiment_free(struct LowregExperiment *exp);

/**
 * # Safety
 * `outcome` must be a live handle and `out` valid.
 */
enum LowregStatus lowreg_outcome_verdict(const struct LowregOutcome *outcome,
                                         enum LowregVerdict *out);

/**
 * Number of report lines; 0 for NULL.
 *
 * # Safety
 * `outcome` must be NULL or a live handle.
 */
size_t lowreg_outcome_line_count(const struct LowregOutcome *outcome);

/**
 * Report line `index`, owned by the outcome; NULL when out of range.
 *
 * # Safety
 * `outcome` must be NULL or a live handle.
 */
const char *lowreg_outcome_line(const struct LowregOutcome *outcome, size_t index);

/**
 * # Safety
 * `outcome` must be NULL or a handle not yet freed.
 */
void lowreg_outcome_free(struct LowregOutcome *outcome);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOWREG_H */
