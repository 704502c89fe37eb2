#ifndef LAMINA_H
#define LAMINA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum LaminaStatus {
  LaminaOk = 0,
  LaminaErrConfig = 1,
  LaminaErrSolver = 2,
  LaminaErrInvalidArg = 3,
  LaminaErrIo = 4,
  LaminaErrPanic = 5,
} LaminaStatus;

/**
 * Opaque common-atom demo report.
 */
typedef struct LaminaDemoReport LaminaDemoReport;

/**
 * Opaque validated experiment.
 */
typedef struct LaminaExperiment LaminaExperiment;

/**
 * Opaque convergence report.
 */
typedef struct LaminaReport LaminaReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version string (static storage, do not free).
 */
const char *lamina_version(void);

/**
 * Message of the last error on this thread (valid until the next call).
 */
const char *lamina_last_error(void);

/**
 * Parse and validate an experiment config from a TOML file.
 *
 * # Safety
 * `path` must be a valid C string; `out` a valid pointer slot.
 */
enum LaminaStatus lamina_experiment_from_file(const char *path, struct LaminaExperiment **out);

/**
 * Parse and validate an experiment config from a TOML string.
 *
 * # Safety
 * `text` must be a valid C string; `out` a valid pointer slot.
 */
enum LaminaStatus lamina_experiment_from_str(const char *text, struct LaminaExperiment **out);

/**
 * Load a built-in preset (E1, E2, E3, E4).
 *
 * # Safety
 * `name` must be a valid C string; `out` a valid pointer slot.
 */
enum LaminaStatus lamina_experiment_preset(const char *name, struct LaminaExperiment **out);

/**
 * # Safety
 * `exp` must come from a lamina constructor (or be null).
 */
void lamina_experiment_free(struct LaminaExperiment *exp);

/**
 * Run the convergence sweep of a validated experiment.
 *
 * # Safety
 * `exp` must be a live experiment handle; `out` a valid pointer slot.
 */
enum LaminaStatus lamina_run_convergence(const struct LaminaExperiment *exp,
                                         struct LaminaReport **out);

/**
 * # Safety
 * `report` must come from `lamina_run_convergence` (or be null).
 */
void lamina_report_free(struct LaminaReport *report);

/**
 * Number of sweep rows in a report.
 *
 * # Safety
 * `report` must be a live report handle.
 */
size_t lamina_report_rows(const struct LaminaReport *report);

/**
 * Read one row. Any output pointer may be null to skip that column.
 * Returns `LaminaErrInvalidArg` when the row index is out of range.
 *
 * # Safety
 * `report` must be a live report handle; non-null outputs must be valid.
 */
enum LaminaStatus lamina_report_row(const struct LaminaReport *report,
                                    size_t row,
                                    double *eps,
                                    double *h,
                                    double *l1_error,
                                    double *l2_error,
                                    double *energy_fine,
                                    double *energy_eff,
                                    size_t *iterations);

/**
 * Write the report as CSV (same schema as the CLI emits).
 *
 * # Safety
 * `report` must be a live report handle; `path` a valid C string.
 */
enum LaminaStatus lamina_report_write_csv(const struct LaminaReport *report, const char *path);

/**
 * Run the common-atom demo of a validated experiment.
 *
 * # Safety
 * `exp` must be a live experiment handle; `out` a valid pointer slot.
 */
enum LaminaStatus lamina_run_common_atom_demo(const struct LaminaExperiment *exp,
                                              struct LaminaDemoReport **out);

/**
 * # Safety
 * `report` must come from `lamina_run_common_atom_demo` (or be null).
 */
void lamina_demo_report_free(struct LaminaDemoReport *report);

/**
 * Number of demo rows.
 *
 * # Safety
 * `report` must be a live demo-report handle.
 */
size_t lamina_demo_rows(const struct LaminaDemoReport *report);

/**
 * Read one demo row (any output pointer may be null).
 *
 * # Safety
 * `report` must be a live demo-report handle; non-null outputs valid.
 */
enum LaminaStatus lamina_demo_row(const struct LaminaDemoReport *report,
                                  size_t row,
                                  double *eps,
                                  double *distance,
                                  double *cauchy_a,
                                  double *cauchy_b);

/**
 * Effective tensors of the heat law: `a` is the row-major `d x d`
 * conductivity; `a_perp` and `a_par` receive `d x d` row-major outputs and
 * `iface` the scalar spring coefficient `A_11`.
 *
 * # Safety
 * `a`, `a_perp`, `a_par` must point to `d*d` doubles; `iface` to one.
 */
enum LaminaStatus lamina_heat_effective(const double *a,
                                        size_t d,
                                        double *a_perp,
                                        double *a_par,
                                        double *iface);

/**
 * Closed-form 1-D limit solution for a measure with piecewise-constant
 * density and atoms, constant source `f`. Samples the solution at
 * `n_samples` points and returns the flux constant through `sigma0`.
 *
 * # Safety
 * Array arguments must match the advertised lengths; output buffers must
 * be writable.
 */
enum LaminaStatus lamina_solve_limit_1d(double length,
                                        const double *density_breaks,
                                        const double *densities,
                                        size_t n_pieces,
                                        const double *atom_locations,
                                        const double *atom_masses,
                                        size_t n_atoms,
                                        double f_value,
                                        const double *sample_points,
                                        double *samples_out,
                                        size_t n_samples,
                                        double *sigma0_out);

/**
 * Run the acceptance suite; returns the number of failed criteria
 * (0 means all pass) and prints one line per criterion to stdout.
 */
size_t lamina_verify(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAMINA_H */
