#ifndef JKOFLOW_H
#define JKOFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Congestion mode of [`JkoPointEnergy`].
 */
typedef enum {
  /**
   * `α·ρ <= 1`; the exponent is ignored.
   */
  JKO_CONGESTION_HARD = 0,
  /**
   * `(α·ρ)^m / (m - 1)`, or `z log z` for `m = 1`.
   */
  JKO_CONGESTION_POROUS = 1,
} JkoCongestion;

/**
 * Result of every call.
 */
typedef enum {
  JKO_STATUS_OK = 0,
  JKO_STATUS_INVALID_ARGUMENT = 1,
  JKO_STATUS_DOMAIN = 2,
  JKO_STATUS_SOLVER_FAILURE = 3,
  JKO_STATUS_STATE = 4,
  JKO_STATUS_CONFIG = 5,
  JKO_STATUS_IO = 6,
  JKO_STATUS_NULL_POINTER = 7,
  JKO_STATUS_PANIC = 8,
} JkoStatus;

/**
 * Opaque simulation handle.
 */
typedef struct JkoSimulation JkoSimulation;

/**
 * Per-step diagnostics.
 */
typedef struct {
  size_t step;
  double time;
  double mass1;
  double mass2;
  double energy;
  double dynamic_cost;
  double max_violation;
  double complementarity;
  double pressure_l1;
  double sup_sum;
  double fisher1;
  double fisher2;
  double congestion_dissipation;
  bool converged;
  size_t iterations;
  double primal;
  double dual;
} JkoDiagnostics;

/**
 * Pointwise energy parameters.
 */
typedef struct {
  double v1;
  double v2;
  double eps;
  JkoCongestion congestion;
  double m;
  double alpha1;
  double alpha2;
} JkoPointEnergy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a
 * successful call. Valid until the next call on the same thread.
 */
const char *jko_last_error_message(void);

/**
 * Creates a simulation from a named preset. Nonzero `nx` and `ny` override
 * the preset grid.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
JkoStatus jko_simulation_from_preset(const char *name, size_t nx, size_t ny, JkoSimulation **out);

/**
 * Creates a simulation from a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
JkoStatus jko_simulation_from_config(const char *path, JkoSimulation **out);

/**
 * Releases a simulation. NULL is ignored.
 *
 * # Safety
 * `sim` must come from a constructor of this library and not be used again.
 */
void jko_simulation_free(JkoSimulation *sim);

/**
 * Grid size of the simulation.
 *
 * # Safety
 * All pointers must be valid.
 */
JkoStatus jko_simulation_grid(const JkoSimulation *sim, size_t *nx, size_t *ny);

/**
 * Steps taken so far and the current time.
 *
 * # Safety
 * All pointers must be valid.
 */
JkoStatus jko_simulation_time(const JkoSimulation *sim, size_t *step, double *time);

/**
 * Diagnostics of the initial data.
 *
 * # Safety
 * All pointers must be valid.
 */
JkoStatus jko_simulation_initial_diagnostics(const JkoSimulation *sim, JkoDiagnostics *out);

/**
 * Takes one JKO step. `out` may be NULL.
 *
 * # Safety
 * `sim` must be a valid handle; `out` NULL or valid.
 */
JkoStatus jko_simulation_advance(JkoSimulation *sim, JkoDiagnostics *out);

/**
 * Copies the density of `species` (1 or 2) into `buf`, row-major with `x`
 * fastest. `len` must equal `nx * ny`.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
JkoStatus jko_simulation_density(const JkoSimulation *sim,
                                 uint32_t species,
                                 double *buf,
                                 size_t len);

/**
 * Copies the pressure into `buf` (same layout as densities).
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
JkoStatus jko_simulation_pressure(const JkoSimulation *sim, double *buf, size_t len);

/**
 * Writes the current snapshot (CSV and heatmaps) into `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string.
 */
JkoStatus jko_simulation_write_snapshot(const JkoSimulation *sim, const char *dir, double vmax);

/**
 * Pointwise proximal map: minimizes `e(ρ) + |ρ - s|²/2λ` and writes the
 * minimizer to `rho[0..2]` and the pressure to `pressure` (may be NULL).
 *
 * # Safety
 * `energy` must be valid and `rho` hold two doubles.
 */
JkoStatus jko_prox_density(double s1,
                           double s2,
                           double lambda,
                           const JkoPointEnergy *energy,
                           double *rho,
                           double *pressure);

/**
 * Projection of `(a, b1, b2)` onto `{a + ½|b|² <= 0}`, written to `out[0..3]`.
 *
 * # Safety
 * `out` must hold three doubles.
 */
JkoStatus jko_project_k(double a, double b1, double b2, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JKOFLOW_H */
