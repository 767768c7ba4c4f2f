#ifndef FABFLOW_H
#define FABFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Why an event was placed where it is.
 */
typedef enum FabEventReason {
  FAB_EVENT_REASON_INITIAL = 0,
  FAB_EVENT_REASON_THRESHOLD = 1,
  FAB_EVENT_REASON_MAX_INTERVAL = 2,
  FAB_EVENT_REASON_SAMPLED = 3,
  FAB_EVENT_REASON_CUSTOM = 4,
} FabEventReason;

/**
 * Result code of every fallible call.
 */
typedef enum FabStatus {
  FAB_STATUS_OK = 0,
  FAB_STATUS_NULL_POINTER = 1,
  FAB_STATUS_INVALID_UTF8 = 2,
  FAB_STATUS_CONFIG_ERROR = 3,
  FAB_STATUS_SOLVER_ERROR = 4,
  FAB_STATUS_OUT_OF_HORIZON = 5,
  FAB_STATUS_INVALID_ARGUMENT = 6,
  FAB_STATUS_PANIC = 7,
} FabStatus;

/**
 * A finished closed-loop simulation.
 */
typedef struct FabRun FabRun;

/**
 * Scenario description; see the JSON keys of the `fabflow` CLI.
 */
typedef struct FabScenario FabScenario;

/**
 * One control update. `gap` is NaN for the interval cut off by the horizon.
 */
typedef struct FabEvent {
  size_t index;
  double t_i;
  double u_i;
  double v_i;
  double w_i;
  double gap;
  enum FabEventReason reason;
} FabEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fab_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fab_version(void);

/**
 * Default scenario: hyperbolic speed, the reference initial profile, event-triggered.
 */
struct FabScenario *fab_scenario_new_default(void);

/**
 * Parses a JSON scenario; missing keys take their defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FabStatus fab_scenario_from_json(const char *json, struct FabScenario **out);

/**
 * # Safety
 * `scenario` must come from this library and not be used afterwards. NULL is ignored.
 */
void fab_scenario_free(struct FabScenario *scenario);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum FabStatus fab_scenario_set_sigma(struct FabScenario *scenario, double sigma);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum FabStatus fab_scenario_set_rho_s(struct FabScenario *scenario, double rho_s);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum FabStatus fab_scenario_set_t_end(struct FabScenario *scenario, double t_end);

/**
 * Selects the reference profile family member with parameter `l ≥ 0`.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum FabStatus fab_scenario_set_profile_l(struct FabScenario *scenario, double l);

/**
 * Event-triggered updates.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum FabStatus fab_scenario_set_event_triggered(struct FabScenario *scenario);

/**
 * Periodic updates every `period` time units.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum FabStatus fab_scenario_set_sampled(struct FabScenario *scenario, double period);

/**
 * Whether event gaps are capped at 1/λ(0).
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum FabStatus fab_scenario_set_gap_cap(struct FabScenario *scenario, bool enabled);

/**
 * Simulates the scenario over [0, t_end].
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum FabStatus fab_run(const struct FabScenario *scenario, struct FabRun **out);

/**
 * # Safety
 * `run` must come from [`fab_run`] and not be used afterwards. NULL is ignored.
 */
void fab_run_free(struct FabRun *run);

/**
 * Number of events including the one at t = 0; 0 for NULL.
 *
 * # Safety
 * `run` must be a live handle or NULL.
 */
size_t fab_run_event_count(const struct FabRun *run);

/**
 * Horizon of the run; NaN for NULL.
 *
 * # Safety
 * `run` must be a live handle or NULL.
 */
double fab_run_t_end(const struct FabRun *run);

/**
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum FabStatus fab_run_event(const struct FabRun *run, size_t index, struct FabEvent *out);

/**
 * W(t).
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum FabStatus fab_run_w_at(const struct FabRun *run, double t, double *out);

/**
 * ρ(t, x) for x in [0, 1].
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum FabStatus fab_run_density_at(const struct FabRun *run, double t, double x, double *out);

/**
 * λ(W(t))·ρ(t, 1).
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum FabStatus fab_run_outflux(const struct FabRun *run, double t, double *out);

/**
 * Lyapunov value V at time t.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum FabStatus fab_run_lyapunov(const struct FabRun *run, double t, double *out);

/**
 * Guaranteed dwell time for Lyapunov value `s`, decay rate `sigma`, speed
 * Lipschitz constant `k` and set point `rho_s`. NaN on invalid input.
 */
double fab_dwell_bound(double s, double sigma, double k, double rho_s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FABFLOW_H */
