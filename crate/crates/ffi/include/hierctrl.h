#ifndef HIERCTRL_H
#define HIERCTRL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every entry point.
typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_POINTER = 1,
  HC_STATUS_INVALID_UTF8 = 2,
  // Malformed problem JSON.
  HC_STATUS_PARSE_ERROR = 3,
  // Well-formed input violating a constraint.
  HC_STATUS_VALIDATION_ERROR = 4,
  // A solver failed (no convergence, singular or non-finite values).
  HC_STATUS_SOLVER_ERROR = 5,
  HC_STATUS_INVALID_ARGUMENT = 6,
  // The caller's buffer is too short; the required length was written.
  HC_STATUS_BUFFER_TOO_SMALL = 7,
  // A panic was caught; the handle involved should be freed.
  HC_STATUS_PANIC = 8,
} HcStatus;

// Outcome of one leader run.
typedef struct HcHumResult HcHumResult;

// A validated problem.
typedef struct HcProblem HcProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parse and validate a problem from a NUL-terminated JSON string.
//
// On success `*out` receives a handle to release with [`hc_problem_free`].
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` writable.
enum HcStatus hc_problem_from_json(const char *json, struct HcProblem **out);

// Release a problem handle; null is ignored.
//
// # Safety
// `problem` must be null or a handle from [`hc_problem_from_json`] not yet freed.
void hc_problem_free(struct HcProblem *problem);

// Number of spatial unknowns per component.
//
// # Safety
// `problem` must be a live handle and `out` writable.
enum HcStatus hc_problem_n_nodes(const struct HcProblem *problem, size_t *out);

// Resolved follower penalties `μ₁, μ₂` into `out[0..2]`.
//
// # Safety
// `problem` must be a live handle and `out` point to two writable doubles.
enum HcStatus hc_problem_mu(const struct HcProblem *problem, double *out);

// Leader control by HUM with penalty `epsilon`, followers at equilibrium.
//
// # Safety
// `problem` must be a live handle and `out` writable.
enum HcStatus hc_control_run(const struct HcProblem *problem,
                             double epsilon,
                             struct HcHumResult **out);

// Release a result handle; null is ignored.
//
// # Safety
// `result` must be null or a handle from [`hc_control_run`] not yet freed.
void hc_hum_result_free(struct HcHumResult *result);

// Penalty the result was computed with.
//
// # Safety
// `result` must be a live handle and `out` writable.
enum HcStatus hc_hum_result_epsilon(const struct HcHumResult *result, double *out);

// `‖y(T)‖` under the computed controls.
//
// # Safety
// `result` must be a live handle and `out` writable.
enum HcStatus hc_hum_result_terminal_norm(const struct HcHumResult *result, double *out);

// `‖y(T)‖` without leader control.
//
// # Safety
// `result` must be a live handle and `out` writable.
enum HcStatus hc_hum_result_free_terminal_norm(const struct HcHumResult *result, double *out);

// Half the squared norm of the leader control.
//
// # Safety
// `result` must be a live handle and `out` writable.
enum HcStatus hc_hum_result_leader_cost(const struct HcHumResult *result, double *out);

// Normalised gap of the duality identity at the minimiser.
//
// # Safety
// `result` must be a live handle and `out` writable.
enum HcStatus hc_hum_result_duality_residual(const struct HcHumResult *result, double *out);

// Conjugate gradient iterations.
//
// # Safety
// `result` must be a live handle and `out` writable.
enum HcStatus hc_hum_result_cg_iterations(const struct HcHumResult *result, size_t *out);

// 1 when CG reached its tolerance, else 0.
//
// # Safety
// `result` must be a live handle and `out` writable.
enum HcStatus hc_hum_result_converged(const struct HcHumResult *result, int32_t *out);

// Component `component` (0 or 1) of the minimiser `ψ̂^T`, nodal values.
//
// `*written` always receives the required length; pass `len = 0` to query it.
//
// # Safety
// `result` must be a live handle, `buf` writable for `len` doubles and
// `written` writable.
enum HcStatus hc_hum_result_psi_terminal(const struct HcHumResult *result,
                                         size_t component,
                                         double *buf,
                                         size_t len,
                                         size_t *written);

// Component `component` of the controlled terminal state `y(T)`.
//
// # Safety
// As for [`hc_hum_result_psi_terminal`].
enum HcStatus hc_hum_result_terminal_state(const struct HcHumResult *result,
                                           size_t component,
                                           double *buf,
                                           size_t len,
                                           size_t *written);

// The full result summary as a JSON string; release it with [`hc_string_free`].
//
// # Safety
// `result` must be a live handle and `out` writable.
enum HcStatus hc_hum_result_to_json(const struct HcHumResult *result, char **out);

// Release a string returned by this library; null is ignored.
//
// # Safety
// `s` must be null or a string from [`hc_hum_result_to_json`] not yet freed.
void hc_string_free(char *s);

// Message of the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *hc_last_error_message(void);

// Library version, a static NUL-terminated string.
const char *hc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HIERCTRL_H */
