#ifndef FREQSEC_H
#define FREQSEC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum FreqsecStatus {
  FREQSEC_STATUS_OK = 0,
  FREQSEC_STATUS_NULL_POINTER = 1,
  FREQSEC_STATUS_INVALID_UTF8 = 2,
  FREQSEC_STATUS_PARSE = 3,
  FREQSEC_STATUS_INVALID_INPUT = 4,
  // The requirement cannot be met (e.g. no nadir because FR never covers the loss).
  FREQSEC_STATUS_INFEASIBLE = 5,
  // Solver trouble: numerical failure or node limit.
  FREQSEC_STATUS_SOLVER = 6,
  // A Rust panic was caught at the boundary.
  FREQSEC_STATUS_PANIC = 7,
} FreqsecStatus;

// Snapshot, requirements and optional chance model parsed from `system.json`.
typedef struct FreqsecSystem FreqsecSystem;

// Flat copy of a security assessment. Unavailable nadir quantities are NaN.
typedef struct FreqsecReport {
  bool secure;
  bool rocof_ok;
  bool steady_state_ok;
  bool nadir_ok;
  // Inertia margin of the RoCoF requirement (MW·s).
  double rocof_margin;
  // Total FR minus the loss (MW).
  double steady_state_margin;
  double nadir_time;
  double nadir_depth;
  double soc_slack_ratio;
} FreqsecReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parses and validates a `system.json` document into a new handle.
//
// # Safety
// `json` must be a NUL-terminated string and `out` valid for writes.
enum FreqsecStatus freqsec_system_from_json(const char *json, struct FreqsecSystem **out);

// Releases a handle; null is ignored.
//
// # Safety
// `system` must be null or a handle not yet freed.
void freqsec_system_free(struct FreqsecSystem *system);

// Assesses the RoCoF, steady-state and nadir requirements.
//
// # Safety
// `system` must be a live handle and `out` valid for writes.
enum FreqsecStatus freqsec_assess(const struct FreqsecSystem *system, struct FreqsecReport *out);

// Closed-form nadir instant (s), depth (Hz) and active interval index.
//
// # Safety
// `system` must be a live handle; the out pointers valid for writes.
enum FreqsecStatus freqsec_nadir(const struct FreqsecSystem *system,
                                 double *time,
                                 double *depth,
                                 size_t *interval);

// Magnitude of the RoCoF at the fault instant (Hz/s).
//
// # Safety
// `system` must be a live handle and `out` valid for writes.
enum FreqsecStatus freqsec_rocof(const struct FreqsecSystem *system, double *out);

// Frequency deviation at `t` seconds after the loss (Hz, negative below nominal).
//
// # Safety
// `system` must be a live handle and `out` valid for writes.
enum FreqsecStatus freqsec_delta_f(const struct FreqsecSystem *system, double t, double *out);

// Standard normal quantile for `p` in (0, 1).
//
// # Safety
// `out` must be valid for writes.
enum FreqsecStatus freqsec_normal_inv_cdf(double p, double *out);

// Solves a dispatch case given as JSON and returns the schedule as JSON in
// `*schedule`, to be released with [`freqsec_string_free`].
//
// # Safety
// `case_json` must be a NUL-terminated string and `schedule` valid for writes.
enum FreqsecStatus freqsec_optimize_json(const char *case_json, double gap, char **schedule);

// Releases a string returned by this library; null is ignored.
//
// # Safety
// `s` must be null or a string from this library not yet freed.
void freqsec_string_free(char *s);

// Library version as a static NUL-terminated string.
const char *freqsec_version(void);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call into the library from the same thread.
const char *freqsec_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FREQSEC_H */
