#ifndef IFE_H
#define IFE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IfeStatus {
  IFE_STATUS_OK = 0,
  IFE_STATUS_NULL_POINTER = 1,
  IFE_STATUS_INVALID_UTF8 = 2,
  IFE_STATUS_PARSE = 3,
  IFE_STATUS_INVALID_MODEL = 4,
  IFE_STATUS_NOT_INVARIANT = 5,
  IFE_STATUS_INVALID_CONTROLLER = 6,
  IFE_STATUS_BUDGET = 7,
  IFE_STATUS_DOMAIN = 8,
  IFE_STATUS_PANIC = 9,
} IfeStatus;

// A coder-controller bound to the system it was loaded against.
typedef struct IfeController IfeController;

// A loaded system with its target set.
typedef struct IfeSystem IfeSystem;

typedef struct IfeEntropy {
  // Upper bound on the invariance entropy; infinity when Q is not invariant.
  double ub;
  // Horizon attaining `ub`, 0 when infinite.
  uint32_t tau;
  bool exact;
} IfeEntropy;

typedef struct IfeRates {
  double rate;
  double window_rate;
  double block_rate;
  double time_varying_rate;
  bool admissible;
} IfeRates;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *ife_last_error(void);

// Library version as a static string.
const char *ife_version(void);

// Parses a system file.
//
// # Safety
// `json` must be a nul-terminated string and `out` a writable pointer.
enum IfeStatus ife_system_from_json(const char *json, struct IfeSystem **out);

// # Safety
// `sys` must be null or a handle from [`ife_system_from_json`] not yet freed.
void ife_system_free(struct IfeSystem *sys);

// # Safety
// `sys` must be a live handle.
size_t ife_system_num_states(const struct IfeSystem *sys);

// # Safety
// `sys` must be a live handle and `out` writable.
enum IfeStatus ife_system_is_controlled_invariant(const struct IfeSystem *sys, bool *out);

// Upper bound on the invariance entropy over horizons `1..=tau_max`.
//
// # Safety
// `sys` must be a live handle and `out` writable.
enum IfeStatus ife_entropy(const struct IfeSystem *sys, uint32_t tau_max, struct IfeEntropy *out);

// Parses a controller file against `sys`.
//
// # Safety
// `sys` must be a live handle, `json` a nul-terminated string, `out` writable.
enum IfeStatus ife_controller_from_json(const struct IfeSystem *sys,
                                        const char *json,
                                        struct IfeController **out);

// # Safety
// `ctrl` must be null or a handle from [`ife_controller_from_json`] not yet freed.
void ife_controller_free(struct IfeController *ctrl);

// Data rates of `ctrl` in closed loop with `sys`.
//
// # Safety
// Both handles must be live and `out` writable.
enum IfeStatus ife_datarate(const struct IfeSystem *sys,
                            const struct IfeController *ctrl,
                            struct IfeRates *out);

// Entropy and static-rate lower bounds for an uncertain linear system.
// Rationals are passed as strings such as `"1/2"` or `"0.75"`.
//
// # Safety
// String arguments must be nul-terminated; outputs writable.
enum IfeStatus ife_linear_bound(uint32_t n,
                                const char *abs_det,
                                const char *mu_q,
                                const char *mu_w,
                                double *out_entropy,
                                double *out_static);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IFE_H */
