#ifndef APSHARE_H
#define APSHARE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ApsStatus {
  APS_STATUS_OK = 0,
  APS_STATUS_NULL_POINTER = 1,
  APS_STATUS_INVALID_ARGUMENT = 2,
  APS_STATUS_INFEASIBLE = 3,
  APS_STATUS_NOT_CONVERGED = 4,
  APS_STATUS_IO = 5,
  APS_STATUS_PANIC = 6,
} ApsStatus;

// A network: gains, noise, budgets and optional per-channel power caps.
typedef struct ApsInstance ApsInstance;

// A power profile, one row per user.
typedef struct ApsProfile ApsProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes, excluding
// the terminator, so callers can size a second attempt.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t aps_last_error_message(char *buf, size_t len);

// Creates an instance from row-major `gain` (`n_users·n_channels`), `noise`
// (`n_channels`) and `budget` (`n_users`).
//
// # Safety
// Array arguments must point to the stated number of doubles; `out_instance` must be
// writable. The handle must be released with [`aps_instance_free`].
enum ApsStatus aps_instance_new(size_t n_users,
                                size_t n_channels,
                                const double *gain,
                                const double *noise,
                                const double *budget,
                                struct ApsInstance **out_instance);

// The two-user, two-channel example network with gains `[[1, 2], [1, 2]]`.
//
// # Safety
// `out_instance` must be writable.
enum ApsStatus aps_instance_example(struct ApsInstance **out_instance);

// Draws a random network with independent Rayleigh fading and the default
// geometry; `noise` is the per-channel noise power.
//
// # Safety
// `out_instance` must be writable.
enum ApsStatus aps_instance_generate(size_t n_users,
                                     size_t n_channels,
                                     double noise,
                                     uint64_t seed,
                                     struct ApsInstance **out_instance);

// Loads an instance from a TOML file.
//
// # Safety
// `path` must be a NUL-terminated UTF-8 string; `out_instance` writable.
enum ApsStatus aps_instance_load(const char *path, struct ApsInstance **out_instance);

// # Safety
// `instance` must be null or a handle from this library not yet freed.
void aps_instance_free(struct ApsInstance *instance);

// Number of users, or 0 for a null handle.
//
// # Safety
// `instance` must be null or a live handle.
size_t aps_instance_n_users(const struct ApsInstance *instance);

// Number of channels, or 0 for a null handle.
//
// # Safety
// `instance` must be null or a live handle.
size_t aps_instance_n_channels(const struct ApsInstance *instance);

// Creates a profile from row-major `data` (`n_users·n_channels`).
//
// # Safety
// `data` must point to the stated number of doubles; `out_profile` writable.
enum ApsStatus aps_profile_new(size_t n_users,
                               size_t n_channels,
                               const double *data,
                               struct ApsProfile **out_profile);

// Each user's budget spread evenly over the channels it may use.
//
// # Safety
// `instance` must be a live handle; `out_profile` writable.
enum ApsStatus aps_profile_uniform(const struct ApsInstance *instance,
                                   struct ApsProfile **out_profile);

// # Safety
// `profile` must be null or a handle from this library not yet freed.
void aps_profile_free(struct ApsProfile *profile);

// Copies the profile row-major into `buf`, which must hold exactly
// `n_users·n_channels` doubles.
//
// # Safety
// `profile` must be a live handle and `buf` point to `len` writable doubles.
enum ApsStatus aps_profile_read(const struct ApsProfile *profile, double *buf, size_t len);

// Potential `P(p)` in nats.
//
// # Safety
// Handles must be live; `out_value` writable.
enum ApsStatus aps_potential(const struct ApsInstance *instance,
                             const struct ApsProfile *profile,
                             double *out_value);

// Sum of the users' single-user-decoding rates in nats.
//
// # Safety
// Handles must be live; `out_value` writable.
enum ApsStatus aps_sum_rate(const struct ApsInstance *instance,
                            const struct ApsProfile *profile,
                            double *out_value);

// `‖Φ(p) − p‖_∞`; zero exactly at an equilibrium.
//
// # Safety
// Handles must be live; `out_value` writable.
enum ApsStatus aps_residual_inf(const struct ApsInstance *instance,
                                const struct ApsProfile *profile,
                                double *out_value);

// Water-filling over `n` channels with effective noise `effective_noise`
// (`n(k)/|h(k)|²` plus interference): writes the allocation to
// `out_allocation` (`n` doubles) and the water level to `out_level`
// (may be null).
//
// # Safety
// `effective_noise` and `out_allocation` must point to `n` doubles.
enum ApsStatus aps_water_fill(const double *effective_noise,
                              size_t n,
                              double budget,
                              double *out_allocation,
                              double *out_level);

// Certified maximum of the potential. Writes the value and the duality-gap
// bound; `out_profile` may be null, otherwise it receives the maximizer.
//
// # Safety
// `instance` must be live; non-null outputs must be writable.
enum ApsStatus aps_solve_max_potential(const struct ApsInstance *instance,
                                       double tol,
                                       double *out_value,
                                       double *out_gap_bound,
                                       struct ApsProfile **out_profile);

// Averaged iterative water-filling with steps `1/(t + 2)` for `max_iters`
// iterations from `start` (uniform when null).
//
// # Safety
// `instance` must be live, `start` null or live, `out_profile` writable.
enum ApsStatus aps_run_aiwf(const struct ApsInstance *instance,
                            const struct ApsProfile *start,
                            size_t max_iters,
                            struct ApsProfile **out_profile);

// Sequential iterative water-filling (round robin) until the residual drops
// to `residual_tol` or `max_iters` single-user updates have been made.
//
// # Safety
// `instance` must be live, `start` null or live, `out_profile` writable.
enum ApsStatus aps_run_siwf(const struct ApsInstance *instance,
                            const struct ApsProfile *start,
                            size_t max_iters,
                            double residual_tol,
                            struct ApsProfile **out_profile);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APSHARE_H */
