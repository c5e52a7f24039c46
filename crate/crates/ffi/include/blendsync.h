#ifndef BLENDSYNC_H
#define BLENDSYNC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BsStatus {
  BS_STATUS_OK = 0,
  BS_STATUS_NULL_POINTER = 1,
  BS_STATUS_INVALID_ARGUMENT = 2,
  // Malformed or inconsistent scenario.
  BS_STATUS_CONFIG = 3,
  // Integration blew up, a certificate was refused, or a factorization failed.
  BS_STATUS_NUMERICAL = 4,
  BS_STATUS_IO = 5,
  BS_STATUS_BUFFER_TOO_SMALL = 6,
  BS_STATUS_PANIC = 7,
} BsStatus;

typedef struct BsNetwork BsNetwork;

typedef struct BsScenario BsScenario;

typedef struct BsTrajectory BsTrajectory;

typedef struct BsNetworkInfo {
  size_t agent_count;
  size_t state_dim;
  // Dimension of the stacked network state.
  size_t total_dim;
  // Dimension of the shared coupled subspace.
  size_t shared_dim;
  // Dimension of the blended (slow) system.
  size_t blended_dim;
  double gain;
} BsNetworkInfo;

typedef struct BsSimOptions {
  double t0;
  double t1;
  double rel_tol;
  double abs_tol;
  // Maximum step, or the step for fixed-step integration; `<= 0` selects it
  // automatically.
  double max_step;
  // Nonzero for classical fixed-step Runge-Kutta.
  int fixed_step;
} BsSimOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null if none. The pointer
// stays valid until the next failing call on the same thread.
const char *bs_last_error(void);

// Library version as a static NUL-terminated string.
const char *bs_version(void);

// Parse and validate a JSON scenario.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum BsStatus bs_scenario_from_json(const char *json, struct BsScenario **out);

// # Safety
// `sc` must come from `bs_scenario_from_json` and not be used afterwards.
void bs_scenario_free(struct BsScenario *sc);

// Build the scenario's network with coupling gain `k`.
//
// # Safety
// `sc` must be a live scenario handle and `out` a writable pointer.
enum BsStatus bs_network_from_scenario(const struct BsScenario *sc,
                                       double k,
                                       struct BsNetwork **out);

// # Safety
// `net` must come from `bs_network_from_scenario` and not be used afterwards.
void bs_network_free(struct BsNetwork *net);

// # Safety
// `net` must be a live network handle and `info` a writable pointer.
enum BsStatus bs_network_info(const struct BsNetwork *net, struct BsNetworkInfo *info);

// Copy the coordinate change and its inverse, both `total_dim × total_dim`
// row-major. Either output may be null to skip it.
//
// # Safety
// Non-null buffers must hold `capacity` doubles.
enum BsStatus bs_network_transform(const struct BsNetwork *net,
                                   double *forward,
                                   double *inverse,
                                   size_t capacity);

// Network right-hand side at `(t, x)`.
//
// # Safety
// `x` and `dx` must hold `len` doubles, with `len` the total dimension.
enum BsStatus bs_network_rhs(const struct BsNetwork *net,
                             double t,
                             const double *x,
                             double *dx,
                             size_t len);

// Defaults: `[0, 1]`, tolerances `1e-8`/`1e-10`, adaptive stepping.
struct BsSimOptions bs_sim_options_default(void);

// Integrate the network from `x0`.
//
// # Safety
// `x0` must hold `len` doubles; `net`, `opts` and `out` must be valid.
enum BsStatus bs_network_simulate(const struct BsNetwork *net,
                                  const double *x0,
                                  size_t len,
                                  const struct BsSimOptions *opts,
                                  struct BsTrajectory **out);

// Integrate the blended system started from the projection of `x0` and
// return the reconstructed per-agent limiting solution.
//
// # Safety
// Same requirements as [`bs_network_simulate`].
enum BsStatus bs_network_limiting(const struct BsNetwork *net,
                                  const double *x0,
                                  size_t len,
                                  const struct BsSimOptions *opts,
                                  struct BsTrajectory **out);

// # Safety
// `tr` must come from a simulate call and not be used afterwards.
void bs_trajectory_free(struct BsTrajectory *tr);

// Number of samples and state dimension.
//
// # Safety
// `tr` must be live; the outputs must be writable or null.
enum BsStatus bs_trajectory_shape(const struct BsTrajectory *tr, size_t *samples, size_t *dim);

// Copy the sample times.
//
// # Safety
// `buf` must hold `capacity` doubles.
enum BsStatus bs_trajectory_times(const struct BsTrajectory *tr, double *buf, size_t capacity);

// Copy the states, one row of `dim` values per sample.
//
// # Safety
// `buf` must hold `capacity` doubles.
enum BsStatus bs_trajectory_states(const struct BsTrajectory *tr, double *buf, size_t capacity);

// Run the command-line tool in-process and return its exit status.
//
// # Safety
// `argv` must point to `argc` NUL-terminated strings.
int bs_run_cli(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLENDSYNC_H */
