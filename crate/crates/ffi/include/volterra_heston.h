#ifndef VOLTERRA_HESTON_H
#define VOLTERRA_HESTON_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes.
 */
typedef enum {
  VH_STATUS_OK = 0,
  VH_STATUS_NULL_POINTER = 1,
  VH_STATUS_DOMAIN = 2,
  VH_STATUS_NUMERICAL = 3,
  VH_STATUS_BLOWUP = 4,
  VH_STATUS_STATE = 5,
  VH_STATUS_CONFIG = 6,
  VH_STATUS_IO = 7,
  VH_STATUS_PANIC = 8,
} VhStatus;

/**
 * Opaque input-curve handle.
 */
typedef struct VhCurve VhCurve;

/**
 * Opaque kernel handle.
 */
typedef struct VhKernel VhKernel;

/**
 * Opaque set of simulated paths.
 */
typedef struct VhPathSet VhPathSet;

/**
 * Opaque call pricer.
 */
typedef struct VhPricer VhPricer;

/**
 * Model constants.
 */
typedef struct {
  double lambda;
  double nu;
  double rho;
  double s0;
} VhParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *vh_version(void);

/**
 * Copies the last error message of this thread into `buf` (nul-terminated,
 * truncated to `len`). Returns the full message length, 0 if none.
 *
 * # Safety
 * `buf` must point to `len` writable bytes or be null.
 */
size_t vh_last_error(char *buf, size_t len);

/**
 * `c t^{α−1}/Γ(α)`, `α ∈ (1/2, 1]`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
VhStatus vh_kernel_fractional(double c, double alpha, VhKernel **out);

/**
 * `c e^{−λt} t^{α−1}/Γ(α)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
VhStatus vh_kernel_gamma(double c, double alpha, double lambda, VhKernel **out);

/**
 * `Σ weights[i] e^{−rates[i] t}`.
 *
 * # Safety
 * `weights` and `rates` must hold `n` values; `out` must be valid.
 */
VhStatus vh_kernel_expsum(const double *weights, const double *rates, size_t n, VhKernel **out);

/**
 * # Safety
 * `k` must come from a `vh_kernel_*` constructor or be null.
 */
void vh_kernel_free(VhKernel *k);

/**
 * `K(t)`; `t = 0` on a singular kernel is a domain error.
 *
 * # Safety
 * Pointers must be valid.
 */
VhStatus vh_kernel_value(const VhKernel *k, double t, double *value);

/**
 * `g_0 ≡ v`.
 *
 * # Safety
 * `out` must be valid.
 */
VhStatus vh_curve_flat(double v, VhCurve **out);

/**
 * `g_0(t) = V_0 + λθ ∫_0^t K`.
 *
 * # Safety
 * Pointers must be valid.
 */
VhStatus vh_curve_classical(double v0,
                            double theta,
                            double lambda,
                            const VhKernel *k,
                            VhCurve **out);

/**
 * Piecewise-linear curve through `(times[i], values[i])`, flat outside.
 *
 * # Safety
 * `times` and `values` must hold `n` values; `out` must be valid.
 */
VhStatus vh_curve_tabulated(const double *times, const double *values, size_t n, VhCurve **out);

/**
 * # Safety
 * `c` must come from a `vh_curve_*` constructor or be null.
 */
void vh_curve_free(VhCurve *c);

/**
 * # Safety
 * Pointers must be valid.
 */
VhStatus vh_curve_eval(const VhCurve *c, double t, double *value);

/**
 * Admissibility check on the grid `(dt, horizon)` over its dyadic shift
 * ladder. `tol < 0` selects the default tolerance.
 *
 * # Safety
 * Pointers must be valid.
 */
VhStatus vh_curve_check(const VhCurve *c,
                        const VhKernel *k,
                        double dt,
                        double horizon,
                        double tol,
                        bool *pass,
                        double *worst);

/**
 * `E[exp(iz log S_T)]` with `T = horizon`.
 *
 * # Safety
 * Pointers must be valid.
 */
VhStatus vh_charfn(const VhKernel *k,
                   const VhParams *p,
                   const VhCurve *c,
                   double dt,
                   double horizon,
                   double z,
                   double *re,
                   double *im);

/**
 * Fourier pricer for maturity `horizon`, truncated for the given strikes.
 * `damping ≤ 0` selects the default contour.
 *
 * # Safety
 * `strikes` must hold `n` values; other pointers must be valid.
 */
VhStatus vh_pricer_new(const VhKernel *k,
                       const VhParams *p,
                       const VhCurve *c,
                       double dt,
                       double horizon,
                       const double *strikes,
                       size_t n,
                       double damping,
                       VhPricer **out);

/**
 * # Safety
 * Pointers must be valid.
 */
VhStatus vh_pricer_call(const VhPricer *p, double strike, double *price);

/**
 * # Safety
 * Pointers must be valid.
 */
VhStatus vh_pricer_put(const VhPricer *p, double strike, double *price);

/**
 * # Safety
 * `p` must come from [`vh_pricer_new`] or be null.
 */
void vh_pricer_free(VhPricer *p);

/**
 * Euler paths on `(dt, horizon)` with full storage. Output depends only on
 * `seed`, not on the thread count.
 *
 * # Safety
 * Pointers must be valid.
 */
VhStatus vh_simulate(const VhKernel *k,
                     const VhParams *p,
                     const VhCurve *c,
                     double dt,
                     double horizon,
                     size_t n_paths,
                     uint64_t seed,
                     VhPathSet **out);

/**
 * # Safety
 * Pointers must be valid.
 */
VhStatus vh_pathset_dims(const VhPathSet *ps, size_t *n_paths, size_t *n_steps);

/**
 * `V` and `log S` of path `i` at node `j`.
 *
 * # Safety
 * Pointers must be valid.
 */
VhStatus vh_pathset_value(const VhPathSet *ps, size_t i, size_t j, double *v, double *log_s);

/**
 * Writes the binary `VHPS` layout to `path`.
 *
 * # Safety
 * `path` must be a nul-terminated string.
 */
VhStatus vh_pathset_write(const VhPathSet *ps, const char *path);

/**
 * # Safety
 * `ps` must come from [`vh_simulate`] or be null.
 */
void vh_pathset_free(VhPathSet *ps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLTERRA_HESTON_H */
