#ifndef CERTEQ_H
#define CERTEQ_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CqStatus {
  CQ_STATUS_OK = 0,
  CQ_STATUS_NULL_POINTER = 1,
  /**
   * Wrong dimensions, shapes or non-finite entries.
   */
  CQ_STATUS_INVALID_ARGUMENT = 2,
  CQ_STATUS_SINGULAR = 3,
  CQ_STATUS_CONVERGENCE = 4,
  CQ_STATUS_UNSTABLE = 5,
  CQ_STATUS_NOT_STABILIZABLE = 6,
  CQ_STATUS_NOT_DETECTABLE = 7,
  CQ_STATUS_NOT_CONTROLLABLE = 8,
  CQ_STATUS_DOMAIN = 9,
  CQ_STATUS_DIVERGED = 10,
  CQ_STATUS_INVALID_COST = 11,
  /**
   * The output buffer is shorter than the result; nothing was written.
   */
  CQ_STATUS_BUFFER_TOO_SMALL = 12,
  CQ_STATUS_PANIC = 13,
  CQ_STATUS_OTHER = 14,
} CqStatus;

/**
 * LQG plant with its optimal controller, computed on creation.
 */
typedef struct CqLqg CqLqg;

/**
 * Solution of the control Riccati equation.
 */
typedef struct CqSolution CqSolution;

/**
 * LQR instance: dynamics and quadratic costs.
 */
typedef struct CqSystem CqSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call on the same thread.
 */
const char *certeq_last_error(void);

/**
 * Library version as a static string.
 */
const char *certeq_version(void);

/**
 * Create a system from `A` (n×n), `B` (n×d), `Q` (n×n) and `R` (d×d).
 *
 * # Safety
 * The matrix pointers must reference arrays of the stated sizes and `out`
 * must be writable.
 */
enum CqStatus certeq_system_new(size_t n,
                                size_t d,
                                const double *a,
                                const double *b,
                                const double *q,
                                const double *r,
                                struct CqSystem **out);

/**
 * # Safety
 * `sys` must be null or a handle from [`certeq_system_new`] not yet freed.
 */
void certeq_system_free(struct CqSystem *sys);

/**
 * Solve the control Riccati equation of `sys`.
 *
 * # Safety
 * `sys` must be a live handle and `out` writable.
 */
enum CqStatus certeq_solve_dare(const struct CqSystem *sys, struct CqSolution **out);

/**
 * # Safety
 * `sol` must be null or a handle from [`certeq_solve_dare`] not yet freed.
 */
void certeq_solution_free(struct CqSolution *sol);

/**
 * Copy `P` (n×n) into `out`, which holds `len` doubles.
 *
 * # Safety
 * `sol` must be a live handle and `out` must hold `len` doubles.
 */
enum CqStatus certeq_solution_p(const struct CqSolution *sol, double *out, size_t len);

/**
 * Copy the gain `K` (d×n), with `u = K x`.
 *
 * # Safety
 * As [`certeq_solution_p`].
 */
enum CqStatus certeq_solution_k(const struct CqSolution *sol, double *out, size_t len);

/**
 * Residual of the Riccati equation at the returned `P`.
 *
 * # Safety
 * `sol` must be a live handle and `out` writable.
 */
enum CqStatus certeq_solution_residual(const struct CqSolution *sol, double *out);

/**
 * Average cost `J(K)` of the gain `k` (d×n) under noise `sigma_w² I`.
 *
 * # Safety
 * `sys` must be a live handle, `k` must hold d·n doubles and `out` be writable.
 */
enum CqStatus certeq_cost_of_gain(const struct CqSystem *sys,
                                  const double *k,
                                  double sigma_w,
                                  double *out);

/**
 * Suboptimality gap `J(K) - J(K⋆)` by the exact trace formula.
 *
 * # Safety
 * As [`certeq_cost_of_gain`].
 */
enum CqStatus certeq_exact_gap(const struct CqSystem *sys,
                               const double *k,
                               double sigma_w,
                               double *out);

/**
 * Spectral radius of the n×n matrix `m`.
 *
 * # Safety
 * `m` must hold n·n doubles and `out` be writable.
 */
enum CqStatus certeq_spectral_radius(const double *m, size_t n, double *out);

/**
 * `τ(M, ρ) = sup_k ‖M^k‖ ρ^(-k)` for `ρ(M) < ρ`.
 *
 * # Safety
 * As [`certeq_spectral_radius`].
 */
enum CqStatus certeq_tau(const double *m, size_t n, double rho, double *out);

/**
 * Create an LQG plant and solve for its optimal controller. Dimensions:
 * `A` n×n, `B` n×d, `C` p×n, `W` n×n, `V` p×p, `Q` p×p (output cost), `R` d×d.
 *
 * # Safety
 * The matrix pointers must reference arrays of the stated sizes and `out`
 * must be writable.
 */
enum CqStatus certeq_lqg_new(size_t n,
                             size_t d,
                             size_t p,
                             const double *a,
                             const double *b,
                             const double *c,
                             const double *w,
                             const double *v,
                             const double *q,
                             const double *r,
                             struct CqLqg **out);

/**
 * # Safety
 * `lqg` must be null or a handle from [`certeq_lqg_new`] not yet freed.
 */
void certeq_lqg_free(struct CqLqg *lqg);

/**
 * Optimal average cost `J⋆`.
 *
 * # Safety
 * `lqg` must be a live handle and `out` writable.
 */
enum CqStatus certeq_lqg_optimal_cost(const struct CqLqg *lqg, double *out);

/**
 * Copy the Kalman gain (n×p), used as `x̂' = A x̂ + B u + L (y - C x̂)`.
 *
 * # Safety
 * `lqg` must be a live handle and `out` must hold `len` doubles.
 */
enum CqStatus certeq_lqg_kalman_gain(const struct CqLqg *lqg, double *out, size_t len);

/**
 * Copy the optimal state-feedback gain (d×n).
 *
 * # Safety
 * As [`certeq_lqg_kalman_gain`].
 */
enum CqStatus certeq_lqg_control_gain(const struct CqLqg *lqg, double *out, size_t len);

/**
 * Exact cost of the observer-controller with matrices `a_hat` (n×n),
 * `b_hat` (n×d), `c_hat` (p×n), `k_hat` (d×n) and `l_hat` (n×p) on the plant.
 *
 * # Safety
 * The matrix pointers must reference arrays of the stated sizes and `out`
 * must be writable.
 */
enum CqStatus certeq_lqg_cost(const struct CqLqg *lqg,
                              const double *a_hat,
                              const double *b_hat,
                              const double *c_hat,
                              const double *k_hat,
                              const double *l_hat,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CERTEQ_H */
