#ifndef CAPEIG_H
#define CAPEIG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CapeigStatus {
  CAPEIG_STATUS_OK = 0,
  CAPEIG_STATUS_NULL_POINTER = 1,
  CAPEIG_STATUS_INVALID_UTF8 = 2,
  CAPEIG_STATUS_INVALID_CONFIG = 3,
  CAPEIG_STATUS_INFEASIBLE = 4,
  CAPEIG_STATUS_NOT_CONVERGED = 5,
  CAPEIG_STATUS_BUFFER_TOO_SMALL = 6,
  CAPEIG_STATUS_OUT_OF_RANGE = 7,
  CAPEIG_STATUS_PANIC = 8,
} CapeigStatus;

typedef enum CapeigEigenStatus {
  CAPEIG_EIGEN_STATUS_FINITE = 0,
  CAPEIG_EIGEN_STATUS_INFEASIBLE = 1,
  CAPEIG_EIGEN_STATUS_UNRESOLVED = 2,
} CapeigEigenStatus;

// A measure, weights and solver settings on a grid.
typedef struct CapeigProblem CapeigProblem;

// Result of [`capeig_solve`].
typedef struct CapeigSpectrum CapeigSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *capeig_version(void);

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *capeig_last_error(void);

// Builds a problem from a JSON run configuration (the `grid`, `measure`,
// `weights`, `solver` and `seed` sections are used).
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum CapeigStatus capeig_problem_from_json(const char *json, struct CapeigProblem **out);

// Builds a problem on a `dim`-dimensional box with `n` cells per side,
// Lebesgue weight and per-cell potential `potential` (`n_cells` values,
// `INFINITY` blocks a cell; NULL means zero).
//
// # Safety
// `lengths` must hold `dim` values, `potential` (if not NULL) `n^dim`
// values, and `out` must be a valid pointer.
enum CapeigStatus capeig_problem_new(size_t dim,
                                     size_t n,
                                     const double *lengths,
                                     double p,
                                     const double *potential,
                                     struct CapeigProblem **out);

// # Safety
// `problem` must come from a constructor above and not be freed yet.
void capeig_problem_free(struct CapeigProblem *problem);

// Number of interior nodes, the length of every field.
//
// # Safety
// `problem` must be NULL or a live problem.
size_t capeig_problem_node_count(const struct CapeigProblem *problem);

// Computes `lambda_1..lambda_m_max`.
//
// # Safety
// `problem` must be a live problem and `out` a valid pointer.
enum CapeigStatus capeig_solve(const struct CapeigProblem *problem,
                               size_t m_max,
                               struct CapeigSpectrum **out);

// # Safety
// `spectrum` must come from [`capeig_solve`] and not be freed yet.
void capeig_spectrum_free(struct CapeigSpectrum *spectrum);

// # Safety
// `spectrum` must be NULL or a live spectrum.
size_t capeig_spectrum_len(const struct CapeigSpectrum *spectrum);

// Eigenvalue `index` (0-based); `INFINITY` when infeasible.
//
// # Safety
// `spectrum` must be a live spectrum and `out` a valid pointer.
enum CapeigStatus capeig_spectrum_lambda(const struct CapeigSpectrum *spectrum,
                                         size_t index,
                                         double *out);

// Relative residual of pair `index`; `NAN` when there is no eigenfield.
//
// # Safety
// `spectrum` must be a live spectrum and `out` a valid pointer.
enum CapeigStatus capeig_spectrum_residual(const struct CapeigSpectrum *spectrum,
                                           size_t index,
                                           double *out);

// # Safety
// `spectrum` must be a live spectrum and `out` a valid pointer.
enum CapeigStatus capeig_spectrum_status(const struct CapeigSpectrum *spectrum,
                                         size_t index,
                                         enum CapeigEigenStatus *out);

// Copies eigenfield `index` (nodal values) into `buf`.
//
// # Safety
// `spectrum` must be a live spectrum and `buf` must hold `len` doubles.
enum CapeigStatus capeig_spectrum_eigenfield(const struct CapeigSpectrum *spectrum,
                                             size_t index,
                                             double *buf,
                                             size_t len);

// Writes the torsion function of the problem's measure into `buf`.
//
// # Safety
// `problem` must be a live problem and `buf` must hold `len` doubles.
enum CapeigStatus capeig_torsion(const struct CapeigProblem *problem, double *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAPEIG_H */
