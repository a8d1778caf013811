#ifndef EITLAB_H
#define EITLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum EitlabStatus {
  EITLAB_STATUS_OK = 0,
  EITLAB_STATUS_NULL_POINTER = 1,
  EITLAB_STATUS_INVALID_ARGUMENT = 2,
  EITLAB_STATUS_DOMAIN = 3,
  EITLAB_STATUS_SINGULARITY = 4,
  EITLAB_STATUS_ON_INTERFACE = 5,
  EITLAB_STATUS_NOT_SPD = 6,
  EITLAB_STATUS_IO = 7,
  EITLAB_STATUS_PARSE = 8,
  EITLAB_STATUS_BUFFER_TOO_SMALL = 9,
  EITLAB_STATUS_INTERNAL = 10,
} EitlabStatus;

/**
 * Side of the interface `{x3 = 0}` a gradient is taken on.
 */
typedef enum EitlabSide {
  /**
   * Side of the evaluation point; fails on the interface.
   */
  EITLAB_SIDE_AUTO = 0,
  EITLAB_SIDE_UPPER = 1,
  EITLAB_SIDE_LOWER = 2,
} EitlabSide;

typedef enum EitlabBranch {
  EITLAB_BRANCH_TRIVIAL = 0,
  EITLAB_BRANCH_RECURSION = 1,
} EitlabBranch;

/**
 * Anisotropic two-phase kernel for `γ A0` with contrast `k`.
 */
typedef struct EitlabAnisoKernel EitlabAnisoKernel;

/**
 * Labeled tetrahedral mesh.
 */
typedef struct EitlabMesh EitlabMesh;

/**
 * Isotropic two-phase kernel, contrast `k` above `{x3 = 0}`.
 */
typedef struct EitlabTwoPhaseKernel EitlabTwoPhaseKernel;

/**
 * Inputs of the `δ_k` recursion. `iterates == 0` selects `K²`.
 */
typedef struct EitlabBudgetInputs {
  double epsilon;
  double e;
  double c;
  uintptr_t k;
  uintptr_t n;
  uintptr_t iterates;
} EitlabBudgetInputs;

typedef struct EitlabBudgetResult {
  double final_bound;
  double lipschitz_constant;
  enum EitlabBranch branch;
  /**
   * Length of the `δ` sequence, `K + 1`.
   */
  uintptr_t delta_len;
} EitlabBudgetResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Owned by the library.
 */
const char *eitlab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *eitlab_version(void);

/**
 * Newtonian potential `Γ(x, y)`.
 *
 * # Safety
 * `x`, `y` point to 3 doubles; `out` is writable.
 */
enum EitlabStatus eitlab_laplace_eval(const double *x, const double *y, double *out);

/**
 * `∇_x Γ(x, y)`.
 *
 * # Safety
 * `x`, `y` point to 3 doubles; `out` to 3 writable doubles.
 */
enum EitlabStatus eitlab_laplace_grad(const double *x, const double *y, double *out);

/**
 * # Safety
 * `out` is writable; the handle is released with [`eitlab_two_phase_free`].
 */
enum EitlabStatus eitlab_two_phase_new(double k, struct EitlabTwoPhaseKernel **out);

/**
 * # Safety
 * `h` comes from [`eitlab_two_phase_new`]; points are 3 doubles.
 */
enum EitlabStatus eitlab_two_phase_eval(const struct EitlabTwoPhaseKernel *h,
                                        const double *xi,
                                        const double *eta,
                                        double *out);

/**
 * # Safety
 * As [`eitlab_two_phase_eval`]; `out` holds 3 doubles.
 */
enum EitlabStatus eitlab_two_phase_grad(const struct EitlabTwoPhaseKernel *h,
                                        const double *xi,
                                        const double *eta,
                                        enum EitlabSide s,
                                        double *out);

/**
 * # Safety
 * `h` is null or comes from [`eitlab_two_phase_new`] and is not used again.
 */
void eitlab_two_phase_free(struct EitlabTwoPhaseKernel *h);

/**
 * `a0` is a symmetric positive definite 3×3 matrix, row major.
 *
 * # Safety
 * `a0` points to 9 doubles; `out` is writable.
 */
enum EitlabStatus eitlab_aniso_new(const double *a0, double k, struct EitlabAnisoKernel **out);

/**
 * # Safety
 * `h` comes from [`eitlab_aniso_new`]; points are 3 doubles.
 */
enum EitlabStatus eitlab_aniso_eval(const struct EitlabAnisoKernel *h,
                                    const double *xi,
                                    const double *eta,
                                    double *out);

/**
 * # Safety
 * As [`eitlab_aniso_eval`]; `out` holds 3 doubles.
 */
enum EitlabStatus eitlab_aniso_grad(const struct EitlabAnisoKernel *h,
                                    const double *xi,
                                    const double *eta,
                                    enum EitlabSide s,
                                    double *out);

/**
 * # Safety
 * `h` is null or comes from [`eitlab_aniso_new`] and is not used again.
 */
void eitlab_aniso_free(struct EitlabAnisoKernel *h);

/**
 * `ω_b(t)`.
 *
 * # Safety
 * `out` is writable.
 */
enum EitlabStatus eitlab_omega_eval(double b, double t, double *out);

/**
 * `j`-fold composition `ω_b^{(j)}(t)`.
 *
 * # Safety
 * `out` is writable.
 */
enum EitlabStatus eitlab_omega_iterate(double b, uintptr_t j, double t, double *out);

/**
 * Inverse of `ω_b` on `(0, e^{-2})`.
 *
 * # Safety
 * `out` is writable.
 */
enum EitlabStatus eitlab_omega_inverse(double b, double s, double *out);

/**
 * Runs the `δ_k` recursion. When `delta` is non-null it receives the
 * sequence and must hold `delta_cap >= K + 1` doubles.
 *
 * # Safety
 * `inputs`, `out` are valid; `delta` is null or holds `delta_cap` doubles.
 */
enum EitlabStatus eitlab_delta_recursion(const struct EitlabBudgetInputs *inputs,
                                         struct EitlabBudgetResult *out,
                                         double *delta,
                                         uintptr_t delta_cap);

/**
 * Reads a mesh text file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum EitlabStatus eitlab_mesh_read(const char *path_, struct EitlabMesh **out);

/**
 * Writes a mesh text file.
 *
 * # Safety
 * `h` comes from [`eitlab_mesh_read`]; `path` is NUL-terminated.
 */
enum EitlabStatus eitlab_mesh_write(const struct EitlabMesh *h, const char *path_);

/**
 * Vertex and element counts.
 *
 * # Safety
 * `h` is a mesh handle; `n_vertices`, `n_elements` are writable.
 */
enum EitlabStatus eitlab_mesh_counts(const struct EitlabMesh *h,
                                     uintptr_t *n_vertices,
                                     uintptr_t *n_elements);

/**
 * Coordinates of vertex `i`.
 *
 * # Safety
 * `h` is a mesh handle; `out` holds 3 doubles.
 */
enum EitlabStatus eitlab_mesh_vertex(const struct EitlabMesh *h, uintptr_t i, double *out);

/**
 * Sum of element volumes.
 *
 * # Safety
 * `h` is a mesh handle; `out` is writable.
 */
enum EitlabStatus eitlab_mesh_volume(const struct EitlabMesh *h, double *out);

/**
 * Structural validation; fails on degenerate or inverted elements.
 *
 * # Safety
 * `h` is a mesh handle.
 */
enum EitlabStatus eitlab_mesh_validate(const struct EitlabMesh *h);

/**
 * # Safety
 * `h` is null or comes from [`eitlab_mesh_read`] and is not used again.
 */
void eitlab_mesh_free(struct EitlabMesh *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EITLAB_H */
