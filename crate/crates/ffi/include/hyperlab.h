#ifndef HYPERLAB_H
#define HYPERLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum HlStatus {
  HL_STATUS_OK = 0,
  HL_STATUS_NULL_POINTER = 1,
  HL_STATUS_INVALID_ARGUMENT = 2,
  HL_STATUS_DIMENSION_MISMATCH = 3,
  // Overflow, non-finite values or ill-conditioned eigenvalues.
  HL_STATUS_NUMERICAL = 4,
  // A search found nothing, or a Cantor node does not exist.
  HL_STATUS_NOT_FOUND = 5,
  HL_STATUS_CONSTRUCTION = 6,
  HL_STATUS_CONFIG = 7,
  HL_STATUS_IO = 8,
  HL_STATUS_PANIC = 9,
} HlStatus;

typedef struct HlCantorField HlCantorField;

typedef struct HlFamily HlFamily;

typedef struct HlOperator HlOperator;

typedef struct HlVector HlVector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *hl_last_error(void);

// Library version as a static NUL-terminated string.
const char *hl_version(void);

// `weight · B` truncated to dimension `d`.
//
// # Safety
// `out_op` must be a valid pointer.
enum HlStatus hl_operator_backward_shift(double weight, size_t d, struct HlOperator **out_op);

// Diagonal with entries `e^{2πiθ_k}` plus an `ε·4^{-k}` superdiagonal.
//
// # Safety
// `angles` must hold `n` values; `out_op` must be valid.
enum HlStatus hl_operator_perturbed_diagonal(const double *angles,
                                             size_t n,
                                             double epsilon,
                                             size_t d,
                                             struct HlOperator **out_op);

// Dimension of the operator, 0 for a null handle.
//
// # Safety
// `op` must be null or a live handle.
size_t hl_operator_dim(const struct HlOperator *op);

// `T^n v` as a new vector.
//
// # Safety
// `op` and `v` must be live handles; `out_v` must be valid.
enum HlStatus hl_operator_power_apply(const struct HlOperator *op,
                                      const struct HlVector *v,
                                      uint64_t n,
                                      struct HlVector **out_v);

// # Safety
// `op` must be null or a handle not yet freed.
void hl_operator_free(struct HlOperator *op);

// Vector from separate real and imaginary arrays of length `d`.
//
// # Safety
// `re` and `im` must hold `d` values; `out_v` must be valid.
enum HlStatus hl_vector_new(const double *re, const double *im, size_t d, struct HlVector **out_v);

// # Safety
// `v` must be null or a live handle.
size_t hl_vector_dim(const struct HlVector *v);

// Euclidean norm, NaN for a null handle.
//
// # Safety
// `v` must be null or a live handle.
double hl_vector_norm(const struct HlVector *v);

// Copies the entries into `re` and `im`, which must have room for `len`
// values; `len` must equal the dimension.
//
// # Safety
// `v` must be a live handle; `re` and `im` must be writable for `len` values.
enum HlStatus hl_vector_get(const struct HlVector *v, double *re, double *im, size_t len);

// # Safety
// `v` must be null or a handle not yet freed.
void hl_vector_free(struct HlVector *v);

// Normalized eigenvector of `weight · B` for `λ = e^{2πiθ}`, with its
// truncation residual.
//
// # Safety
// `out_v` must be valid; `residual` may be null.
enum HlStatus hl_eigenvector_2b(double theta,
                                double weight,
                                size_t d,
                                struct HlVector **out_v,
                                double *residual);

// `count` eigenvectors of `weight · B` at angles `frac(√p_j)`.
//
// # Safety
// `out_f` must be valid.
enum HlStatus hl_family_sqrt_prime_2b(double weight,
                                      size_t d,
                                      size_t count,
                                      struct HlFamily **out_f);

// # Safety
// `f` must be null or a live handle.
size_t hl_family_len(const struct HlFamily *f);

// # Safety
// `f` must be null or a handle not yet freed.
void hl_family_free(struct HlFamily *f);

// Self-normalized `E|Σ a_n χ_n| / sqrt(E|Σ a_n χ_n|²)` over `trials`
// Steinhaus draws.
//
// # Safety
// `re` and `im` must hold `n` values; `ratio` must be valid.
enum HlStatus hl_khinchine_ratio(const double *re,
                                 const double *im,
                                 size_t n,
                                 uint64_t trials,
                                 uint64_t seed,
                                 double *ratio);

// Smallest `1 ≤ p ≤ p_max` with `|e^{2πipθ_j} − e^{2πiφ_j}| < η` for all
// `j`. Writes 0 and returns `Ok` when there is none.
//
// # Safety
// `angles` and `targets` must hold `n` values; `p` must be valid.
enum HlStatus hl_solve_simultaneous(const double *angles,
                                    const double *targets,
                                    size_t n,
                                    double eta,
                                    uint64_t p_max,
                                    uint64_t *p);

// Binary tree of eigenvectors chosen from `seed`, rooted at member `root`.
//
// # Safety
// `seed` must be a live handle; `out_c` must be valid.
enum HlStatus hl_cantor_build(const struct HlFamily *seed,
                              size_t root,
                              size_t depth,
                              struct HlCantorField **out_c);

// Angle and a copy of the eigenvector at node `s`, a string of `0`/`1`.
//
// # Safety
// `c` must be a live handle, `s` NUL-terminated; `theta` and `out_v` valid.
enum HlStatus hl_cantor_lookup(const struct HlCantorField *c,
                               const char *s,
                               double *theta,
                               struct HlVector **out_v);

// Separation check. `passed` is set to 1 or 0, `min_margin` to the worst
// branch margin; `violations` (optional) to the count of broken invariants.
//
// # Safety
// `c` must be a live handle; `passed` and `min_margin` valid.
enum HlStatus hl_cantor_verify(const struct HlCantorField *c,
                               int32_t *passed,
                               double *min_margin,
                               size_t *violations);

// # Safety
// `c` must be null or a handle not yet freed.
void hl_cantor_free(struct HlCantorField *c);

// Validates a TOML config, runs its pipelines and writes reports to
// `out_dir`. `passed` is set to 1 when every pipeline passes.
//
// # Safety
// `config` and `out_dir` must be NUL-terminated; `passed` valid.
enum HlStatus hl_run_config(const char *config, const char *out_dir, int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPERLAB_H */
