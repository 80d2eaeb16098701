#ifndef RST_H
#define RST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RstStatus {
  RST_STATUS_OK = 0,
  RST_STATUS_INVALID = 1,
  RST_STATUS_PARSE = 2,
  RST_STATUS_IO = 3,
  RST_STATUS_NUMERIC = 4,
  RST_STATUS_NULL_POINTER = 5,
  RST_STATUS_PANIC = 6,
} RstStatus;

/**
 * A persistence diagram of one homology degree.
 */
typedef struct RstDiagram RstDiagram;

/**
 * Replicate diagrams simulated from a fitted model.
 */
typedef struct RstEnsemble RstEnsemble;

/**
 * A fitted Gibbs model.
 */
typedef struct RstModel RstModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the library.
 */
const char *rst_last_error(void);

/**
 * Finite diagram from `n` birth and death values.
 *
 * # Safety
 * `births` and `deaths` must point to `n` readable doubles; `out` must be writable.
 */
enum RstStatus rst_diagram_new(size_t degree,
                               const double *births,
                               const double *deaths,
                               size_t n,
                               struct RstDiagram **out);

/**
 * Reads a single-degree diagram CSV (`degree,birth,death,essential`).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RstStatus rst_diagram_read_csv(const char *path, struct RstDiagram **out);

/**
 * H0 (`degree == 0`) or H1 superlevel diagram of the KDE of a two-circles sample.
 * Essential classes are dropped.
 *
 * # Safety
 * `out` must be writable.
 */
enum RstStatus rst_two_circles_diagram(size_t n_large,
                                       size_t n_small,
                                       double diam_large,
                                       double diam_small,
                                       double bandwidth,
                                       size_t grid,
                                       size_t degree,
                                       uint64_t seed,
                                       struct RstDiagram **out);

/**
 * Number of points, or 0 for a null handle.
 *
 * # Safety
 * `pd` must be null or a live diagram handle.
 */
size_t rst_diagram_len(const struct RstDiagram *pd);

/**
 * # Safety
 * `pd` must be null or a handle not yet freed.
 */
void rst_diagram_free(struct RstDiagram *pd);

/**
 * Fits the Gibbs model with `k_max` cluster terms. `data_dim == 0` means unknown.
 *
 * # Safety
 * `pd` must be a live diagram handle; `out` must be writable.
 */
enum RstStatus rst_fit(const struct RstDiagram *pd,
                       size_t k_max,
                       double delta_star,
                       uint32_t data_dim,
                       uint64_t seed,
                       struct RstModel **out);

/**
 * Number of parameters: `2 + K`.
 *
 * # Safety
 * `model` must be null or a live model handle.
 */
size_t rst_model_param_count(const struct RstModel *model);

/**
 * Copies `(theta_H, theta_V, theta_1, ..., theta_K)` into `out`.
 *
 * # Safety
 * `model` must be live; `out` must have room for `len` doubles.
 */
enum RstStatus rst_model_theta(const struct RstModel *model, double *out, size_t len);

/**
 * Model as JSON; release with [`rst_string_free`]. Null on failure.
 *
 * # Safety
 * `model` must be null or a live model handle.
 */
char *rst_model_to_json(const struct RstModel *model);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void rst_string_free(char *s);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void rst_model_free(struct RstModel *model);

/**
 * Simulates `n_b`-spaced replicates: `n_chains` chains of `n_r` each.
 *
 * # Safety
 * `pd` must be the diagram `model` was fitted to; `out` must be writable.
 */
enum RstStatus rst_replicate(const struct RstDiagram *pd,
                             const struct RstModel *model,
                             size_t burn_in,
                             size_t n_b,
                             size_t n_r,
                             size_t n_chains,
                             uint64_t seed,
                             struct RstEnsemble **out);

/**
 * # Safety
 * `ens` must be null or a live ensemble handle.
 */
size_t rst_ensemble_len(const struct RstEnsemble *ens);

/**
 * # Safety
 * `ens` must be null or a handle not yet freed.
 */
void rst_ensemble_free(struct RstEnsemble *ens);

/**
 * Add-one p-values of the `j` largest persistences; written to `p_values[0..j]`.
 *
 * # Safety
 * Handles must be live; `p_values` must have room for `j` doubles.
 */
enum RstStatus rst_order_stat_test(const struct RstDiagram *pd,
                                   const struct RstEnsemble *ens,
                                   size_t j,
                                   double *p_values);

/**
 * Benjamini-Hochberg step-up; `reject[i]` is set to 1 for rejected hypotheses.
 *
 * # Safety
 * `p` must hold `m` doubles and `reject` `m` bytes.
 */
enum RstStatus rst_bh_fdr(const double *p, size_t m, double alpha, uint8_t *reject);

/**
 * Bonferroni: rejects `p <= alpha / m`.
 *
 * # Safety
 * `p` must hold `m` doubles and `reject` `m` bytes.
 */
enum RstStatus rst_bonferroni(const double *p, size_t m, double alpha, uint8_t *reject);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RST_H */
