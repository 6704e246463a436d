#ifndef STICKFLOW_H
#define STICKFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_ARGUMENT = 2,
  SF_STATUS_NUMERIC = 3,
  SF_STATUS_INADMISSIBLE = 4,
  SF_STATUS_LIMIT_EXCEEDED = 5,
  SF_STATUS_BUFFER_TOO_SMALL = 6,
  SF_STATUS_PANIC = 7,
} SfStatus;

/**
 * A validated rate matrix.
 */
typedef struct SfGenerator SfGenerator;

/**
 * Exact moment engine bound to one irreducible generator.
 */
typedef struct SfMomentEngine SfMomentEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sf_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated) and returns its full length plus one. Returns 0 when the
 * last call succeeded.
 */
size_t sf_last_error_message(char *buf, size_t cap);

/**
 * Builds a generator from `k * k` row-major rates. Rows must sum to zero
 * within 1e-9; the diagonal is then snapped to make the sums exact.
 */
enum SfStatus sf_generator_new(const double *rows, size_t k, struct SfGenerator **out);

void sf_generator_free(struct SfGenerator *g);

/**
 * Number of states, 0 for a null handle.
 */
size_t sf_generator_dim(const struct SfGenerator *g);

/**
 * Copies the generator back out, diagonal included.
 */
enum SfStatus sf_generator_rows(const struct SfGenerator *g, double *out, size_t len);

/**
 * The stationary law; fails when it is not unique.
 */
enum SfStatus sf_generator_stationary(const struct SfGenerator *g, double *out, size_t len);

/**
 * Time reversal of `g` with respect to the stationary law `mu`.
 */
enum SfStatus sf_generator_reverse(const struct SfGenerator *g,
                                   const double *mu,
                                   size_t len,
                                   struct SfGenerator **out);

enum SfStatus sf_moment_engine_new(const struct SfGenerator *g, struct SfMomentEngine **out);

void sf_moment_engine_free(struct SfMomentEngine *e);

/**
 * `E prod_i nu(i)^m_i` for a multi-index of length `k`.
 */
enum SfStatus sf_moment_engine_joint(const struct SfMomentEngine *e,
                                     const size_t *m,
                                     size_t len,
                                     double *out);

/**
 * `E nu(state)^order`.
 */
enum SfStatus sf_moment_engine_marginal(const struct SfMomentEngine *e,
                                        size_t state,
                                        uint32_t order,
                                        double *out);

/**
 * The stochastic kernel for moment step `j`, `k * k` row-major.
 */
enum SfStatus sf_moment_engine_kernel(const struct SfMomentEngine *e,
                                      uint32_t j,
                                      double *out,
                                      size_t len);

/**
 * Occupation measure of one replicate of the inhomogeneous chain after `n`
 * steps. `cutoff = 0` picks the default. Replicate `r` of seed `s` matches
 * replicate `r` of the command line tool.
 */
enum SfStatus sf_simulate_occupation(const struct SfGenerator *g,
                                     uint64_t cutoff,
                                     const double *pi,
                                     size_t pi_len,
                                     size_t n,
                                     uint64_t seed,
                                     uint64_t replicate,
                                     double *out,
                                     size_t out_len);

/**
 * GEM(theta) weights until the remainder drops below `eps`. `out_len`
 * receives the number of weights even when `cap` is too small.
 */
enum SfStatus sf_sample_gem(double theta,
                            double eps,
                            uint64_t seed,
                            double *out,
                            size_t cap,
                            size_t *out_len,
                            double *tail_mass);

/**
 * Covariance of the two clumped fractions of GEM(1/2, 1) weights along a
 * two-state chain that stays with probability `p_stay`.
 */
enum SfStatus sf_gem2_clump_covariance(double p_stay, size_t terms, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STICKFLOW_H */
