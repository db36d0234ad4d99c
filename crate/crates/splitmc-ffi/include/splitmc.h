#ifndef SPLITMC_H
#define SPLITMC_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Splitting scheme selector.
 */
typedef enum SplitmcScheme {
  SPLITMC_SCHEME_LIE = 0,
  SPLITMC_SCHEME_STRANG = 1,
} SplitmcScheme;

/**
 * Result code of every fallible FFI call.
 */
typedef enum SplitmcStatus {
  /**
   * Success.
   */
  SPLITMC_STATUS_OK = 0,
  /**
   * Null pointer or malformed argument.
   */
  SPLITMC_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Numerical analysis failed (reducible chain, fit failure, ...).
   */
  SPLITMC_STATUS_ANALYSIS_ERROR = 2,
  /**
   * Input failed validation (not a generator, bad split, ...).
   */
  SPLITMC_STATUS_VALIDATION_ERROR = 3,
} SplitmcStatus;

/**
 * A dense chain with its splitting: the full generator plus the two
 * restrictions defined by the split mask.
 */
typedef struct SplitmcChain SplitmcChain;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length
 * including the terminator, or 0 when there is no pending error.
 *
 * # Safety
 * `buf` must point to `len` writable bytes (or be null with len 0).
 */
uintptr_t splitmc_last_error(char *buf, uintptr_t len);

/**
 * Builds a chain handle from a row-major n x n generator and a split
 * mask of `n_pairs` (from,to) index pairs kept by L1; L2 gets the
 * complement. Returns null on failure (see `splitmc_last_error`).
 *
 * # Safety
 * `rates` must point to n*n doubles; `pairs` to 2*n_pairs uint64s.
 */
struct SplitmcChain *splitmc_chain_new(const double *rates,
                                       uintptr_t n,
                                       const uint64_t *pairs,
                                       uintptr_t n_pairs);

/**
 * Releases a chain handle. Null is a no-op.
 *
 * # Safety
 * `chain` must be a pointer from `splitmc_chain_new`, not yet freed.
 */
void splitmc_chain_free(struct SplitmcChain *chain);

/**
 * Normalized relative entropy rate of the splitting chain against the
 * exact skeleton at `dt`, sampled from the scheme's stationary
 * measure; written to `out`.
 *
 * # Safety
 * `chain` must be a live handle, `out` a writable double.
 */
enum SplitmcStatus splitmc_chain_rer(const struct SplitmcChain *chain,
                                     enum SplitmcScheme scheme,
                                     double dt,
                                     double *out);

/**
 * Fitted RER order and leading coefficient over the dyadic grid
 * dt = 2^-k, k = 4..10; written to `out_slope` / `out_coeff`.
 *
 * # Safety
 * Pointers as in `splitmc_chain_rer`.
 */
enum SplitmcStatus splitmc_chain_fit(const struct SplitmcChain *chain,
                                     enum SplitmcScheme scheme,
                                     double *out_slope,
                                     double *out_coeff);

/**
 * Predicted RER exponent 2p - (k_hat + 1) from connectivity and the
 * commutator support; written to `out`.
 *
 * # Safety
 * Pointers as in `splitmc_chain_rer`.
 */
enum SplitmcStatus splitmc_chain_predicted_order(const struct SplitmcChain *chain,
                                                 enum SplitmcScheme scheme,
                                                 uint32_t *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SPLITMC_H */
