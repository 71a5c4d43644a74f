#ifndef APSCAST_H
#define APSCAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ApscastStatus {
  APSCAST_STATUS_OK = 0,
  APSCAST_STATUS_NULL_POINTER = 1,
  APSCAST_STATUS_INVALID_ARGUMENT = 2,
  // A numerical consistency check failed.
  APSCAST_STATUS_NUMERICAL = 3,
  // An output buffer has the wrong length.
  APSCAST_STATUS_BUFFER_SIZE = 4,
  APSCAST_STATUS_PANIC = 5,
} ApscastStatus;

// Opaque operator handle.
typedef struct ApscastConverter ApscastConverter;

// Uniform linear array. Frequencies in Hz, spacing in meters, speed in m/s.
typedef struct ApscastArray {
  size_t n_antennas;
  double spacing;
  double f_up;
  double f_down;
  double wave_speed;
} ApscastArray;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into this library on the same thread.
const char *apscast_last_error(void);

// Fills `out` with the 30-antenna reference array.
//
// # Safety
// `out` must be null or point to writable memory for one `ApscastArray`.
enum ApscastStatus apscast_reference_array(struct ApscastArray *out);

// Builds the operator for `array`. `support` holds `n_intervals` pairs
// `[a, b]` in radians (null when `n_intervals` is 0, meaning no support
// information). `rel_cutoff <= 0` selects the default pseudo-inverse cutoff.
// On success `*out` owns a handle to release with [`apscast_converter_free`].
//
// # Safety
// `array` and `out` must be valid pointers; `support` must hold
// `2 * n_intervals` doubles.
enum ApscastStatus apscast_converter_new(const struct ApscastArray *array,
                                         const double *support,
                                         size_t n_intervals,
                                         double rel_cutoff,
                                         struct ApscastConverter **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `h` must be null or come from [`apscast_converter_new`] and not be freed twice.
void apscast_converter_free(struct ApscastConverter *h);

// Number of antennas `N`; covariance first columns have `N` entries and the
// operator matrix is `2N x 2N`.
//
// # Safety
// `h` must be a live handle and `n` writable.
enum ApscastStatus apscast_converter_dim(const struct ApscastConverter *h, size_t *n);

// Numerical rank of the Gram matrix.
//
// # Safety
// `h` must be a live handle and `rank` writable.
enum ApscastStatus apscast_converter_rank(const struct ApscastConverter *h, size_t *rank);

// Converts the first column of an uplink covariance (`n` real and `n`
// imaginary parts) into the downlink first column.
//
// # Safety
// All four arrays must hold `n` doubles; outputs must not alias inputs.
enum ApscastStatus apscast_convert(const struct ApscastConverter *h,
                                   const double *up_re,
                                   const double *up_im,
                                   size_t n,
                                   double *down_re,
                                   double *down_im);

// Copies the `2N x 2N` operator matrix, row-major, into `out` of length `len`.
//
// # Safety
// `out` must hold `len` doubles.
enum ApscastStatus apscast_converter_matrix(const struct ApscastConverter *h,
                                            double *out,
                                            size_t len);

// Per-slot residuals and minimum-norm bounds for a spectrum-norm bound `b`.
// Both buffers have `len = 2N` entries; slot `k < N` is the real part of
// lag `k`, slot `N + k` its imaginary part.
//
// # Safety
// `residual` and `bound` must hold `len` doubles.
enum ApscastStatus apscast_converter_bounds(const struct ApscastConverter *h,
                                            double b,
                                            double *residual,
                                            double *bound,
                                            size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APSCAST_H */
