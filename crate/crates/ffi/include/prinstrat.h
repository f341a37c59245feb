#ifndef PRINSTRAT_H
#define PRINSTRAT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; the error classes share their values with the CLI exit codes.
typedef enum PrinstratStatus {
  PRINSTRAT_STATUS_OK = 0,
  PRINSTRAT_STATUS_NULL_POINTER = 1,
  PRINSTRAT_STATUS_CONFIG = 2,
  PRINSTRAT_STATUS_DATA = 3,
  PRINSTRAT_STATUS_NUMERICAL = 4,
  PRINSTRAT_STATUS_PANIC = 5,
  PRINSTRAT_STATUS_INVALID_UTF8 = 6,
} PrinstratStatus;

// Observed dataset.
typedef struct PrinstratDataset PrinstratDataset;

// Retained draws of one chain.
typedef struct PrinstratDraws PrinstratDraws;

// Inputs of the large-sample variance formula for the strata correlation.
typedef struct PrinstratAsymInputs {
  double t_bar;
  double beta10;
  double beta01;
  double sigma_s0;
  double sigma_s1;
  double sigma_y2;
  double rho;
  uint64_t n;
} PrinstratAsymInputs;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *prinstrat_last_error(void);

// Copies `n` units into a new dataset. `t` entries must be 0 or 1.
//
// # Safety
// `y`, `t` and `s` must each point to `n` readable elements; `out` must be writable.
enum PrinstratStatus prinstrat_dataset_new(const double *y,
                                           const uint8_t *t,
                                           const double *s,
                                           size_t n,
                                           struct PrinstratDataset **out);

// Reads a dataset CSV with columns `y,t,s[,x1..][,s0,s1]`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PrinstratStatus prinstrat_dataset_read_csv(const char *path, struct PrinstratDataset **out);

// Number of units; 0 for a null handle.
//
// # Safety
// `data` must be null or a live handle.
size_t prinstrat_dataset_len(const struct PrinstratDataset *data);

// # Safety
// `data` must be null or a handle not yet freed.
void prinstrat_dataset_free(struct PrinstratDataset *data);

// Runs one chain. `config_json` holds the fit config (`model`, `prior`,
// `constraints`, `chain`); null means defaults.
//
// # Safety
// `data` must be a live handle, `config_json` null or NUL-terminated, `out` writable.
enum PrinstratStatus prinstrat_fit(const struct PrinstratDataset *data,
                                   const char *config_json,
                                   struct PrinstratDraws **out);

// # Safety
// `draws` must be null or a live handle.
size_t prinstrat_draws_len(const struct PrinstratDraws *draws);

// # Safety
// `draws` must be null or a live handle.
size_t prinstrat_draws_n_columns(const struct PrinstratDraws *draws);

// Copies the named column into `buf`, which must hold exactly
// `prinstrat_draws_len` values.
//
// # Safety
// `draws` must be a live handle, `name` NUL-terminated, `buf` writable for `len` values.
enum PrinstratStatus prinstrat_draws_column(const struct PrinstratDraws *draws,
                                            const char *name,
                                            double *buf,
                                            size_t len);

// Posterior summary as JSON; release with [`prinstrat_string_free`].
//
// # Safety
// `draws` must be a live handle and `out` writable.
enum PrinstratStatus prinstrat_draws_summary_json(const struct PrinstratDraws *draws, char **out);

// # Safety
// `draws` must be null or a handle not yet freed.
void prinstrat_draws_free(struct PrinstratDraws *draws);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void prinstrat_string_free(char *s);

// Identification region for one correlation and assumption. The request is
// `{"moments" | "truth": ..., "rho": r, "assumption": "none" | "same_sign" | "dominant"}`;
// the region report is written as JSON to `out`.
//
// # Safety
// `request_json` must be NUL-terminated and `out` writable.
enum PrinstratStatus prinstrat_pir_json(const char *request_json, char **out);

// Large-sample posterior variance of `rho`. `*estimable` is 0 and `*value`
// NaN when the data carry no information on `rho`.
//
// # Safety
// All pointers must be valid.
enum PrinstratStatus prinstrat_posterior_var(const struct PrinstratAsymInputs *inputs,
                                             double *value,
                                             int32_t *estimable);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRINSTRAT_H */
