/* Generated by cbindgen from crates/ffi; do not edit. */

#ifndef DSMHMC_H
#define DSMHMC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum DsmhmcStatus {
  DSMHMC_STATUS_OK = 0,
  DSMHMC_STATUS_NULL_POINTER = 1,
  DSMHMC_STATUS_SIZING = 2,
  DSMHMC_STATUS_SHAPE = 3,
  DSMHMC_STATUS_PARAM = 4,
  DSMHMC_STATUS_CONFIG = 5,
  DSMHMC_STATUS_IO = 6,
  DSMHMC_STATUS_FORMAT = 7,
  DSMHMC_STATUS_NUMERICAL = 8,
  DSMHMC_STATUS_INVALID_UTF8 = 9,
  DSMHMC_STATUS_PANIC = 10,
} DsmhmcStatus;

// Gaussian likelihood of an undersampled Fourier (MRI) measurement.
typedef struct DsmhmcLikelihood DsmhmcLikelihood;

// Noise-conditional score model (analytic or a trained network).
typedef struct DsmhmcScoreModel DsmhmcScoreModel;

// Dense row-major `f64` tensor.
typedef struct DsmhmcTensor DsmhmcTensor;

// Annealed HMC settings; start from [`dsmhmc_sampler_params_default`].
typedef struct DsmhmcSamplerParams {
  double sigma_init;
  double gamma;
  double epsilon;
  double exponent;
  double sigma_final;
  size_t steps_per_temperature;
  size_t final_steps;
  size_t leapfrog_steps;
  size_t quad_nodes;
  bool mh;
  bool eds;
  double sigma_floor;
} DsmhmcSamplerParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dsmhmc_version(void);

// Message for the last failed call on this thread, or an empty string.
// Valid until the next library call on the same thread.
const char *dsmhmc_last_error(void);

// Copy `len` values and a `rank`-long shape into a new tensor.
//
// # Safety
// `shape` must point to `rank` values and `data` to `len` values.
enum DsmhmcStatus dsmhmc_tensor_new(const size_t *shape,
                                    size_t rank,
                                    const double *data,
                                    size_t len,
                                    struct DsmhmcTensor **out);

// Read a TNSR file.
//
// # Safety
// `path` must be a NUL-terminated string.
enum DsmhmcStatus dsmhmc_tensor_read(const char *path, struct DsmhmcTensor **out);

// Write a tensor as a TNSR file.
//
// # Safety
// `t` must be a live tensor handle and `path` a NUL-terminated string.
enum DsmhmcStatus dsmhmc_tensor_write(const struct DsmhmcTensor *t, const char *path);

// Number of axes; 0 for a null handle.
//
// # Safety
// `t` must be null or a live tensor handle.
size_t dsmhmc_tensor_rank(const struct DsmhmcTensor *t);

// Number of elements; 0 for a null handle.
//
// # Safety
// `t` must be null or a live tensor handle.
size_t dsmhmc_tensor_len(const struct DsmhmcTensor *t);

// Copy the shape into `out` (capacity `cap`, at least the rank).
//
// # Safety
// `t` must be a live tensor handle and `out` writable for `cap` values.
enum DsmhmcStatus dsmhmc_tensor_shape(const struct DsmhmcTensor *t, size_t *out, size_t cap);

// Copy the row-major data into `out` (capacity `cap`, at least the length).
//
// # Safety
// `t` must be a live tensor handle and `out` writable for `cap` values.
enum DsmhmcStatus dsmhmc_tensor_copy_data(const struct DsmhmcTensor *t, double *out, size_t cap);

// Release a tensor; null is ignored.
//
// # Safety
// `t` must be null or a handle not yet freed.
void dsmhmc_tensor_free(struct DsmhmcTensor *t);

// Score network from a DSMC checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string.
enum DsmhmcStatus dsmhmc_score_model_load(const char *path, struct DsmhmcScoreModel **out);

// Zero-mean isotropic Gaussian prior `N(0, τ² I)` in `dim` dimensions.
//
// # Safety
// `out` must be writable.
enum DsmhmcStatus dsmhmc_score_model_gaussian(size_t dim,
                                              double tau2,
                                              struct DsmhmcScoreModel **out);

// The default two-moons Gaussian mixture in 2D.
//
// # Safety
// `out` must be writable.
enum DsmhmcStatus dsmhmc_score_model_two_moons(struct DsmhmcScoreModel **out);

// Signal dimension of a model; 0 for a null handle.
//
// # Safety
// `m` must be null or a live model handle.
size_t dsmhmc_score_model_dim(const struct DsmhmcScoreModel *m);

// Score of the σ-smoothed density at `x`, returned as a new tensor shaped
// like `x`.
//
// # Safety
// `m` and `x` must be live handles and `out` writable.
enum DsmhmcStatus dsmhmc_score_model_score(const struct DsmhmcScoreModel *m,
                                           const struct DsmhmcTensor *x,
                                           double sigma,
                                           struct DsmhmcTensor **out);

// Release a score model; null is ignored.
//
// # Safety
// `m` must be null or a handle not yet freed.
void dsmhmc_score_model_free(struct DsmhmcScoreModel *m);

// Likelihood of packed k-space `y` (`H×W×2`) under a Cartesian mask given
// as `H×W`, or as `W` column flags.
//
// # Safety
// `mask` and `y` must be live handles and `out` writable.
enum DsmhmcStatus dsmhmc_likelihood_mri(const struct DsmhmcTensor *mask,
                                        const struct DsmhmcTensor *y,
                                        double sigma_n,
                                        struct DsmhmcLikelihood **out);

// Zero-filled reconstruction `Aᵀy` as a packed `H×W×2` tensor.
//
// # Safety
// `lik` must be a live handle and `out` writable.
enum DsmhmcStatus dsmhmc_likelihood_zero_filled(const struct DsmhmcLikelihood *lik,
                                                struct DsmhmcTensor **out);

// Release a likelihood; null is ignored.
//
// # Safety
// `lik` must be null or a handle not yet freed.
void dsmhmc_likelihood_free(struct DsmhmcLikelihood *lik);

// Library defaults for the annealed sampler.
struct DsmhmcSamplerParams dsmhmc_sampler_params_default(void);

// Run `n_chains` annealed HMC chains and return the samples stacked as
// `n_chains × signal`. `lik` may be null for prior sampling.
//
// # Safety
// `prior` and `params` must be valid, `lik` null or live, `out` writable.
enum DsmhmcStatus dsmhmc_sample(const struct DsmhmcScoreModel *prior,
                                const struct DsmhmcLikelihood *lik,
                                const struct DsmhmcSamplerParams *params,
                                size_t n_chains,
                                uint64_t seed,
                                struct DsmhmcTensor **out);

// Peak signal-to-noise ratio in dB, capped for identical inputs.
//
// # Safety
// `reference` and `estimate` must be live handles and `out` writable.
enum DsmhmcStatus dsmhmc_psnr(const struct DsmhmcTensor *reference,
                              const struct DsmhmcTensor *estimate,
                              double peak,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSMHMC_H */
