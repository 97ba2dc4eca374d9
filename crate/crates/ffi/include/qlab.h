#ifndef QLAB_H
#define QLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes. Zero is success; every other value has a message in
 * [`qlab_last_error`].
 */
typedef enum QlabStatus {
  QLAB_STATUS_OK = 0,
  QLAB_STATUS_NULL_POINTER = 1,
  /**
   * q outside [0, 1], probability outside (0, 1], bad simplex or shape.
   */
  QLAB_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Loss or gradient requested at success probability zero.
   */
  QLAB_STATUS_COLD_ZERO = 3,
  /**
   * Every weight in a pool underflows.
   */
  QLAB_STATUS_DEGENERATE_POOL = 4,
  /**
   * Latent space larger than the enumeration cap.
   */
  QLAB_STATUS_ENUMERATION_CAP = 5,
  QLAB_STATUS_NUMERICAL = 6,
  QLAB_STATUS_PARSE = 7,
  QLAB_STATUS_IO = 8,
  QLAB_STATUS_BUFFER_TOO_SMALL = 9,
  /**
   * The operation needs a latent-sequence model.
   */
  QLAB_STATUS_WRONG_MODEL_KIND = 10,
  QLAB_STATUS_PANIC = 99,
} QlabStatus;

/**
 * Opaque model handle.
 */
typedef struct QlabModel QlabModel;

/**
 * Opaque sample pool handle, tied to the model and example it was drawn from.
 */
typedef struct QlabPool QlabPool;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * Valid until the next library call on the same thread.
 */
const char *qlab_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *qlab_version(void);

/**
 * `ln_q(u)`, reducing to `ln u` at q = 1.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum QlabStatus qlab_q_log(double u, double q, double *out);

/**
 * Per-example loss `-ln_q(p)`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum QlabStatus qlab_loss(double p, double q, double *out);

/**
 * Escort minimizer of the categorical objective; writes `n` weights to `out`.
 *
 * # Safety
 * `alpha` must point to `n` values and `out` to `n` writable slots.
 */
enum QlabStatus qlab_escort(const double *alpha, uintptr_t n, double q, double *out);

/**
 * Time for the one-parameter sigmoid flow to lift success probability from
 * `p0` to `delta`, by quadrature.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum QlabStatus qlab_sigmoid_escape_time(double q, double p0, double delta, double *out);

/**
 * Parse a model from its text form.
 *
 * # Safety
 * `s` must be a nul-terminated string and `out` valid for writes.
 */
enum QlabStatus qlab_model_from_str(const char *s, struct QlabModel **out);

/**
 * Load a model file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` valid for writes.
 */
enum QlabStatus qlab_model_load(const char *path, struct QlabModel **out);

/**
 * Random latent-sequence model. `dims` holds n_inputs, latent_vocab,
 * latent_len, output_vocab and output_len; logits are uniform in
 * `[-scale, scale]`.
 *
 * # Safety
 * `dims` must point to 5 values and `out` be valid for writes.
 */
enum QlabStatus qlab_model_random(const uintptr_t *dims,
                                  double scale,
                                  uint64_t seed,
                                  struct QlabModel **out);

/**
 * Release a model; null is ignored.
 *
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void qlab_model_free(struct QlabModel *m);

/**
 * # Safety
 * `m` must be a live handle and `out` valid for writes.
 */
enum QlabStatus qlab_model_num_params(const struct QlabModel *m, uintptr_t *out);

/**
 * Exact `log P(target | input)`.
 *
 * # Safety
 * `m` must be a live handle, `target` point to `target_len` values and
 * `out` be valid for writes.
 */
enum QlabStatus qlab_model_log_marginal(const struct QlabModel *m,
                                        uintptr_t input,
                                        const uintptr_t *target,
                                        uintptr_t target_len,
                                        double *out);

/**
 * Exact gradient of the per-example loss at `q`.
 *
 * # Safety
 * `m` must be a live handle, `target` point to `target_len` values, `out`
 * to `cap` writable slots and `out_len` be valid for writes.
 */
enum QlabStatus qlab_model_grad_loss(const struct QlabModel *m,
                                     uintptr_t input,
                                     const uintptr_t *target,
                                     uintptr_t target_len,
                                     double q,
                                     double *out,
                                     uintptr_t cap,
                                     uintptr_t *out_len);

/**
 * Text form of a model; release with [`qlab_string_free`].
 *
 * # Safety
 * `m` must be a live handle and `out` valid for writes.
 */
enum QlabStatus qlab_model_to_string(const struct QlabModel *m, char **out);

/**
 * Release a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void qlab_string_free(char *s);

/**
 * Draw `m_size` latents from the prior of a latent model and score them
 * against the example. The same seed gives the same pool.
 *
 * # Safety
 * `m` must be a live handle, `target` point to `target_len` values and
 * `out` be valid for writes.
 */
enum QlabStatus qlab_pool_sample(const struct QlabModel *m,
                                 uintptr_t input,
                                 const uintptr_t *target,
                                 uintptr_t target_len,
                                 uintptr_t m_size,
                                 uint64_t seed,
                                 struct QlabPool **out);

/**
 * Release a pool; null is ignored.
 *
 * # Safety
 * `p` must be null or a handle not yet freed.
 */
void qlab_pool_free(struct QlabPool *p);

/**
 * Effective sample size of the pool's likelihood weights, in `[1, M]`.
 *
 * # Safety
 * `p` must be a live handle and `out` valid for writes.
 */
enum QlabStatus qlab_pool_ess(const struct QlabPool *p, double *out);

/**
 * Plug-in gradient estimate; `normalized` applies the `1/M^q` rescale.
 *
 * # Safety
 * `p` must be a live handle, `out` point to `cap` writable slots and
 * `out_len` be valid for writes.
 */
enum QlabStatus qlab_garl_plugin(const struct QlabPool *p,
                                 double q,
                                 bool normalized,
                                 double *out,
                                 uintptr_t cap,
                                 uintptr_t *out_len);

/**
 * Leave-one-out gradient estimate; `normalized` applies the `1/M^q` rescale.
 *
 * # Safety
 * As for [`qlab_garl_plugin`].
 */
enum QlabStatus qlab_garl_rloo(const struct QlabPool *p,
                               double q,
                               bool normalized,
                               double *out,
                               uintptr_t cap,
                               uintptr_t *out_len);

/**
 * Posterior-resampled estimate with `k` draws (`k = 0` means `M`).
 *
 * # Safety
 * As for [`qlab_garl_plugin`].
 */
enum QlabStatus qlab_paft(const struct QlabPool *p,
                          double q,
                          uintptr_t k,
                          uint64_t seed,
                          bool normalized,
                          double *out,
                          uintptr_t cap,
                          uintptr_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QLAB_H */
