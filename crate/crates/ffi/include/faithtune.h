#ifndef FAITHTUNE_H
#define FAITHTUNE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FtStatus {
  FT_STATUS_OK = 0,
  FT_STATUS_NULL_POINTER = 1,
  FT_STATUS_INVALID_UTF8 = 2,
  FT_STATUS_VALIDATION = 3,
  FT_STATUS_CONTRACT = 4,
  FT_STATUS_NUMERIC = 5,
  FT_STATUS_IO = 6,
  FT_STATUS_CONFIG = 7,
  FT_STATUS_TRANSPORT = 8,
  FT_STATUS_OTHER = 9,
  FT_STATUS_PANIC = 10,
} FtStatus;

typedef enum FtJudgment {
  FT_JUDGMENT_CONTEXTUAL = 0,
  FT_JUDGMENT_PARAMETRIC = 1,
  FT_JUDGMENT_OTHER = 2,
  FT_JUDGMENT_AMBIGUOUS = 3,
} FtJudgment;

/**
 * Trained encoder parameters.
 */
typedef struct FtEncoder FtEncoder;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next faithtune call on the same thread.
 */
const char *ft_last_error_message(void);

/**
 * Loads a checkpoint written by `faithtune train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FtStatus ft_encoder_load(const char *path, struct FtEncoder **out);

/**
 * # Safety
 * `enc` must come from [`ft_encoder_load`] and not be freed yet. Null is a no-op.
 */
void ft_encoder_free(struct FtEncoder *enc);

/**
 * # Safety
 * `enc` must be a live handle; `out` must be writable.
 */
enum FtStatus ft_encoder_dim(const struct FtEncoder *enc, size_t *out);

/**
 * Writes the representation of (context, question, answer) into `out`,
 * which must hold exactly `out_len` = encoder dim values.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must point to `out_len` doubles.
 */
enum FtStatus ft_encoder_encode(const struct FtEncoder *enc,
                                const char *context,
                                const char *question,
                                const char *answer,
                                double *out,
                                size_t out_len);

/**
 * Cosine similarity of two `len`-vectors.
 *
 * # Safety
 * `x` and `y` must point to `len` doubles; `out` must be writable.
 */
enum FtStatus ft_cosine_sim(const double *x,
                            const double *y,
                            size_t len,
                            double epsilon_norm,
                            double *out);

/**
 * InfoNCE loss. `negatives` holds `n_negatives` vectors of `len` values, row after row.
 *
 * # Safety
 * `anchor` and `positive` must point to `len` doubles, `negatives` to
 * `n_negatives * len` doubles; `out` must be writable.
 */
enum FtStatus ft_infonce_loss(const double *anchor,
                              const double *positive,
                              const double *negatives,
                              size_t n_negatives,
                              size_t len,
                              double temperature,
                              double *out);

/**
 * PRR / (CRR + PRR). `defined` is set to 0 when both rates are zero.
 *
 * # Safety
 * `out` and `defined` must be writable.
 */
enum FtStatus ft_memorization_ratio(double crr, double prr, double *out, int32_t *defined);

/**
 * Classifies `answer` against a conflict item's two candidate answers.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum FtStatus ft_judge(const char *context,
                       const char *question,
                       const char *contextual_answer,
                       const char *parametric_answer,
                       const char *answer,
                       enum FtJudgment *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAITHTUNE_H */
