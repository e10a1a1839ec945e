#ifndef SPECTRAL_ADA_H
#define SPECTRAL_ADA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SdaStatus {
  SDA_STATUS_OK = 0,
  SDA_STATUS_NULL_POINTER = 1,
  SDA_STATUS_MALFORMED_INPUT = 2,
  SDA_STATUS_INVARIANT_VIOLATION = 3,
  SDA_STATUS_IO = 4,
  SDA_STATUS_BUFFER_TOO_SMALL = 5,
  SDA_STATUS_INVALID_UTF8 = 6,
  SDA_STATUS_PANIC = 7,
} SdaStatus;

/**
 * Opaque linear classification head.
 */
typedef struct SdaHead SdaHead;

/**
 * Opaque image handle.
 */
typedef struct SdaImage SdaImage;

/**
 * Query score of one sample.
 */
typedef struct SdaQueryRecord {
  double margin_score;
  double cosine_term;
  double q_value;
} SdaQueryRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the buffer size
 * needed for the full message, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t sda_last_error_message(char *buf, size_t len);

/**
 * Creates an image from `height * width * channels` interleaved values.
 *
 * # Safety
 * `data` must point to that many readable doubles; `out` must be writable.
 */
enum SdaStatus sda_image_new(size_t height,
                             size_t width,
                             size_t channels,
                             const double *data,
                             struct SdaImage **out);

/**
 * Reads a binary PGM or PPM file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SdaStatus sda_image_read(const char *path, struct SdaImage **out);

/**
 * Writes a PGM (one channel) or PPM (three channels), clamping to [0, 1].
 *
 * # Safety
 * `image` must be a live handle; `path` a NUL-terminated string.
 */
enum SdaStatus sda_image_write(const struct SdaImage *image, const char *path);

/**
 * Reports the shape of an image.
 *
 * # Safety
 * `image` must be a live handle; each output pointer may be null.
 */
enum SdaStatus sda_image_shape(const struct SdaImage *image,
                               size_t *height,
                               size_t *width,
                               size_t *channels);

/**
 * Copies the interleaved pixel values into `out`, which must hold at least
 * `height * width * channels` doubles.
 *
 * # Safety
 * `image` must be a live handle; `out` must point to `len` writable doubles.
 */
enum SdaStatus sda_image_copy_data(const struct SdaImage *image, double *out, size_t len);

/**
 * Releases an image handle. Null is ignored.
 *
 * # Safety
 * `image` must be null or a handle not yet freed.
 */
void sda_image_free(struct SdaImage *image);

/**
 * Replaces the low-frequency amplitude of `source` with that of `target`.
 * The result is not clamped.
 *
 * # Safety
 * `source` and `target` must be live handles; `out` must be writable.
 */
enum SdaStatus sda_fda_transfer(const struct SdaImage *source,
                                const struct SdaImage *target,
                                double beta,
                                struct SdaImage **out);

/**
 * Writes the `height * width` low-frequency mask as 0/1 bytes, row-major.
 *
 * # Safety
 * `out` must point to `len` writable bytes; `popcount` may be null.
 */
enum SdaStatus sda_low_freq_mask(size_t height,
                                 size_t width,
                                 double beta,
                                 uint8_t *out,
                                 size_t len,
                                 size_t *popcount);

/**
 * Creates a head from `classes * dim` row-major weights and `classes` biases.
 *
 * # Safety
 * `weights` and `bias` must point to that many readable doubles.
 */
enum SdaStatus sda_head_new(size_t classes,
                            size_t dim,
                            const double *weights,
                            const double *bias,
                            struct SdaHead **out);

/**
 * Loads a head file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SdaStatus sda_head_load(const char *path, struct SdaHead **out);

/**
 * Saves a head file.
 *
 * # Safety
 * `head` must be a live handle; `path` a NUL-terminated string.
 */
enum SdaStatus sda_head_save(const struct SdaHead *head, const char *path);

/**
 * Reports the number of classes and the feature dimension.
 *
 * # Safety
 * `head` must be a live handle; each output pointer may be null.
 */
enum SdaStatus sda_head_shape(const struct SdaHead *head, size_t *classes, size_t *dim);

/**
 * Computes the logits of one feature vector.
 *
 * # Safety
 * `features` must hold `dim` doubles and `out` `classes` writable doubles.
 */
enum SdaStatus sda_head_logits(const struct SdaHead *head,
                               const double *features,
                               size_t dim,
                               double *out,
                               size_t classes);

/**
 * Releases a head handle. Null is ignored.
 *
 * # Safety
 * `head` must be null or a handle not yet freed.
 */
void sda_head_free(struct SdaHead *head);

/**
 * Margin score `1 - (p1 - p2)` of a logit vector with at least two classes.
 *
 * # Safety
 * `logits` must hold `classes` doubles; `out` must be writable.
 */
enum SdaStatus sda_margin_score(const double *logits, size_t classes, double *out);

/**
 * Query score of one feature vector under margin `m` and weight `lambda`.
 *
 * # Safety
 * `features` must hold `dim` doubles; `out` must be writable.
 */
enum SdaStatus sda_query_score(const struct SdaHead *head,
                               const double *features,
                               size_t dim,
                               double m,
                               double lambda,
                               struct SdaQueryRecord *out);

/**
 * Expected calibration error over `n` predictions with `bins` equal-width bins.
 *
 * # Safety
 * `confidence`, `predicted` and `actual` must each hold `n` elements.
 */
enum SdaStatus sda_ece(const double *confidence,
                       const uint32_t *predicted,
                       const uint32_t *actual,
                       size_t n,
                       size_t bins,
                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECTRAL_ADA_H */
