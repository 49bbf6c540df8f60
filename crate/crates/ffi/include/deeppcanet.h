#ifndef DEEPPCANET_H
#define DEEPPCANET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DpcnStatus {
  DPCN_STATUS_OK = 0,
  DPCN_STATUS_NULL_POINTER = 1,
  DPCN_STATUS_INVALID_ARGUMENT = 2,
  DPCN_STATUS_IO = 3,
  DPCN_STATUS_FORMAT = 4,
  DPCN_STATUS_SHAPE = 5,
  DPCN_STATUS_BUFFER_TOO_SMALL = 6,
  DPCN_STATUS_PANIC = 7,
  DPCN_STATUS_INTERNAL = 8,
} DpcnStatus;

/**
 * Opaque model handle.
 */
typedef struct DpcnModel DpcnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a DPCN checkpoint file. On success `*out` receives a handle that must be
 * released with `dpcn_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DpcnStatus dpcn_model_load(const char *path, struct DpcnModel **out);

/**
 * Loads a checkpoint from memory.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` must be a valid pointer.
 */
enum DpcnStatus dpcn_model_load_bytes(const uint8_t *data, size_t len, struct DpcnModel **out);

/**
 * Writes the model as a DPCN checkpoint file.
 *
 * # Safety
 * `model` must come from `dpcn_model_load*`; `path` must be NUL-terminated.
 */
enum DpcnStatus dpcn_model_save(const struct DpcnModel *model, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from `dpcn_model_load*` and not have been freed already.
 */
void dpcn_model_free(struct DpcnModel *model);

/**
 * Input height, width and channels.
 *
 * # Safety
 * All pointers must be valid.
 */
enum DpcnStatus dpcn_model_input_shape(const struct DpcnModel *model,
                                       size_t *height,
                                       size_t *width,
                                       size_t *channels);

/**
 * Number of output classes.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum DpcnStatus dpcn_model_num_classes(const struct DpcnModel *model, size_t *out);

/**
 * Number of conv blocks.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum DpcnStatus dpcn_model_depth(const struct DpcnModel *model, size_t *out);

/**
 * Class probabilities for `batch` images. `pixels` holds `batch·H·W·C` values and
 * `probs` receives `batch·classes` values, row per image.
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum DpcnStatus dpcn_model_predict(const struct DpcnModel *model,
                                   const double *pixels,
                                   size_t batch,
                                   double *probs,
                                   size_t probs_len);

/**
 * Grad-CAM heatmap (`H·W` values in `[0, 1]`) for one image and target class.
 *
 * # Safety
 * `pixels` must hold `H·W·C` values and `heatmap` at least `heatmap_len` values.
 */
enum DpcnStatus dpcn_model_grad_cam(const struct DpcnModel *model,
                                    const double *pixels,
                                    size_t target_class,
                                    double *heatmap,
                                    size_t heatmap_len);

/**
 * Between/within-class trace ratio of `n` feature vectors of length `dim`
 * (row-major) with class labels.
 *
 * # Safety
 * `features` must hold `n·dim` values, `labels` `n` values, `out` must be valid.
 */
enum DpcnStatus dpcn_trace_ratio(const double *features,
                                 size_t n,
                                 size_t dim,
                                 const size_t *labels,
                                 double *out);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to fit) and returns the full message length in bytes, excluding the NUL.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null with `len` 0.
 */
size_t dpcn_last_error_message(char *buf, size_t len);

/**
 * Static NUL-terminated version string.
 */
const char *dpcn_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEEPPCANET_H */
