#ifndef PIX2PIX_MT_H
#define PIX2PIX_MT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum P2pStatus {
  P2P_STATUS_OK = 0,
  P2P_STATUS_NULL_POINTER = 1,
  P2P_STATUS_INVALID_ARGUMENT = 2,
  P2P_STATUS_IO = 3,
  P2P_STATUS_DECODE = 4,
  P2P_STATUS_CHECKSUM = 5,
  P2P_STATUS_CONFIG = 6,
  P2P_STATUS_SHAPE = 7,
  P2P_STATUS_NUMERIC = 8,
  P2P_STATUS_BUFFER_TOO_SMALL = 9,
  P2P_STATUS_PANIC = 10,
  P2P_STATUS_OTHER = 11,
} P2pStatus;

/**
 * Output kind of one generator head.
 */
typedef enum P2pTask {
  /**
   * Colour-coded mask, 3 bytes (RGB) per pixel.
   */
  P2P_TASK_SEGMENTATION = 0,
  /**
   * Bone-suppressed radiograph, 1 byte per pixel.
   */
  P2P_TASK_BONE_SUPPRESSION = 1,
} P2pTask;

/**
 * A loaded checkpoint ready for inference.
 */
typedef struct P2pModel P2pModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none failed.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *p2p_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *p2p_version(void);

/**
 * Loads and verifies a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
 */
enum P2pStatus p2p_model_load(const char *path, struct P2pModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`p2p_model_load`] and not be freed twice.
 */
void p2p_model_free(struct P2pModel *model);

/**
 * Side length of the square images the model takes and produces.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum P2pStatus p2p_model_image_size(const struct P2pModel *model, size_t *out);

/**
 * Number of output heads (1 for single-task schemes, 2 for multitask).
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum P2pStatus p2p_model_task_count(const struct P2pModel *model, size_t *out);

/**
 * Kind of output head `index`, in the order used by [`p2p_model_infer`].
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum P2pStatus p2p_model_task(const struct P2pModel *model, size_t index, enum P2pTask *out);

/**
 * Bytes [`p2p_model_infer`] writes.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum P2pStatus p2p_model_output_len(const struct P2pModel *model, size_t *out);

/**
 * Runs the generator on one grayscale radiograph of the model's image
 * size. Outputs are written back to back in task order: RGB rows for a
 * segmentation mask, one byte per pixel for a bone-suppressed image.
 *
 * # Safety
 * `pixels` must hold `width * height` bytes and `out` `out_len` bytes.
 */
enum P2pStatus p2p_model_infer(const struct P2pModel *model,
                               const uint8_t *pixels,
                               size_t width,
                               size_t height,
                               uint8_t *out,
                               size_t out_len);

/**
 * Dice coefficient of one structure between two label maps holding class
 * ids (0 background, 1 left lung, 2 right lung, 3 heart).
 *
 * # Safety
 * `pred` and `truth` must hold `width * height` bytes; `out` must be valid.
 */
enum P2pStatus p2p_dice(const uint8_t *pred,
                        const uint8_t *truth,
                        size_t width,
                        size_t height,
                        uint8_t structure,
                        double *out);

/**
 * Jaccard index, same conventions as [`p2p_dice`].
 *
 * # Safety
 * `pred` and `truth` must hold `width * height` bytes; `out` must be valid.
 */
enum P2pStatus p2p_jaccard(const uint8_t *pred,
                           const uint8_t *truth,
                           size_t width,
                           size_t height,
                           uint8_t structure,
                           double *out);

/**
 * Root mean squared error between two grayscale images, in grey levels.
 *
 * # Safety
 * `a` and `b` must hold `width * height` bytes; `out` must be valid.
 */
enum P2pStatus p2p_rmse(const uint8_t *a,
                        const uint8_t *b,
                        size_t width,
                        size_t height,
                        double *out);

/**
 * Mean structural similarity over 8x8 windows (both sides at least 8).
 *
 * # Safety
 * `a` and `b` must hold `width * height` bytes; `out` must be valid.
 */
enum P2pStatus p2p_mssim(const uint8_t *a,
                         const uint8_t *b,
                         size_t width,
                         size_t height,
                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PIX2PIX_MT_H */
