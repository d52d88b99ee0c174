#ifndef BINBRAIN_H
#define BINBRAIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes. `BB_STATUS_OK` is zero; everything else is a failure.
 */
typedef enum BbStatus {
  BB_STATUS_OK = 0,
  BB_STATUS_NULL_POINTER = 1,
  BB_STATUS_INVALID_ARGUMENT = 2,
  BB_STATUS_IO = 3,
  BB_STATUS_CORRUPT_CHECKPOINT = 4,
  BB_STATUS_ARCH_MISMATCH = 5,
  BB_STATUS_SHAPE_MISMATCH = 6,
  BB_STATUS_INVALID_DISTRIBUTION = 7,
  BB_STATUS_BUFFER_TOO_SMALL = 8,
  BB_STATUS_INTERNAL = 9,
} BbStatus;

/*
 A loaded classifier. Create with [`bb_model_load`], release with [`bb_model_free`].
 */
typedef struct BbModel BbModel;

/*
 Routing outcome. `label` is -1 and `compartment` 0 for a reject;
 `biodegradable` is 1, 0, or -1 when rejected.
 */
typedef struct BbDecision {
  int32_t label;
  uint32_t compartment;
  double confidence;
  int32_t biodegradable;
} BbDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *bb_version(void);

/*
 Message for the last failed call on this thread, or NULL. The pointer is
 valid until the next `bb_*` call on the same thread.
 */
const char *bb_last_error(void);

/*
 Loads a checkpoint written by `binbrain train`. On success `*out` owns a
 new model.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BbStatus bb_model_load(const char *path, struct BbModel **out);

/*
 Releases a model. NULL is ignored.

 # Safety
 `model` must come from [`bb_model_load`] and not be freed twice.
 */
void bb_model_free(struct BbModel *model);

/*
 Number of output classes, 0 for NULL.

 # Safety
 `model` must be NULL or a live handle.
 */
size_t bb_model_num_classes(const struct BbModel *model);

/*
 Side length of the square input the model was built for, 0 for NULL.

 # Safety
 `model` must be NULL or a live handle.
 */
size_t bb_model_input_size(const struct BbModel *model);

/*
 Classifies one interleaved 8-bit RGB image of `width * height` pixels.
 The image is center-cropped and resized to the model input, normalized
 with the stored channel statistics, and the class probabilities are
 written to `probs[0..num_classes]`.

 # Safety
 `rgb` must point to `3 * width * height` bytes and `probs` to `probs_len` doubles.
 */
enum BbStatus bb_model_predict(const struct BbModel *model,
                               const uint8_t *rgb,
                               size_t width,
                               size_t height,
                               double *probs,
                               size_t probs_len);

/*
 Routes a four-class probability vector (glass, metal, paper, plastic)
 with the default compartment map and biodegradable grouping.

 # Safety
 `probs` must point to `len` doubles and `out` must be valid.
 */
enum BbStatus bb_route(const double *probs, size_t len, double threshold, struct BbDecision *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BINBRAIN_H */
