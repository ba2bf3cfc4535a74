#ifndef WITS_H
#define WITS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Action bits for [`wits_cascade_classify`].
 */
#define WITS_ACTION_WRITING 1

#define WITS_ACTION_CELLPHONE (1 << 1)

#define WITS_ACTION_LAPTOP (1 << 2)

#define WITS_ACTION_TALKING (1 << 3)

#define WITS_ACTION_RAISED_HAND (1 << 4)

#define WITS_ACTION_YAWNING (1 << 5)

#define WITS_ACTION_HEAD_ON_DESK (1 << 6)

typedef enum WitsStatus {
  WITS_STATUS_OK = 0,
  WITS_STATUS_NULL_ARGUMENT = 1,
  WITS_STATUS_INVALID_ARGUMENT = 2,
  WITS_STATUS_IO = 3,
  WITS_STATUS_FORMAT = 4,
  WITS_STATUS_SHAPE = 5,
  WITS_STATUS_NUMERIC = 6,
  WITS_STATUS_BUFFER_TOO_SMALL = 7,
  WITS_STATUS_PANIC = 8,
} WitsStatus;

/*
 Posture codes accepted by [`wits_cascade_classify`].
 */
typedef enum WitsPosture {
  WITS_POSTURE_LEANING_LEFT = 0,
  WITS_POSTURE_LEANING_RIGHT = 1,
  WITS_POSTURE_LEANING_BACK = 2,
  WITS_POSTURE_LEANING_FORWARD = 3,
  WITS_POSTURE_UPRIGHT = 4,
} WitsPosture;

/*
 Head pose codes accepted by [`wits_cascade_classify`].
 */
typedef enum WitsHeadPose {
  WITS_HEAD_POSE_FAR_LEFT = 0,
  WITS_HEAD_POSE_FAR_RIGHT = 1,
  WITS_HEAD_POSE_MODERATE_LEFT = 2,
  WITS_HEAD_POSE_MODERATE_RIGHT = 3,
  WITS_HEAD_POSE_BELOW_DESK = 4,
  WITS_HEAD_POSE_ON_DESK = 5,
  WITS_HEAD_POSE_UP = 6,
  WITS_HEAD_POSE_FORWARD = 7,
} WitsHeadPose;

/*
 A loaded classifier.
 */
typedef struct WitsModel WitsModel;

/*
 One student box for [`wits_render_overlay`].
 */
typedef struct WitsScore {
  uint32_t x;
  uint32_t y;
  uint32_t width;
  uint32_t height;
  /*
   Probability of not being interested, in [0, 1].
   */
  double disengagement;
} WitsScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *wits_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *wits_version(void);

/*
 Labels one annotation. `out_interested` receives 1 for Interested, 0 otherwise.

 # Safety
 `out_interested` must be null or writable.
 */
enum WitsStatus wits_cascade_classify(uint8_t actions,
                                      uint32_t posture,
                                      uint32_t head,
                                      int32_t *out_interested);

/*
 Loads a CNN checkpoint or SVM model file.

 # Safety
 `path` must be a NUL-terminated string and `out` writable.
 */
enum WitsStatus wits_model_load(const char *path, struct WitsModel **out);

/*
 # Safety
 `model` must be null or a handle from [`wits_model_load`] not yet freed.
 */
void wits_model_free(struct WitsModel *model);

/*
 Input geometry the model expects; any output pointer may be null.

 # Safety
 `model` must be a live handle; non-null outputs must be writable.
 */
enum WitsStatus wits_model_input(const struct WitsModel *model,
                                 uint32_t *width,
                                 uint32_t *height,
                                 uint32_t *frames);

/*
 Disengagement probability for `count` cubes laid out back to back, each
 height × width × 3·frames floats in [0, 1], row-major with interleaved
 channels.

 # Safety
 `cubes` must hold `count` cubes of the model's geometry and
 `out_disengagement` room for `count` doubles.
 */
enum WitsStatus wits_model_predict(const struct WitsModel *model,
                                   const float *cubes,
                                   size_t count,
                                   double *out_disengagement);

/*
 Renders the heat overlay into `out_rgba` (width × height × 4 bytes).
 `settings_json` may be null for the defaults.

 # Safety
 `scores` must hold `count` entries, `settings_json` must be null or a
 NUL-terminated string, and `out_rgba` must hold `out_len` bytes.
 */
enum WitsStatus wits_render_overlay(uint32_t width,
                                    uint32_t height,
                                    const struct WitsScore *scores,
                                    size_t count,
                                    const char *settings_json,
                                    uint8_t *out_rgba,
                                    size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WITS_H */
