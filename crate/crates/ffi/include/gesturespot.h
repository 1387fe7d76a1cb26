#ifndef GESTURESPOT_H
#define GESTURESPOT_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_POINTER = 1,
  GS_STATUS_INVALID_ARGUMENT = 2,
  GS_STATUS_IO = 3,
  GS_STATUS_MODEL_FORMAT = 4,
  GS_STATUS_CHECKSUM = 5,
  GS_STATUS_NUMERIC = 6,
  GS_STATUS_PANIC = 7,
} GsStatus;

typedef enum GsMeta {
  GS_META_NO_HAND = 0,
  GS_META_POSTURE = 1,
  GS_META_TRANSITION = 2,
} GsMeta;

/*
 Opaque trained model.
 */
typedef struct GsModel GsModel;

/*
 Opaque per-stream recognizer.
 */
typedef struct GsRecognizer GsRecognizer;

/*
 Outcome of one frame. `emitted` is 0 during warm-up, when the other
 fields are unspecified. `label` indexes [`gs_label_name`] and is -1 for
 NoHand, as are both commands; `margin` is NaN then.
 */
typedef struct GsStepResult {
  int32_t emitted;
  enum GsMeta meta;
  int32_t label;
  int32_t raw_command;
  int32_t command;
  double margin;
} GsStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the calling thread's last error message into `buf` (NUL
 terminated, truncated to `len`). Returns the full message length
 excluding the terminator, or 0 when there is none.

 # Safety
 `buf` must be null or valid for `len` bytes.
 */
size_t gs_last_error(char *buf, size_t len);

/*
 Loads a model directory written by `gesturespot train`.

 # Safety
 `dir` must be a NUL-terminated path; `out` must be writable.
 */
enum GsStatus gs_model_load(const char *dir, struct GsModel **out);

/*
 # Safety
 `model` must come from [`gs_model_load`] and not be used afterwards.
 */
void gs_model_free(struct GsModel *model);

/*
 # Safety
 `model` must be a live handle and `out` writable.
 */
enum GsStatus gs_model_window(const struct GsModel *model, size_t *out);

/*
 # Safety
 `model` must be a live handle and `out` writable.
 */
enum GsStatus gs_recognizer_new(const struct GsModel *model, struct GsRecognizer **out);

/*
 # Safety
 `rec` must come from [`gs_recognizer_new`] and not be used afterwards.
 */
void gs_recognizer_free(struct GsRecognizer *rec);

/*
 Clears the window buffer and command filter.

 # Safety
 `rec` must be a live handle.
 */
enum GsStatus gs_recognizer_reset(struct GsRecognizer *rec);

/*
 Feeds one frame: six features `(n_x, n_y, n_z, roll, pitch, yaw)` and
 the palm speed. With `present == 0` the features may be null.

 # Safety
 `rec` must be a live handle, `features` valid for six doubles when
 present, and `out` writable.
 */
enum GsStatus gs_recognizer_step(struct GsRecognizer *rec,
                                 double t,
                                 const double *features,
                                 double speed,
                                 int32_t present,
                                 struct GsStepResult *out);

/*
 Number of labels (5 postures then 8 gestures).
 */
size_t gs_label_count(void);

/*
 Static NUL-terminated name of label `index`, or null if out of range.
 */
const char *gs_label_name(int32_t index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GESTURESPOT_H */
