#ifndef LRPD_H
#define LRPD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of floats in one voxel tensor (two channels).
#define LRPD_VOXEL_TENSOR_LEN 73728

typedef enum LrpdStatus {
  LRPD_STATUS_OK = 0,
  LRPD_STATUS_NULL_POINTER = 1,
  LRPD_STATUS_INVALID_ARGUMENT = 2,
  LRPD_STATUS_IO = 3,
  LRPD_STATUS_PARSE = 4,
  LRPD_STATUS_BUFFER_TOO_SMALL = 5,
  LRPD_STATUS_OUT_OF_RANGE = 6,
  LRPD_STATUS_PANIC = 7,
} LrpdStatus;

typedef struct LrpdEvaluator LrpdEvaluator;

typedef struct LrpdFrame LrpdFrame;

typedef struct LrpdProposals LrpdProposals;

// Oriented box, camera frame. `cy` is the volumetric center.
typedef struct LrpdBox {
  double cx;
  double cy;
  double cz;
  double l;
  double w;
  double h;
  double theta;
  double score;
} LrpdBox;

typedef struct LrpdProposal {
  struct LrpdBox bbox;
  uint32_t instance_id;
  size_t inlier_count;
  size_t support;
  size_t source_point_index;
} LrpdProposal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *lrpd_last_error(void);

// Library version as a static NUL-terminated string.
const char *lrpd_version(void);

// # Safety
// `s` must be null or a string returned by this library.
void lrpd_string_free(char *s);

// # Safety
// `a`, `b` and `out` must be valid pointers.
enum LrpdStatus lrpd_bev_iou(const struct LrpdBox *a, const struct LrpdBox *b, double *out);

// Loads `velodyne/<id>.bin`, `calib/<id>.txt` and, when present,
// `masks/<id>.json` and `label_2/<id>.txt` under `root`.
//
// # Safety
// `root` and `frame_id` must be NUL-terminated strings; `out` a valid pointer.
enum LrpdStatus lrpd_frame_load(const char *root, const char *frame_id, struct LrpdFrame **out);

// Builds a frame from in-memory data. `velodyne` holds packed little-endian
// `f32` quadruples; `masks_json` and `labels` may be null.
//
// # Safety
// `velodyne` must point to `velodyne_len` readable bytes; strings must be
// NUL-terminated; `out` must be a valid pointer.
enum LrpdStatus lrpd_frame_from_buffers(const char *frame_id,
                                        const uint8_t *velodyne,
                                        size_t velodyne_len,
                                        const char *calib,
                                        const char *masks_json,
                                        const char *labels,
                                        struct LrpdFrame **out);

// # Safety
// `frame` must be null or a handle from this library, freed at most once.
void lrpd_frame_free(struct LrpdFrame *frame);

// Number of LiDAR points, 0 for a null handle.
//
// # Safety
// `frame` must be null or a live handle.
size_t lrpd_frame_point_count(const struct LrpdFrame *frame);

// Proposals with per-instance suppression. Non-positive mean dims select the
// built-in pedestrian defaults. A frame without masks yields an empty list.
//
// # Safety
// `frame` must be a live handle and `out` a valid pointer.
enum LrpdStatus lrpd_propose(const struct LrpdFrame *frame,
                             double mean_l,
                             double mean_w,
                             double mean_h,
                             double nms_iou,
                             struct LrpdProposals **out);

// # Safety
// `list` must be null or a live handle.
size_t lrpd_proposals_len(const struct LrpdProposals *list);

// # Safety
// `list` must be a live handle and `out` a valid pointer.
enum LrpdStatus lrpd_proposals_get(const struct LrpdProposals *list,
                                   size_t index,
                                   struct LrpdProposal *out);

// # Safety
// `list` must be null or a handle from this library, freed at most once.
void lrpd_proposals_free(struct LrpdProposals *list);

// Voxelizes the frame around `center` (camera frame) into `out`, laid out
// `[channel][x][z][height]` with channel 0 the max height and channel 1 the
// max-count normalized density. `extent` (x, height, z in meters) may be
// null for the 4 x 3 x 4 m default. `out_len` must be at least
// `LRPD_VOXEL_TENSOR_LEN`.
//
// # Safety
// `frame` and `center` must be valid; `extent` null or three doubles;
// `out` must point to `out_len` writable floats.
enum LrpdStatus lrpd_voxelize(const struct LrpdFrame *frame,
                              const double *center,
                              const double *extent,
                              float *out,
                              size_t out_len);

// Objectness loss and its derivative in `p_t`. `grad` may be null.
//
// # Safety
// `value` must be valid; `grad` null or valid.
enum LrpdStatus lrpd_focal_loss(double p_t, double p_hat_t, double *value, double *grad);

// # Safety
// `value` must be valid; `grad` null or valid.
enum LrpdStatus lrpd_smooth_l1(double residual, double *value, double *grad);

// Heading loss against `theta_gt`; `grad` receives d/ds and d/dc.
//
// # Safety
// `value` must be valid; `grad` null or two writable doubles.
enum LrpdStatus lrpd_heading_loss(double s_pred,
                                  double c_pred,
                                  double theta_gt,
                                  double *value,
                                  double *grad);

// New evaluator. `config_json` may be null for the defaults; otherwise it
// uses the same keys as the `[eval]` table of the pipeline config.
//
// # Safety
// `config_json` null or NUL-terminated; `out` valid.
enum LrpdStatus lrpd_evaluator_new(const char *config_json, struct LrpdEvaluator **out);

// Adds one frame given KITTI label text for ground truth and detections.
//
// # Safety
// `ev` must be a live handle; strings NUL-terminated.
enum LrpdStatus lrpd_evaluator_add_frame(struct LrpdEvaluator *ev,
                                         const char *frame_id,
                                         const char *ground_truth,
                                         const char *detections);

// Range-binned report over all frames added so far, as JSON. The evaluator
// stays usable. Free the string with `lrpd_string_free`.
//
// # Safety
// `ev` must be a live handle and `out` valid.
enum LrpdStatus lrpd_evaluator_finish(const struct LrpdEvaluator *ev, char **out);

// # Safety
// `ev` must be null or a handle from this library, freed at most once.
void lrpd_evaluator_free(struct LrpdEvaluator *ev);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LRPD_H */
