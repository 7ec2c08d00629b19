#ifndef DEPTHPOSE_H
#define DEPTHPOSE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum SdpStatus {
  SDP_STATUS_OK = 0,
  SDP_STATUS_NULL_POINTER = 1,
  SDP_STATUS_INVALID_ARGUMENT = 2,
  SDP_STATUS_UNKNOWN_VIEW = 3,
  SDP_STATUS_OUT_OF_RANGE = 4,
  SDP_STATUS_PANIC = 5,
} SdpStatus;

/**
 * Opaque multi-view fuser: calibrations, queued views and tracker state.
 */
typedef struct SdpFuser SdpFuser;

/**
 * Opaque skeleton definition.
 */
typedef struct SdpSkeleton SdpSkeleton;

/**
 * Depth sampling neighborhood.
 */
typedef struct SdpCrossParams {
  uint32_t arm_length;
  uint32_t thickness;
  uint32_t min_valid;
} SdpCrossParams;

/**
 * Association, filtering and fusion settings.
 */
typedef struct SdpFusionParams {
  double match_threshold;
  double new_person_cluster_threshold;
  uint32_t drop_after;
  double limb_threshold;
  size_t topk;
  size_t min_shared_joints;
  size_t min_support;
  size_t min_proposal_joints;
} SdpFusionParams;

/**
 * Pinhole camera. `rotation` (row-major) and `translation` map camera
 * coordinates to world coordinates; `translation` is the camera center.
 */
typedef struct SdpCamera {
  uint32_t view_id;
  uint32_t width;
  uint32_t height;
  double fx;
  double fy;
  double cx;
  double cy;
  double rotation[9];
  double translation[3];
} SdpCamera;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *sdp_last_error(void);

/**
 * Library version, a static string.
 */
const char *sdp_version(void);

/**
 * Built-in 13-joint skeleton. Free with `sdp_skeleton_free`.
 */
struct SdpSkeleton *sdp_skeleton_coco13(void);

/**
 * Parses a skeleton from NUL-terminated JSON.
 *
 * # Safety
 * `json` must be a valid C string and `out` a valid pointer.
 */
enum SdpStatus sdp_skeleton_from_json(const char *json, struct SdpSkeleton **out);

/**
 * Number of joints, 0 for a null handle.
 *
 * # Safety
 * `skel` must be null or a live skeleton handle.
 */
size_t sdp_skeleton_joint_count(const struct SdpSkeleton *skel);

/**
 * Index of a joint by name.
 *
 * # Safety
 * `skel` must be a live handle, `name` a valid C string, `out` a valid pointer.
 */
enum SdpStatus sdp_skeleton_joint_index(const struct SdpSkeleton *skel,
                                        const char *name,
                                        size_t *out);

/**
 * # Safety
 * `skel` must be null or a handle not yet freed.
 */
void sdp_skeleton_free(struct SdpSkeleton *skel);

struct SdpCrossParams sdp_cross_params_default(void);

struct SdpFusionParams sdp_fusion_params_default(void);

/**
 * Creates a fuser. `fusion` and `cross` may be null for defaults; the
 * skeleton is copied.
 *
 * # Safety
 * `skel` must be a live handle; `fusion` and `cross` null or valid; `out` valid.
 */
enum SdpStatus sdp_fuser_new(const struct SdpSkeleton *skel,
                             const struct SdpFusionParams *fusion,
                             const struct SdpCrossParams *cross,
                             bool apply_offsets,
                             struct SdpFuser **out);

/**
 * Registers or replaces one camera.
 *
 * # Safety
 * `fuser` must be a live handle and `camera` a valid pointer.
 */
enum SdpStatus sdp_fuser_set_camera(struct SdpFuser *fuser, const struct SdpCamera *camera);

/**
 * Queues one view for the next `sdp_fuser_step`.
 *
 * `depth` holds `width * height` meters row-major, 0 for invalid pixels, and
 * must match the camera's image size. `keypoints` holds `persons` blocks of
 * `joint_count * 3` values (u, v, confidence); a NaN u or v marks an absent
 * joint. It may be null when `persons` is 0. Data is copied.
 *
 * # Safety
 * `fuser` must be a live handle; `depth` must point to `width * height`
 * floats; `keypoints` to `persons * joint_count * 3` doubles.
 */
enum SdpStatus sdp_fuser_add_view(struct SdpFuser *fuser,
                                  uint32_t view_id,
                                  const float *depth,
                                  uint32_t width,
                                  uint32_t height,
                                  const double *keypoints,
                                  size_t persons);

/**
 * Fuses the queued views into poses and advances the tracker by one frame.
 * Views not queued count as empty. Writes the number of output poses.
 *
 * # Safety
 * `fuser` must be a live handle; `count` null or valid.
 */
enum SdpStatus sdp_fuser_step(struct SdpFuser *fuser, size_t *count);

/**
 * Number of poses from the last step.
 *
 * # Safety
 * `fuser` must be null or a live handle.
 */
size_t sdp_fuser_pose_count(const struct SdpFuser *fuser);

/**
 * Copies pose `index` of the last step. `joints` receives `joint_count * 3`
 * world coordinates (NaN for absent joints); `support` (nullable) receives
 * `joint_count` proposal counts (0 for absent joints).
 *
 * # Safety
 * `fuser` must be a live handle, `person_id` and `joints` valid, `support`
 * null or valid, with the sizes above.
 */
enum SdpStatus sdp_fuser_get_pose(const struct SdpFuser *fuser,
                                  size_t index,
                                  uint64_t *person_id,
                                  double *joints,
                                  uint32_t *support);

/**
 * Number of live tracks, including ones missing this frame.
 *
 * # Safety
 * `fuser` must be null or a live handle.
 */
size_t sdp_fuser_track_count(const struct SdpFuser *fuser);

/**
 * # Safety
 * `fuser` must be null or a handle not yet freed.
 */
void sdp_fuser_free(struct SdpFuser *fuser);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEPTHPOSE_H */
