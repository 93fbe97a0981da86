/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef SHW_H
#define SHW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ShwStatus {
  SHW_STATUS_OK = 0,
  SHW_STATUS_NULL_ARGUMENT = 1,
  SHW_STATUS_INVALID_ARGUMENT = 2,
  SHW_STATUS_IO = 3,
  SHW_STATUS_PARSE = 4,
  SHW_STATUS_DEGENERATE_STRING = 5,
  /**
   * The requested wrench is out of reach; outputs are still filled.
   */
  SHW_STATUS_INFEASIBLE = 6,
  SHW_STATUS_NO_CONVERGENCE = 7,
  SHW_STATUS_RANK_DEFICIENT = 8,
  SHW_STATUS_NUMERICAL = 9,
  SHW_STATUS_PANIC = 10,
} ShwStatus;

/**
 * Triangle mesh with its acceleration structure.
 */
typedef struct ShwMesh ShwMesh;

/**
 * Rig geometry and tension bounds.
 */
typedef struct ShwRig ShwRig;

/**
 * One haptic loop over a mesh, stepped by the caller.
 */
typedef struct ShwSimulation ShwSimulation;

typedef struct ShwPose {
  double position[3];
  /**
   * w, x, y, z
   */
  double quaternion[4];
} ShwPose;

typedef struct ShwTensionReport {
  double tensions[8];
  double residual_norm;
  double objective;
  uint32_t iterations;
  bool optimal;
} ShwTensionReport;

typedef struct ShwPoseEstimate {
  struct ShwPose pose;
  double residual_rms;
  uint32_t iterations;
} ShwPoseEstimate;

typedef struct ShwFrame {
  uint64_t tick;
  double sim_time;
  struct ShwPose pose;
  /**
   * Contact wrench on the grip (force N, torque N·m).
   */
  double wrench[6];
  /**
   * Zero when the solver did not produce tensions.
   */
  double tensions[8];
  /**
   * 0 not run, 1 optimal, 2 scaled to the capability boundary, 3 failed.
   */
  uint8_t status;
  bool infeasible;
  bool trigger;
  double wrench_scale;
  double junction_gap;
  uint32_t contact_count;
  uint32_t bead_delta_count;
} ShwFrame;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *shw_last_error(void);

/**
 * NUL-terminated library version; static storage.
 */
const char *shw_version(void);

/**
 * Default rig: 1.4 x 0.8 x 1.0 m motor box, 20 cm circle, 0.5..30 N.
 *
 * # Safety
 * `out` must be a valid pointer to write a handle to.
 */
enum ShwStatus shw_rig_default(struct ShwRig **out);

/**
 * Loads a rig from its TOML file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum ShwStatus shw_rig_load(const char *path, struct ShwRig **out);

/**
 * Copy of `rig` with another attachment-circle diameter (m).
 *
 * # Safety
 * `rig` must be a live handle; `out` must be writable.
 */
enum ShwStatus shw_rig_with_diameter(const struct ShwRig *rig,
                                     double diameter,
                                     struct ShwRig **out);

/**
 * # Safety
 * `rig` must be NULL or a handle not yet freed.
 */
void shw_rig_free(struct ShwRig *rig);

/**
 * Writes the 8 string lengths (m) at `pose`.
 *
 * # Safety
 * `out_lengths` must hold 8 doubles.
 */
enum ShwStatus shw_string_lengths(const struct ShwRig *rig,
                                  const struct ShwPose *pose,
                                  double *out_lengths);

/**
 * Writes the 6x8 structure matrix, row-major (48 doubles).
 *
 * # Safety
 * `out_matrix` must hold 48 doubles.
 */
enum ShwStatus shw_structure_matrix(const struct ShwRig *rig,
                                    const struct ShwPose *pose,
                                    double *out_matrix);

/**
 * Tensions producing `wrench` (6 doubles) at `pose`. Returns
 * `Infeasible` with the report filled when the wrench is out of reach.
 *
 * # Safety
 * `wrench` must hold 6 doubles; `out` must be writable.
 */
enum ShwStatus shw_solve_tensions(const struct ShwRig *rig,
                                  const struct ShwPose *pose,
                                  const double *wrench,
                                  struct ShwTensionReport *out);

/**
 * Largest magnitude along the unit 6-vector `direction` the rig can exert
 * at `pose` within its tension bounds.
 *
 * # Safety
 * `direction` must hold 6 doubles; `out` must be writable.
 */
enum ShwStatus shw_wrench_capability(const struct ShwRig *rig,
                                     const struct ShwPose *pose,
                                     const double *direction,
                                     double *out);

/**
 * Grip pose from 8 measured lengths, starting at `guess`. On
 * `RankDeficient` the estimate is still written.
 *
 * # Safety
 * `lengths` must hold 8 doubles; `out` must be writable.
 */
enum ShwStatus shw_estimate_pose(const struct ShwRig *rig,
                                 const double *lengths,
                                 const struct ShwPose *guess,
                                 struct ShwPoseEstimate *out);

/**
 * Loads an OBJ or binary STL mesh.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum ShwStatus shw_mesh_load(const char *path, bool flip_winding, struct ShwMesh **out);

/**
 * # Safety
 * `mesh` must be a live handle.
 */
enum ShwStatus shw_mesh_triangle_count(const struct ShwMesh *mesh, uint64_t *out);

/**
 * # Safety
 * `mesh` must be NULL or a handle not yet freed.
 */
void shw_mesh_free(struct ShwMesh *mesh);

/**
 * New loop over copies of `rig` and `mesh` with the putty-gun prop and
 * default gains; `dt_ns` is the tick length.
 *
 * # Safety
 * `rig` and `mesh` must be live handles; `out` must be writable.
 */
enum ShwStatus shw_sim_new(const struct ShwRig *rig,
                           const struct ShwMesh *mesh,
                           uint64_t dt_ns,
                           struct ShwSimulation **out);

/**
 * Advances one tick towards `commanded`.
 *
 * # Safety
 * `sim` must be a live handle not used concurrently; `out` must be writable.
 */
enum ShwStatus shw_sim_step(struct ShwSimulation *sim,
                            const struct ShwPose *commanded,
                            bool trigger,
                            struct ShwFrame *out);

/**
 * Total putty samples extruded so far.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum ShwStatus shw_sim_bead_sample_count(const struct ShwSimulation *sim, uint64_t *out);

/**
 * # Safety
 * `sim` must be NULL or a handle not yet freed.
 */
void shw_sim_free(struct ShwSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHW_H */
