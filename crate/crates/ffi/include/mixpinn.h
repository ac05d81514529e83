#ifndef MIXPINN_H
#define MIXPINN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MixStatus {
  MIX_STATUS_OK = 0,
  MIX_STATUS_NULL_POINTER = 1,
  MIX_STATUS_INVALID_ARGUMENT = 2,
  MIX_STATUS_IO = 3,
  MIX_STATUS_FORMAT = 4,
  MIX_STATUS_HASH_MISMATCH = 5,
  MIX_STATUS_NUMERICAL = 6,
  MIX_STATUS_BUFFER_TOO_SMALL = 7,
  MIX_STATUS_PANIC = 8,
} MixStatus;

/**
 * Ground-truth samples paired with a mesh.
 */
typedef struct MixDataset MixDataset;

/**
 * Tetrahedral mesh with anatomy labels.
 */
typedef struct MixMesh MixMesh;

/**
 * Trained parameters plus the graph builder for the mesh they were trained on.
 */
typedef struct MixModel MixModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mixpinn_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns the full message
 * length excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes of writes.
 */
uintptr_t mixpinn_last_error_message(char *buf, uintptr_t len);

/**
 * Spherical coordinates (r, theta, phi) of a point, theta from +z.
 *
 * # Safety
 * `out` must be valid for 3 writes.
 */
enum MixStatus mixpinn_spherical(double x, double y, double z, double *out);

/**
 * The default box phantom, centered.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum MixStatus mixpinn_mesh_phantom(struct MixMesh **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for a pointer write.
 */
enum MixStatus mixpinn_mesh_load(const char *path, struct MixMesh **out);

/**
 * Node count, or 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
uintptr_t mixpinn_mesh_node_count(const struct MixMesh *mesh);

/**
 * # Safety
 * `mesh` must be null or a live handle; it is invalid afterwards.
 */
void mixpinn_mesh_free(struct MixMesh *mesh);

/**
 * Loads a dataset and checks that it belongs to `mesh`.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `mesh` a live handle and `out`
 * valid for a pointer write.
 */
enum MixStatus mixpinn_dataset_load(const char *path,
                                    const struct MixMesh *mesh,
                                    struct MixDataset **out);

/**
 * Sample count, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
uintptr_t mixpinn_dataset_len(const struct MixDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a live handle; it is invalid afterwards.
 */
void mixpinn_dataset_free(struct MixDataset *dataset);

/**
 * Loads a checkpoint trained on `mesh`.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `mesh` a live handle and `out`
 * valid for a pointer write.
 */
enum MixStatus mixpinn_model_load(const char *path,
                                  const struct MixMesh *mesh,
                                  struct MixModel **out);

/**
 * # Safety
 * `model` must be null or a live handle; it is invalid afterwards.
 */
void mixpinn_model_free(struct MixModel *model);

/**
 * Predicts the field for dataset sample `index`, writing `3 * node_count`
 * values (x, y, z per node, row-major) into `out`.
 *
 * # Safety
 * Handles must be live; `out` must be valid for `len` writes.
 */
enum MixStatus mixpinn_predict_sample(const struct MixModel *model,
                                      const struct MixDataset *dataset,
                                      uintptr_t index,
                                      double *out,
                                      uintptr_t len);

/**
 * Predicts the field for an arbitrary contact: `contact[k]` is a node index
 * and `prescribed[3k..3k+3]` its displacement.
 *
 * # Safety
 * `model` must be live; `contact` valid for `count` reads, `prescribed` for
 * `3 * count` reads and `out` for `len` writes.
 */
enum MixStatus mixpinn_predict_contact(const struct MixModel *model,
                                       const uintptr_t *contact,
                                       const double *prescribed,
                                       uintptr_t count,
                                       double *out,
                                       uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIXPINN_H */
