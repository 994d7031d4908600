#ifndef ANATOMATCH_H
#define ANATOMATCH_H

/* This file is generated by cbindgen from anatomatch-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum AmStatus {
  AM_STATUS_OK = 0,
  AM_STATUS_NULL_ARGUMENT = 1,
  AM_STATUS_INVALID_UTF8 = 2,
  AM_STATUS_IO = 3,
  AM_STATUS_VALIDATION = 4,
  AM_STATUS_NUMERICAL = 5,
} AmStatus;

typedef enum AmMatchMode {
  AM_MATCH_NN = 0,
  AM_MATCH_FIXED_POINT = 1,
} AmMatchMode;

typedef enum AmMatchMethod {
  AM_METHOD_NN = 0,
  AM_METHOD_FIXED_POINT = 1,
  AM_METHOD_FIXED_POINT_FALLBACK_NN = 2,
} AmMatchMethod;

/**
 * Opaque embedding-volume handle.
 */
typedef struct AmVolume AmVolume;

/**
 * Matcher settings; obtain defaults from `am_matcher_config_default`.
 */
typedef struct AmMatcherConfig {
  enum AmMatchMode mode;
  uint64_t cube_l;
  double tau_dis;
  uint64_t max_iter;
  uint64_t min_points;
  double lambda;
} AmMatcherConfig;

/**
 * Match output: continuous voxel coordinates (clamped into the query
 * volume), the rounded voxel, millimeter coordinates, and diagnostics.
 */
typedef struct AmMatchResult {
  double voxel_z;
  double voxel_y;
  double voxel_x;
  double mm_z;
  double mm_y;
  double mm_x;
  int64_t index_z;
  int64_t index_y;
  int64_t index_x;
  enum AmMatchMethod method;
  uint64_t n_stable;
  bool clamped;
  bool translation_only;
} AmMatchResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static C string.
 */
const char *am_version(void);

/**
 * Message of the most recent failure on this thread, or NULL when the last
 * call succeeded. The pointer stays valid until the next failing call on
 * the same thread.
 */
const char *am_last_error_message(void);

/**
 * Reads an AEV file into a new volume handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must point to writable
 * storage for one pointer.
 */
enum AmStatus am_volume_read(const char *path, struct AmVolume **out);

/**
 * Writes a volume to an AEV file (bit-exact round trip).
 *
 * # Safety
 * `vol` must be a live handle from this library; `path` a NUL-terminated
 * string.
 */
enum AmStatus am_volume_write(const struct AmVolume *vol, const char *path);

/**
 * Builds a volume from a dense f32 payload in z-major, y, x, channel-last
 * order. `data_len` must equal `dims[0]*dims[1]*dims[2]*channels`.
 *
 * # Safety
 * `dims` and `spacing_mm` must point to 3 readable elements, `data` to
 * `data_len` readable floats, `out` to writable pointer storage.
 */
enum AmStatus am_volume_create(const uint64_t *dims,
                               uint64_t channels,
                               const double *spacing_mm,
                               bool normalized,
                               const float *data,
                               uint64_t data_len,
                               struct AmVolume **out);

/**
 * Releases a volume handle. NULL is a no-op.
 *
 * # Safety
 * `vol` must be NULL or a handle that has not been freed yet.
 */
void am_volume_free(struct AmVolume *vol);

/**
 * # Safety
 * `vol` must be a live handle; `out_dims` must hold 3 writable u64.
 */
enum AmStatus am_volume_dims(const struct AmVolume *vol, uint64_t *out_dims);

/**
 * # Safety
 * `vol` must be a live handle; `out_channels` writable.
 */
enum AmStatus am_volume_channels(const struct AmVolume *vol, uint64_t *out_channels);

/**
 * # Safety
 * `vol` must be a live handle; `out_spacing` must hold 3 writable f64.
 */
enum AmStatus am_volume_spacing(const struct AmVolume *vol, double *out_spacing);

/**
 * Copies the embedding vector at voxel (z, y, x) into `out` (length
 * `out_len` must equal the channel count).
 *
 * # Safety
 * `vol` must be a live handle; `out` must hold `out_len` writable floats.
 */
enum AmStatus am_volume_embedding_at(const struct AmVolume *vol,
                                     int64_t z,
                                     int64_t y,
                                     int64_t x,
                                     float *out,
                                     uint64_t out_len);

/**
 * Unit-normalizes every voxel vector into a new handle; zero vectors map to
 * e1 and are counted in `out_zero_replaced` (may be NULL).
 *
 * # Safety
 * `vol` must be a live handle; `out` writable pointer storage.
 */
enum AmStatus am_volume_normalize(const struct AmVolume *vol,
                                  struct AmVolume **out,
                                  uint64_t *out_zero_replaced);

/**
 * Concatenates normalized appearance and semantic volumes into the unified
 * embedding `[sqrt(lambda)*app, sqrt(1-lambda)*sem]`.
 *
 * # Safety
 * `app` and `sem` must be live handles; `out` writable pointer storage.
 */
enum AmStatus am_concat_unified(const struct AmVolume *app,
                                const struct AmVolume *sem,
                                double lambda,
                                struct AmVolume **out);

/**
 * Default matcher settings (fixed-point mode, L=5, tau_dis=2.0,
 * max_iter=20, min_points=4, lambda=0.5).
 */
struct AmMatcherConfig am_matcher_config_default(void);

/**
 * Matches template point (z, y, x) of `template` into `query`.
 *
 * # Safety
 * `template` and `query` must be live handles; `config` may be NULL for
 * defaults; `out` must point to writable result storage.
 */
enum AmStatus am_match(const struct AmVolume *template_,
                       const struct AmVolume *query,
                       int64_t z,
                       int64_t y,
                       int64_t x,
                       const struct AmMatcherConfig *config,
                       struct AmMatchResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANATOMATCH_H */
