#ifndef AIS_RELABEL_H
#define AIS_RELABEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AisStatus {
  AIS_STATUS_OK = 0,
  AIS_STATUS_NULL_POINTER = 1,
  AIS_STATUS_INVALID_ARGUMENT = 2,
  AIS_STATUS_IO = 3,
  AIS_STATUS_MODEL = 4,
  AIS_STATUS_DATA = 5,
  AIS_STATUS_FAILED = 6,
  AIS_STATUS_PANIC = 7,
} AisStatus;

typedef enum AisMethod {
  AIS_METHOD_HYBRID = 0,
  AIS_METHOD_GREEDY = 1,
  AIS_METHOD_ORACLE = 2,
  AIS_METHOD_CBTR = 3,
  AIS_METHOD_ATD = 4,
  AIS_METHOD_KF_CV = 5,
  AIS_METHOD_KF_CTRV = 6,
} AisMethod;

/**
 * Run configuration plus an optional trained classifier.
 */
typedef struct AisEngine AisEngine;

/**
 * One AIS report. `time` is seconds since the stream epoch, `sog` knots,
 * `cog` degrees clockwise from north.
 */
typedef struct AisRecord {
  uint64_t point_id;
  uint64_t track_id;
  /**
   * Whether `track_id` holds a ground-truth identity.
   */
  bool has_track_id;
  double time;
  double lat;
  double lon;
  double sog;
  double cog;
} AisRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an engine. `config_toml` may be null for the defaults.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must be a
 * valid pointer to writable storage for one handle.
 */
enum AisStatus ais_engine_new(const char *config_toml, struct AisEngine **out);

/**
 * Releases an engine. Null is ignored.
 *
 * # Safety
 * `engine` must be null or a handle from [`ais_engine_new`] not yet freed.
 */
void ais_engine_free(struct AisEngine *engine);

/**
 * Loads a trained model file into the engine, replacing any previous one.
 *
 * # Safety
 * `engine` must be a live handle and `path` a NUL-terminated string.
 */
enum AisStatus ais_engine_load_model(struct AisEngine *engine, const char *path);

/**
 * Number of candidate slots the engine screens, or 0 for a null handle.
 *
 * # Safety
 * `engine` must be null or a live handle.
 */
size_t ais_engine_k(const struct AisEngine *engine);

/**
 * Relabels `n` records and writes one track id per record, in input order,
 * to `out_labels`. The hybrid method needs a loaded model; the oracle needs
 * ground truth on every record.
 *
 * # Safety
 * `engine` must be a live handle; `records` and `out_labels` must each
 * point to `n` elements.
 */
enum AisStatus ais_engine_relabel(const struct AisEngine *engine,
                                  const struct AisRecord *records,
                                  size_t n,
                                  enum AisMethod method,
                                  uint64_t *out_labels);

/**
 * Posit accuracy of `predicted` (one track id per record) against the
 * records' ground-truth ids.
 *
 * # Safety
 * `records` and `predicted` must each point to `n` elements; `out_accuracy`
 * must be writable.
 */
enum AisStatus ais_posit_accuracy(const struct AisRecord *records,
                                  const uint64_t *predicted,
                                  size_t n,
                                  bool exclude_endpoints,
                                  double *out_accuracy);

/**
 * Projects a geodetic position into its standard UTM zone.
 *
 * # Safety
 * All output pointers must be writable.
 */
enum AisStatus ais_to_utm(double lat,
                          double lon,
                          double *out_x,
                          double *out_y,
                          uint8_t *out_zone,
                          bool *out_north);

/**
 * Wraps an angle in radians into (-pi, pi].
 */
double ais_wrap_course(double angle);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated) and returns the full message length excluding the NUL.
 * Returns 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ais_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ais_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AIS_RELABEL_H */
