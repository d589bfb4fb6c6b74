#ifndef SNO_SCOPE_H
#define SNO_SCOPE_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum {
  SNO_SCOPE_ORBIT_CLASS_LEO = 0,
  SNO_SCOPE_ORBIT_CLASS_MEO = 1,
  SNO_SCOPE_ORBIT_CLASS_GEO = 2,
  SNO_SCOPE_ORBIT_CLASS_MIXED = 3,
  SNO_SCOPE_ORBIT_CLASS_TERRESTRIAL_SUSPECT = 4,
} SnoScopeOrbitClass;

typedef enum {
  SNO_SCOPE_STATUS_OK = 0,
  SNO_SCOPE_STATUS_NULL_POINTER = 1,
  SNO_SCOPE_STATUS_INVALID_UTF8 = 2,
  SNO_SCOPE_STATUS_PARSE = 3,
  SNO_SCOPE_STATUS_INVALID_ARGUMENT = 4,
  SNO_SCOPE_STATUS_INSUFFICIENT_DATA = 5,
  SNO_SCOPE_STATUS_PANIC = 99,
} SnoScopeStatus;

/**
 * Operator catalog.
 */
typedef struct SnoScopeCatalog SnoScopeCatalog;

/**
 * Result of classifying a speed-test corpus.
 */
typedef struct SnoScopeClassification SnoScopeClassification;

typedef struct {
  SnoScopeOrbitClass orbit;
  double confidence;
  double median_ms;
} SnoScopeOrbitVerdict;

/**
 * Relaxed/strict filter knobs. Fill with [`sno_scope_filter_params_default`].
 */
typedef struct {
  uintptr_t min_tests;
  double global_floor_ms;
  /**
   * Stop at the first malformed record instead of skipping it.
   */
  bool strict_parsing;
} SnoScopeFilterParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library from this thread.
 */
const char *sno_scope_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sno_scope_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void sno_scope_string_free(char *s);

/**
 * Quantile `q` in [0, 1] by linear interpolation at rank (n-1)q.
 *
 * # Safety
 * `samples` must point to `n` doubles; `out` must be writable.
 */
SnoScopeStatus sno_scope_percentile(const double *samples, uintptr_t n, double q, double *out);

/**
 * Orbit verdict for access latencies under the default classifier settings.
 *
 * # Safety
 * `latencies` must point to `n` doubles; `out` must be writable.
 */
SnoScopeStatus sno_scope_classify_orbit(const double *latencies,
                                        uintptr_t n,
                                        SnoScopeOrbitVerdict *out);

/**
 * The catalog shipped with the library. Never null.
 */
SnoScopeCatalog *sno_scope_catalog_bundled(void);

/**
 * Parses a catalog from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
SnoScopeStatus sno_scope_catalog_from_json(const char *json, SnoScopeCatalog **out);

/**
 * Number of operators in the catalog; 0 for null.
 *
 * # Safety
 * `catalog` must be null or a live catalog handle.
 */
uintptr_t sno_scope_catalog_len(const SnoScopeCatalog *catalog);

/**
 * # Safety
 * `catalog` must be null or a handle from this library, not yet freed.
 */
void sno_scope_catalog_free(SnoScopeCatalog *catalog);

SnoScopeFilterParams sno_scope_filter_params_default(void);

/**
 * Classifies speed-test sessions given as NDJSON text. `params` may be
 * null for defaults.
 *
 * # Safety
 * `catalog` must be a live catalog handle, `ndjson` a NUL-terminated
 * string, `params` null or readable, and `out` writable.
 */
SnoScopeStatus sno_scope_classify_ndjson(const SnoScopeCatalog *catalog,
                                         const char *ndjson,
                                         const SnoScopeFilterParams *params,
                                         SnoScopeClassification **out);

/**
 * Sessions parsed from the input; 0 for null.
 *
 * # Safety
 * `c` must be null or a live classification handle.
 */
uintptr_t sno_scope_classification_session_count(const SnoScopeClassification *c);

/**
 * Input lines skipped as malformed; 0 for null.
 *
 * # Safety
 * `c` must be null or a live classification handle.
 */
uintptr_t sno_scope_classification_malformed_count(const SnoScopeClassification *c);

/**
 * Sessions attributed to an operator; 0 for null.
 *
 * # Safety
 * `c` must be null or a live classification handle.
 */
uintptr_t sno_scope_classification_accepted_count(const SnoScopeClassification *c);

/**
 * Per-operator summary CSV. Free with `sno_scope_string_free`; null for a
 * null handle.
 *
 * # Safety
 * `c` must be null or a live classification handle.
 */
char *sno_scope_classification_summary_csv(const SnoScopeClassification *c);

/**
 * One disposition per session as NDJSON. Free with
 * `sno_scope_string_free`; null for a null handle.
 *
 * # Safety
 * `c` must be null or a live classification handle.
 */
char *sno_scope_classification_dispositions_ndjson(const SnoScopeClassification *c);

/**
 * # Safety
 * `c` must be null or a handle from this library, not yet freed.
 */
void sno_scope_classification_free(SnoScopeClassification *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SNO_SCOPE_H */
