/* C interface for the wikisat pipeline. */

#ifndef WIKISAT_H
#define WIKISAT_H

#pragma once

/* Generated from the Rust sources by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * What a call did. Anything other than `Ok` leaves a message for
 * [`wikisat_last_error`].
 */
typedef enum WikisatStatus {
  /**
   * The call succeeded.
   */
  WIKISAT_STATUS_OK = 0,
  /**
   * A fatal runtime failure: I/O, malformed input, an ill-conditioned
   * computation.
   */
  WIKISAT_STATUS_RUNTIME_ERROR = 1,
  /**
   * Bad configuration: unreadable config files, schema violations,
   * inconsistent options.
   */
  WIKISAT_STATUS_CONFIG_ERROR = 2,
  /**
   * A pointer was null, a string was not UTF-8, or a value was out of
   * its documented range.
   */
  WIKISAT_STATUS_BAD_ARGUMENT = 3,
  /**
   * The input was understood but holds no answer (no coordinate, no
   * infobox term, no area field).
   */
  WIKISAT_STATUS_NOT_FOUND = 4,
  /**
   * An internal invariant failed; the library state is still sound.
   */
  WIKISAT_STATUS_PANIC = 5,
} WikisatStatus;

/**
 * How a subject is captured: one tile, a fixed 3 x 3 grid, or a grid sized
 * from the subject's reported surface area.
 */
typedef enum WikisatRegime {
  WIKISAT_REGIME_POINT = 0,
  WIKISAT_REGIME_EXTENDED = 1,
  WIKISAT_REGIME_AREA = 2,
} WikisatRegime;

/**
 * Which evidence produced a keyword label.
 */
typedef enum WikisatMatchChannel {
  /**
   * The infobox term matched.
   */
  WIKISAT_MATCH_CHANNEL_RAW_LABEL = 0,
  /**
   * A category name matched.
   */
  WIKISAT_MATCH_CHANNEL_CATEGORY = 1,
  /**
   * No keyword matched; the subject carries no label.
   */
  WIKISAT_MATCH_CHANNEL_UNLABELED = 2,
} WikisatMatchChannel;

/**
 * Ordered clusters of ordered keywords; the labeling priority structure.
 */
typedef struct WikisatHierarchy WikisatHierarchy;

/**
 * Which keywords get which capture regime.
 */
typedef struct WikisatRegimes WikisatRegimes;

/**
 * One imagery request: a square crop centered on a point.
 * `size_m == gsd_m * pixels` always holds.
 */
typedef struct WikisatTile {
  double lat;
  double lon;
  double size_m;
  double gsd_m;
  uint32_t pixels;
} WikisatTile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The library version as a static string; never null, never freed.
 */
const char *wikisat_version(void);

/**
 * The message of the most recent failure on the calling thread, empty
 * before the first failure. Never null; owned by the library.
 */
const char *wikisat_last_error(void);

/**
 * Release a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `text` must have been returned by a `wikisat_` function and not freed
 * before.
 */
void wikisat_string_free(char *text);

/**
 * The keyword hierarchy shipped with the library. Never null.
 */
struct WikisatHierarchy *wikisat_hierarchy_default(void);

/**
 * Parse a hierarchy from configuration text. On success `*out` owns the
 * handle; on failure it is null.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be writable.
 */
enum WikisatStatus wikisat_hierarchy_from_toml(const char *text, struct WikisatHierarchy **out);

/**
 * Load a hierarchy from a configuration file. On success `*out` owns the
 * handle; on failure it is null.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum WikisatStatus wikisat_hierarchy_load(const char *path, struct WikisatHierarchy **out);

/**
 * Total keywords across all clusters; 0 for a null handle.
 *
 * # Safety
 * `hierarchy`, when non-null, must be a live handle.
 */
size_t wikisat_hierarchy_keyword_count(const struct WikisatHierarchy *hierarchy);

/**
 * Release a hierarchy handle. Null is a no-op.
 *
 * # Safety
 * `hierarchy` must not be used after this call.
 */
void wikisat_hierarchy_free(struct WikisatHierarchy *hierarchy);

/**
 * The regime sets shipped with the library. Never null.
 */
struct WikisatRegimes *wikisat_regimes_default(void);

/**
 * Parse regime sets from configuration text. On success `*out` owns the
 * handle; on failure it is null.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be writable.
 */
enum WikisatStatus wikisat_regimes_from_toml(const char *text, struct WikisatRegimes **out);

/**
 * Load regime sets from a configuration file. On success `*out` owns the
 * handle; on failure it is null.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum WikisatStatus wikisat_regimes_load(const char *path, struct WikisatRegimes **out);

/**
 * The capture regime of a keyword. Keywords in no configured set are
 * point subjects.
 *
 * # Safety
 * `regimes` must be a live handle; `keyword` NUL-terminated; `out`
 * writable.
 */
enum WikisatStatus wikisat_regimes_classify(const struct WikisatRegimes *regimes,
                                            const char *keyword,
                                            enum WikisatRegime *out);

/**
 * Release a regimes handle. Null is a no-op.
 *
 * # Safety
 * `regimes` must not be used after this call.
 */
void wikisat_regimes_free(struct WikisatRegimes *regimes);

/**
 * Scan markup for the page's title-displayed coordinate.
 *
 * `NOT_FOUND` covers both a page without such a template and one whose
 * template does not parse; the error message tells them apart.
 *
 * # Safety
 * `wikitext` must be NUL-terminated; `out_lat` and `out_lon` writable.
 */
enum WikisatStatus wikisat_extract_coordinate(const char *wikitext,
                                              double *out_lat,
                                              double *out_lon);

/**
 * `deg + min/60 + sec/3600`, negated for south and west.
 *
 * `hemisphere` is one of `N`, `S`, `E`, `W` (either case). Components must
 * be non-negative with minutes and seconds below 60.
 *
 * # Safety
 * `out` must be writable.
 */
enum WikisatStatus wikisat_dms_to_decimal(double degrees,
                                          double minutes,
                                          double seconds,
                                          char hemisphere,
                                          double *out);

/**
 * Split a decimal coordinate into whole degrees and minutes, fractional
 * seconds, and a hemisphere letter (`N`/`S` when `is_latitude`, `E`/`W`
 * otherwise) carrying the sign.
 *
 * # Safety
 * All four out pointers must be writable.
 */
enum WikisatStatus wikisat_decimal_to_dms(double value,
                                          bool is_latitude,
                                          uint32_t *out_degrees,
                                          uint32_t *out_minutes,
                                          double *out_seconds,
                                          char *out_hemisphere);

/**
 * The infobox term of an isolated infobox block: template name with the
 * leading `Infobox` word removed, normalized. `NOT_FOUND` without one.
 *
 * # Safety
 * `infobox` must be NUL-terminated; `out_label` writable.
 */
enum WikisatStatus wikisat_raw_label_from_infobox(const char *infobox, char **out_label);

/**
 * The surface area in square kilometers stated by an infobox block, keys
 * tried in a fixed priority order. `NOT_FOUND` without a parseable value.
 *
 * # Safety
 * `infobox` must be NUL-terminated; `out_area` writable.
 */
enum WikisatStatus wikisat_infobox_area_km2(const char *infobox, double *out_area);

/**
 * Assign a keyword label: walk the hierarchy in order, trying the raw
 * label and then the categories for each keyword; the first hit decides.
 *
 * `raw_label` may be null when the article has no infobox term.
 * `categories` holds `category_count` NUL-terminated names. When no
 * keyword matches, the call still returns `OK` with both strings null and
 * the channel `UNLABELED`.
 *
 * # Safety
 * `hierarchy` must be a live handle; every category pointer non-null and
 * NUL-terminated; the three out pointers writable.
 */
enum WikisatStatus wikisat_assign_label(const struct WikisatHierarchy *hierarchy,
                                        const char *raw_label,
                                        const char *const *categories,
                                        size_t category_count,
                                        char **out_keyword,
                                        char **out_cluster,
                                        enum WikisatMatchChannel *out_channel);

/**
 * Plan the tile grid for a subject, row-major from the southwest corner.
 *
 * `area_km2` feeds the area regime; pass NaN, zero or a negative value
 * when no area is known (the plan then degrades to a single tile). The
 * call always writes the tile count to `*out_count`; pass a null `tiles`
 * to query the count, then call again with a buffer of at least that
 * capacity.
 *
 * # Safety
 * `tiles`, when non-null, must point to `capacity` writable elements;
 * `out_count` must be writable.
 */
enum WikisatStatus wikisat_plan_tiles(double lat,
                                      double lon,
                                      enum WikisatRegime regime,
                                      double area_km2,
                                      struct WikisatTile *tiles,
                                      size_t capacity,
                                      size_t *out_count);

/**
 * Run the whole pipeline as configured by the file at `config_path`;
 * stage outputs land in the configured output directory.
 *
 * When `out_report_json` is non-null it receives the run report as a JSON
 * string, owned by the caller.
 *
 * # Safety
 * `config_path` must be NUL-terminated; `out_report_json`, when non-null,
 * must be writable.
 */
enum WikisatStatus wikisat_run_pipeline(const char *config_path, char **out_report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WIKISAT_H */
