#ifndef KGADAPT_H
#define KGADAPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome categories, mirroring the library's classification.
 */
typedef enum KgCategory {
  KG_CATEGORY_OUT_PIE = 0,
  KG_CATEGORY_IN_PIE = 1,
  KG_CATEGORY_INVALID = 2,
} KgCategory;

/**
 * Result codes. Values are stable.
 */
typedef enum KgStatus {
  KG_STATUS_OK = 0,
  KG_STATUS_INVALID_INPUT = 1,
  KG_STATUS_UNDEFINED_SCORE = 2,
  KG_STATUS_CONFIG = 3,
  KG_STATUS_PARSE = 4,
  KG_STATUS_NOT_FOUND = 5,
  KG_STATUS_INTERNAL = 6,
  KG_STATUS_TUNING = 7,
  KG_STATUS_BACKEND = 8,
  KG_STATUS_IO = 9,
  KG_STATUS_NULL_POINTER = 10,
  KG_STATUS_UTF8 = 11,
  KG_STATUS_PANIC = 12,
} KgStatus;

/**
 * A catalog, with a lazily built oracle recommender.
 */
typedef struct KgCatalog KgCatalog;

/**
 * A user's PKG.
 */
typedef struct KgPkg KgPkg;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *kg_last_error_message(void);

/**
 * Library version, a static string.
 */
const char *kg_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void kg_string_free(char *s);

/**
 * Reads a PKG file.
 *
 * # Safety
 * `path` must be a valid C string; `out` must be writable.
 */
enum KgStatus kg_pkg_load(const char *path, struct KgPkg **out);

/**
 * Parses a PKG from the text of a PKG file.
 *
 * # Safety
 * `text` must be a valid C string; `out` must be writable.
 */
enum KgStatus kg_pkg_parse(const char *text, struct KgPkg **out);

/**
 * Releases a PKG handle. NULL is ignored.
 *
 * # Safety
 * `pkg` must come from this library and not be freed twice.
 */
void kg_pkg_free(struct KgPkg *pkg);

/**
 * Number of rated items; 0 for NULL.
 *
 * # Safety
 * `pkg` must be NULL or a live handle.
 */
size_t kg_pkg_len(const struct KgPkg *pkg);

/**
 * Renders a PKG in the PKG file format.
 *
 * # Safety
 * `pkg` must be a live handle; `out` must be writable.
 */
enum KgStatus kg_pkg_to_string(const struct KgPkg *pkg, char **out);

/**
 * Bias score of the ordered pair (`given`, `bias`).
 *
 * # Safety
 * Pointers must be valid; `out_q` must be writable.
 */
enum KgStatus kg_bias_score(const struct KgPkg *pkg,
                            const char *given,
                            const char *bias,
                            double *out_q);

/**
 * Detected PIEs as text, one `given<TAB>bias<TAB>q<TAB>support` line each,
 * strongest first. `inclusive` non-zero keeps pairs with `|q| == threshold`.
 *
 * # Safety
 * `pkg` must be a live handle; `out` must be writable.
 */
enum KgStatus kg_detect(const struct KgPkg *pkg,
                        double threshold,
                        size_t min_support,
                        int32_t inclusive,
                        char **out);

/**
 * Adapts `pkg` for the PIE (`given`, `bias`) and returns a new handle; the
 * input is not modified. `strategy` is one of soft, hard, removal,
 * prompt-only, none.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum KgStatus kg_adapt(const struct KgPkg *pkg,
                       const char *given,
                       const char *bias,
                       const char *strategy,
                       double proportion,
                       struct KgPkg **out);

/**
 * System and user messages for a query. `avoid` may be NULL; when set, the
 * avoidance sentence for that feature is appended to the user message.
 *
 * # Safety
 * Pointers must be valid (`avoid` may be NULL); outs must be writable.
 */
enum KgStatus kg_build_prompt(const struct KgPkg *pkg,
                              const char *query,
                              const char *avoid,
                              char **out_system,
                              char **out_user);

/**
 * Reads a catalog in JSON-lines form.
 *
 * # Safety
 * `path` must be a valid C string; `out` must be writable.
 */
enum KgStatus kg_catalog_load(const char *path, struct KgCatalog **out);

/**
 * Releases a catalog handle. NULL is ignored.
 *
 * # Safety
 * `catalog` must come from this library and not be freed twice.
 */
void kg_catalog_free(struct KgCatalog *catalog);

/**
 * Number of catalog entries; 0 for NULL.
 *
 * # Safety
 * `catalog` must be NULL or a live handle.
 */
size_t kg_catalog_len(const struct KgCatalog *catalog);

/**
 * Resolves free text to a catalog item id. `KG_STATUS_NOT_FOUND` when no
 * catalog name occurs in the text.
 *
 * # Safety
 * Pointers must be valid; `out_id` must be writable.
 */
enum KgStatus kg_extract_item(const struct KgCatalog *catalog, const char *text, char **out_id);

/**
 * Classifies a recommendation text against the PIE (`given`, `bias`) of
 * the user's base PKG. Items the user already rated count as Invalid.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum KgStatus kg_classify(const struct KgCatalog *catalog,
                          const struct KgPkg *base,
                          const char *text,
                          const char *given,
                          const char *bias,
                          enum KgCategory *out);

/**
 * Deterministic oracle recommendation for `query` given `pkg`; returns the
 * recommended item's name.
 *
 * # Safety
 * Pointers must be valid; `out_text` must be writable.
 */
enum KgStatus kg_oracle_recommend(const struct KgCatalog *catalog,
                                  const struct KgPkg *pkg,
                                  const char *query,
                                  char **out_text);

/**
 * One tuner update: `+lr` on In-PIE, `-lr` on Invalid, unchanged on
 * Out-PIE, clamped to [0, 1].
 */
double kg_tune_update(double p, enum KgCategory category, double learning_rate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGADAPT_H */
