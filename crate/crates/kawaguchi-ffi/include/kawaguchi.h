#ifndef KAWAGUCHI_H
#define KAWAGUCHI_H

/* Generated by cbindgen from kawaguchi-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Call outcome. Mirrors the CLI exit codes for the shared failure classes.
 */
typedef enum KgStatus {
  KG_STATUS_OK = 0,
  KG_STATUS_CHECK_FAILED = 1,
  KG_STATUS_INPUT_ERROR = 2,
  KG_STATUS_SOLVER_DIVERGED = 3,
  KG_STATUS_NULL_POINTER = 4,
  KG_STATUS_PANIC = 5,
} KgStatus;

/**
 * Model handle: the form plus named symmetry generators.
 */
typedef struct KgModel KgModel;

/**
 * Surface handle.
 */
typedef struct KgSurface KgSurface;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for this thread. The pointer stays valid until the next
 * FFI call on the same thread; do not free it.
 */
const char *kg_last_error(void);

/**
 * Free a string returned through a `char**` out-parameter.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void kg_string_free(char *s);

/**
 * Create a builtin model from a spec like `"maxwell"` or `"nambu_goto(N=3)"`.
 * Returns null on error (see [`kg_last_error`]).
 *
 * # Safety
 * `spec` must be a valid NUL-terminated string.
 */
struct KgModel *kg_model_builtin(const char *spec);

/**
 * Create a model from model-file text (see the model file format docs).
 * Returns null on error.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string.
 */
struct KgModel *kg_model_from_text(const char *text);

/**
 * # Safety
 * `model` must come from `kg_model_builtin`/`kg_model_from_text`, once.
 */
void kg_model_free(struct KgModel *model);

/**
 * Number of coordinates (N+1) of the model's manifold.
 *
 * # Safety
 * `model` must be a live handle from this library (or null).
 */
uintptr_t kg_model_coord_count(const struct KgModel *model);

/**
 * Surface dimension n+1 (the Plücker degree).
 *
 * # Safety
 * `model` must be a live handle from this library (or null).
 */
uintptr_t kg_model_degree(const struct KgModel *model);

/**
 * Run the standard model checks (homogeneity, Euler identity, Plücker relations,
 * Killing list) and hand back the JSON report. `KG_STATUS_CHECK_FAILED` means the
 * checks ran and at least one failed.
 *
 * # Safety
 * `model` must be a live handle; `out_json` must be valid for writes.
 */
enum KgStatus kg_model_check_json(const struct KgModel *model,
                                  uintptr_t samples,
                                  uint64_t seed,
                                  char **out_json);

/**
 * Build a surface from raw node data. `shape`/`spacing`/`origin` have `degree`
 * entries; `values` is node-major (`node * coord_count + mu`, last parameter index
 * fastest) with `coord_count * Π shape` entries.
 *
 * # Safety
 * All pointers must reference arrays of the stated lengths.
 */
struct KgSurface *kg_surface_from_data(uintptr_t coord_count,
                                       uintptr_t degree,
                                       const uintptr_t *shape,
                                       const double *spacing,
                                       const double *origin,
                                       const double *values,
                                       uintptr_t values_len);

/**
 * Read a surface from a CSV file plus its JSON descriptor. Returns null on error.
 *
 * # Safety
 * Both paths must be valid NUL-terminated strings.
 */
struct KgSurface *kg_surface_read_csv(const char *csv_path, const char *descriptor_path);

/**
 * Write a surface as CSV plus descriptor JSON.
 *
 * # Safety
 * `surface` must be a live handle; both paths valid NUL-terminated strings.
 */
enum KgStatus kg_surface_write_csv(const struct KgSurface *surface,
                                   const char *csv_path,
                                   const char *descriptor_path);

/**
 * # Safety
 * `surface` must come from a `kg_surface_*` constructor, once.
 */
void kg_surface_free(struct KgSurface *surface);

/**
 * # Safety
 * `surface` must be a live handle from this library (or null).
 */
uintptr_t kg_surface_node_count(const struct KgSurface *surface);

/**
 * Copy node values into `out` (length `node_count * coord_count`).
 *
 * # Safety
 * `out` must reference an array of at least `out_len` doubles.
 */
enum KgStatus kg_surface_values(const struct KgSurface *surface, double *out, uintptr_t out_len);

/**
 * Discrete action of the surface under the model's form.
 *
 * # Safety
 * `model` and `surface` must be live handles; `out_action` valid for writes.
 */
enum KgStatus kg_action(const struct KgModel *model,
                        const struct KgSurface *surface,
                        double *out_action);

/**
 * Euler-Lagrange residual norms and report JSON. `expanded != 0` selects the
 * second-derivative discretization.
 *
 * # Safety
 * `model` and `surface` must be live handles; `out_json` valid for writes.
 */
enum KgStatus kg_residual_json(const struct KgModel *model,
                               const struct KgSurface *surface,
                               int32_t expanded,
                               char **out_json);

/**
 * Damped Newton solve over the given free coordinate components (fiber components
 * when `free_coords` is null/empty). On success `*out_surface` holds the solved
 * surface and `*out_json` the convergence report.
 *
 * # Safety
 * `free_coords`, when non-null, must reference `free_len` entries.
 */
enum KgStatus kg_solve(const struct KgModel *model,
                       const struct KgSurface *surface,
                       const uintptr_t *free_coords,
                       uintptr_t free_len,
                       double tolerance,
                       uintptr_t max_iterations,
                       struct KgSurface **out_surface,
                       char **out_json);

/**
 * Nöther-current conservation diagnostic for a named model symmetry: pulls the
 * current back to the surface, applies the discrete exterior derivative and
 * reports interior norms as JSON.
 *
 * # Safety
 * Handles must be live; `vector_name` NUL-terminated; `out_json` writable.
 */
enum KgStatus kg_noether_divergence_json(const struct KgModel *model,
                                         const char *vector_name,
                                         const struct KgSurface *surface,
                                         char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KAWAGUCHI_H */
