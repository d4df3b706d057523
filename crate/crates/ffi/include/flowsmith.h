#ifndef FLOWSMITH_H
#define FLOWSMITH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call.
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  FS_STATUS_NULL_ARGUMENT = 1,
  FS_STATUS_INVALID_UTF8 = 2,
  FS_STATUS_REGISTRY = 3,
  FS_STATUS_PARSE = 4,
  FS_STATUS_INVALID = 5,
  FS_STATUS_PANIC = 6,
} FsStatus;

// Workflow graph.
typedef struct FsGraph FsGraph;

// Node schema registry.
typedef struct FsRegistry FsRegistry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until
// the next call on the same thread.
const char *fs_last_error(void);

// Library version as a static string.
const char *fs_version(void);

// Load node docs from the directory `path`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum FsStatus fs_registry_open(const char *path, struct FsRegistry **out);

// Number of node classes, 0 for NULL.
//
// # Safety
// `registry` must be NULL or a live handle.
size_t fs_registry_len(const struct FsRegistry *registry);

// # Safety
// `registry` must be NULL or a handle not yet freed.
void fs_registry_free(struct FsRegistry *registry);

// Parse prompt JSON of `len` bytes.
//
// # Safety
// `json` must point to `len` readable bytes and `out` be writable.
enum FsStatus fs_graph_from_json(const uint8_t *json, size_t len, struct FsGraph **out);

// Parse and lower workflow code.
//
// # Safety
// `registry` must be a live handle, `code` NUL-terminated and `out` writable.
enum FsStatus fs_graph_from_code(const struct FsRegistry *registry,
                                 const char *code,
                                 struct FsGraph **out);

// Number of nodes, 0 for NULL.
//
// # Safety
// `graph` must be NULL or a live handle.
size_t fs_graph_node_count(const struct FsGraph *graph);

// # Safety
// `graph` must be NULL or a handle not yet freed.
void fs_graph_free(struct FsGraph *graph);

// Canonical code for a valid graph. Free the result with [`fs_string_free`].
//
// # Safety
// Both handles must be live and `out` writable.
enum FsStatus fs_graph_to_code(const struct FsRegistry *registry,
                               const struct FsGraph *graph,
                               char **out);

// Prompt JSON. Free the result with [`fs_string_free`].
//
// # Safety
// `graph` must be live and `out` writable.
enum FsStatus fs_graph_to_json(const struct FsGraph *graph, char **out);

// Validate `graph`. Stores the error count in `errors` and, when `report`
// is not NULL, the printed report there. Returns `FS_STATUS_INVALID` when
// there are errors.
//
// # Safety
// Both handles must be live, `errors` writable and `report` NULL or writable.
enum FsStatus fs_graph_validate(const struct FsRegistry *registry,
                                const struct FsGraph *graph,
                                size_t *errors,
                                char **report);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void fs_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWSMITH_H */
