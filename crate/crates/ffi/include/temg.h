#ifndef TEMG_H
#define TEMG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TemgStatus {
  TEMG_STATUS_OK = 0,
  TEMG_STATUS_NULL_POINTER = 1,
  TEMG_STATUS_INVALID_UTF8 = 2,
  TEMG_STATUS_IO = 3,
  TEMG_STATUS_PARSE = 4,
  TEMG_STATUS_INVALID_ARGUMENT = 5,
  TEMG_STATUS_OUT_OF_RANGE = 6,
  TEMG_STATUS_NUMERIC = 7,
  TEMG_STATUS_PANIC = 8,
} TemgStatus;

/*
 N x 108 motif-role count matrix.
 */
typedef struct TemgCounts TemgCounts;

/*
 Temporal transaction graph.
 */
typedef struct TemgGraph TemgGraph;

/*
 Trained or adapted classifier checkpoint.
 */
typedef struct TemgModel TemgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL. The pointer
 stays valid until the next call into this library on the same thread.
 */
const char *temg_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *temg_version(void);

/*
 Number of motif classes (36).
 */
size_t temg_num_motifs(void);

/*
 Columns per node in a count matrix (108).
 */
size_t temg_count_columns(void);

/*
 Loads a `src,dst,time,amount` CSV and, when `labels_path` is not NULL,
 an `address,label` CSV.

 # Safety
 Paths must be NUL-terminated strings; `out` must be writable.
 */
enum TemgStatus temg_graph_load(const char *tx_path,
                                const char *labels_path,
                                struct TemgGraph **out);

/*
 Builds a graph over nodes `0..num_nodes` from parallel edge arrays.
 Node `i` gets the address `"i"`. Self-transfers are dropped.

 # Safety
 Each array must hold `num_edges` elements; `out` must be writable.
 */
enum TemgStatus temg_graph_from_edges(uint32_t num_nodes,
                                      const uint32_t *src,
                                      const uint32_t *dst,
                                      const int64_t *time,
                                      const double *amount,
                                      size_t num_edges,
                                      struct TemgGraph **out);

/*
 # Safety
 `graph` must come from this library or be NULL.
 */
void temg_graph_free(struct TemgGraph *graph);

/*
 # Safety
 `graph` must be a live handle; `out` must be writable.
 */
enum TemgStatus temg_graph_num_nodes(const struct TemgGraph *graph, size_t *out);

/*
 # Safety
 `graph` must be a live handle; `out` must be writable.
 */
enum TemgStatus temg_graph_num_edges(const struct TemgGraph *graph, size_t *out);

/*
 Copies node labels into `out` (`-1` unknown, `0` benign, `1` anomalous).

 # Safety
 `out` must hold `len` elements and `len` must equal the node count.
 */
enum TemgStatus temg_graph_labels(const struct TemgGraph *graph, int8_t *out, size_t len);

/*
 Counts motif roles. `edge_limit == 0` means unlimited; a negative
 `aggregation` disables merging. `threads == 0` uses every core.

 # Safety
 `graph` must be a live handle; `out` must be writable.
 */
enum TemgStatus temg_count_motifs(const struct TemgGraph *graph,
                                  int64_t window,
                                  size_t edge_limit,
                                  int64_t aggregation,
                                  size_t threads,
                                  struct TemgCounts **out);

/*
 Exhaustive reference counter (no edge limit, small graphs only).

 # Safety
 `graph` must be a live handle; `out` must be writable.
 */
enum TemgStatus temg_count_motifs_bruteforce(const struct TemgGraph *graph,
                                             int64_t window,
                                             int64_t aggregation,
                                             struct TemgCounts **out);

/*
 # Safety
 `counts` must come from this library or be NULL.
 */
void temg_counts_free(struct TemgCounts *counts);

/*
 # Safety
 `counts` must be a live handle; `out` must be writable.
 */
enum TemgStatus temg_counts_num_nodes(const struct TemgCounts *counts, size_t *out);

/*
 Count of `node` in role `role` of motif `motif`.

 # Safety
 `counts` must be a live handle; `out` must be writable.
 */
enum TemgStatus temg_counts_get(const struct TemgCounts *counts,
                                size_t node,
                                size_t motif,
                                size_t role,
                                uint64_t *out);

/*
 Copies the row-major N x 108 matrix into `out`.

 # Safety
 `out` must hold `len` elements; `len` must be `N * 108`.
 */
enum TemgStatus temg_counts_copy(const struct TemgCounts *counts, uint64_t *out, size_t len);

/*
 Loads a checkpoint written by `temg train` or `temg tta`.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TemgStatus temg_model_load(const char *path, struct TemgModel **out);

/*
 # Safety
 `model` must come from this library or be NULL.
 */
void temg_model_free(struct TemgModel *model);

/*
 Anomaly probabilities for every node of `graph`.

 # Safety
 Handles must be live; `out` must hold `len` = node-count elements.
 */
enum TemgStatus temg_model_score(const struct TemgModel *model,
                                 const struct TemgGraph *graph,
                                 const struct TemgCounts *counts,
                                 double *out,
                                 size_t len);

/*
 Average precision of `scores` against 0/1 `labels`.

 # Safety
 Both arrays must hold `len` elements; `out` must be writable.
 */
enum TemgStatus temg_auc_prc(const double *scores, const uint8_t *labels, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEMG_H */
