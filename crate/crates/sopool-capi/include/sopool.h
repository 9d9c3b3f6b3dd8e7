#ifndef SOPOOL_H
#define SOPOOL_H

/* Generated by cbindgen from sopool-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Pooling families with a defined classifier parameter count.
 */
typedef enum SopCountKind {
  SOP_COUNT_FLATTEN = 0,
  SOP_COUNT_BIMAP = 1,
  SOP_COUNT_ATTN = 2,
} SopCountKind;

/**
 * First-order pooling modes.
 */
typedef enum SopFirstOrder {
  SOP_FIRST_ORDER_SUM = 0,
  SOP_FIRST_ORDER_AVG = 1,
  SOP_FIRST_ORDER_MAX = 2,
} SopFirstOrder;

/**
 * GNN variants for training.
 */
typedef enum SopGnn {
  SOP_GNN_GIN0 = 0,
  SOP_GNN_GIN_EPS = 1,
  SOP_GNN_SUM_ONE_LAYER = 2,
  SOP_GNN_MEAN_MLP = 3,
  SOP_GNN_MEAN_ONE_LAYER = 4,
  SOP_GNN_MAX_MLP = 5,
  SOP_GNN_MAX_ONE_LAYER = 6,
} SopGnn;

/**
 * Pooling selection for training.
 */
typedef enum SopPool {
  SOP_POOL_SUM = 0,
  SOP_POOL_AVG = 1,
  SOP_POOL_MAX = 2,
  SOP_POOL_SOPOOL = 3,
  SOP_POOL_BIMAP = 4,
  SOP_POOL_ATTN = 5,
  SOP_POOL_MATTN = 6,
  SOP_POOL_COV = 7,
  SOP_POOL_ATTN_POOL = 8,
} SopPool;

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum SopStatus {
  SOP_OK = 0,
  SOP_NULL_POINTER = 1,
  SOP_INVALID_ARGUMENT = 2,
  SOP_SHAPE_ERROR = 3,
  SOP_DATA_ERROR = 4,
  SOP_DIVERGENCE = 5,
  SOP_IO_ERROR = 6,
  SOP_PANIC = 7,
} SopStatus;

typedef struct SopDataset SopDataset;

typedef struct SopMatrix SopMatrix;

/**
 * Training configuration. Zero-valued optional fields mean "unset":
 * `fprime` (required for the bimap poolings), `blocks` (0 = flat model),
 * `k` (0 = derive from the dataset's average size).
 */
typedef struct SopTrainConfig {
  enum SopGnn gnn;
  enum SopPool pool;
  size_t hidden;
  size_t batch_size;
  size_t fprime;
  size_t blocks;
  size_t k;
  size_t epochs;
  uint64_t seed;
  /**
   * 0 = mean epoch selection, nonzero = per-fold.
   */
  int32_t epoch_select_per_fold;
} SopTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version string; static storage, do not free.
 */
const char *sop_version(void);

/**
 * Message for the most recent error on this thread; valid until the next
 * failing call. Do not free.
 */
const char *sop_last_error_message(void);

/**
 * Creates a rows×cols matrix from row-major data. Returns null on bad input.
 */
struct SopMatrix *sop_matrix_new(size_t rows, size_t cols, const double *data);

void sop_matrix_free(struct SopMatrix *matrix);

size_t sop_matrix_rows(const struct SopMatrix *matrix);

size_t sop_matrix_cols(const struct SopMatrix *matrix);

/**
 * Copies the row-major contents into `out`, which must hold exactly
 * rows·cols doubles.
 */
enum SopStatus sop_matrix_copy_data(const struct SopMatrix *matrix, double *out, size_t len);

/**
 * Columnwise sum/avg/max pooling; writes an f×1 matrix.
 */
enum SopStatus sop_pool_first_order(const struct SopMatrix *h,
                                    enum SopFirstOrder mode,
                                    struct SopMatrix **out);

/**
 * Second-order pooling HᵀH; writes an f×f matrix.
 */
enum SopStatus sop_sopool(const struct SopMatrix *h, struct SopMatrix **out);

/**
 * Bilinear-mapping pooling; writes the flattened f′²×1 vector.
 */
enum SopStatus sop_sopool_bimap(const struct SopMatrix *h,
                                const struct SopMatrix *mapping,
                                struct SopMatrix **out);

/**
 * Attentional pooling HᵀHμ; writes an f×1 vector.
 */
enum SopStatus sop_sopool_attn(const struct SopMatrix *h,
                               const struct SopMatrix *attention,
                               struct SopMatrix **out);

/**
 * Multi-head pooling UHᵀH; writes a k×f matrix.
 */
enum SopStatus sop_sopool_mattn(const struct SopMatrix *h,
                                const struct SopMatrix *heads,
                                struct SopMatrix **out);

/**
 * Covariance pooling (mean-centered HᵀH); writes an f×f matrix.
 */
enum SopStatus sop_covpool(const struct SopMatrix *h, struct SopMatrix **out);

/**
 * Softmax-attention pooling HᵀSoftmax(Hμ); writes an f×1 vector.
 */
enum SopStatus sop_attnpool(const struct SopMatrix *h,
                            const struct SopMatrix *attention,
                            struct SopMatrix **out);

/**
 * Hierarchical pooling step: writes A′ = CACᵀ (k×k), H′ = UHᵀH (k×f), and
 * C = UHᵀ (k×n).
 */
enum SopStatus sop_update_adjacency(const struct SopMatrix *adjacency,
                                    const struct SopMatrix *h,
                                    const struct SopMatrix *heads,
                                    struct SopMatrix **adjacency_out,
                                    struct SopMatrix **reps_out,
                                    struct SopMatrix **contribution_out);

/**
 * Bias-free parameter count of pooling + 1-layer classifier. `fprime` is
 * only read for the bimap kind.
 */
enum SopStatus sop_count_classifier_params(enum SopCountKind kind,
                                           uint64_t f,
                                           uint64_t fprime,
                                           uint64_t classes,
                                           uint64_t *out);

/**
 * Parses a TUDataset directory (`dir/name` holding `name_*.txt`) with the
 * default feature construction.
 */
enum SopStatus sop_dataset_parse(const char *dir, const char *name, struct SopDataset **out);

void sop_dataset_free(struct SopDataset *dataset);

size_t sop_dataset_graph_count(const struct SopDataset *dataset);

size_t sop_dataset_num_classes(const struct SopDataset *dataset);

size_t sop_dataset_feature_dim(const struct SopDataset *dataset);

/**
 * Runs stratified 10-fold cross-validation training and writes the selected
 * mean±std validation accuracy.
 */
enum SopStatus sop_train_cv(const struct SopDataset *dataset,
                            const struct SopTrainConfig *config,
                            double *mean_out,
                            double *std_out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SOPOOL_H */
