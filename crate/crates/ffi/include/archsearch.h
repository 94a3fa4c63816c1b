#ifndef ARCHSEARCH_H
#define ARCHSEARCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Genes per genotype.
 */
#define AS_GENOTYPE_LEN 29

typedef enum AsStatus {
  AS_OK = 0,
  AS_ERR_NULL_POINTER = 1,
  AS_ERR_INVALID_ARGUMENT = 2,
  AS_ERR_PARSE = 3,
  AS_ERR_IO = 4,
  AS_ERR_RUNTIME = 5,
  AS_ERR_PANIC = 6,
} AsStatus;

typedef struct AsModel AsModel;

typedef struct AsSpace AsSpace;

typedef struct AsTable AsTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none.
 */
const char *as_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *as_version(void);

/**
 * Creates a space from a preset name (`default`, `compact`) or a space file.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AsStatus as_space_new(const char *name, struct AsSpace **out);

/**
 * # Safety
 * `space` must be NULL or a handle from [`as_space_new`] not yet freed.
 */
void as_space_free(struct AsSpace *space);

/**
 * Length of the one-hot feature vector of this space.
 *
 * # Safety
 * `space` must be a live handle and `out` a valid pointer.
 */
enum AsStatus as_space_one_hot_dim(const struct AsSpace *space, size_t *out);

/**
 * Number of canonical genotypes, saturated at `UINT64_MAX`.
 *
 * # Safety
 * `space` must be a live handle and `out` a valid pointer.
 */
enum AsStatus as_space_cardinality(const struct AsSpace *space, uint64_t *out);

/**
 * Checks one genotype; `AS_ERR_INVALID_ARGUMENT` when it is not canonical.
 *
 * # Safety
 * `genes` must point to 29 bytes.
 */
enum AsStatus as_genotype_validate(const struct AsSpace *space, const uint8_t *genes);

/**
 * Writes the canonical form of `genes` (padding slots zeroed) to `out`.
 *
 * # Safety
 * `genes` and `out` must each point to 29 bytes; they may alias.
 */
enum AsStatus as_genotype_canonicalize(const struct AsSpace *space,
                                       const uint8_t *genes,
                                       uint8_t *out);

/**
 * Writes `count` random canonical genotypes, reproducible from `seed`.
 *
 * # Safety
 * `out` must point to `29·count` writable bytes.
 */
enum AsStatus as_genotype_random(const struct AsSpace *space,
                                 uint64_t seed,
                                 size_t count,
                                 uint8_t *out);

/**
 * Writes the one-hot features of one genotype; `out` holds `one_hot_dim` doubles.
 *
 * # Safety
 * `genes` must point to 29 bytes and `out` to `capacity` doubles.
 */
enum AsStatus as_genotype_one_hot(const struct AsSpace *space,
                                  const uint8_t *genes,
                                  double *out,
                                  size_t capacity);

/**
 * Closed-form accuracy of the synthetic benchmark, in [0, 1].
 *
 * # Safety
 * `genes` must point to 29 bytes and `out` be valid.
 */
enum AsStatus as_synthetic_accuracy(const struct AsSpace *space, const uint8_t *genes, double *out);

/**
 * The deterministic synthetic table of a space.
 *
 * # Safety
 * `space` must be a live handle and `out` a valid pointer.
 */
enum AsStatus as_table_synthetic(const struct AsSpace *space, struct AsTable **out);

/**
 * Loads a table file and checks it covers every key of the space.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AsStatus as_table_load(const struct AsSpace *space, const char *path, struct AsTable **out);

/**
 * # Safety
 * `table` must be NULL or a live handle.
 */
void as_table_free(struct AsTable *table);

/**
 * Predicted latency in milliseconds of `count` genotypes.
 *
 * # Safety
 * `genes` must point to `29·count` bytes and `out` to `count` doubles.
 */
enum AsStatus as_table_predict(const struct AsTable *table,
                               const struct AsSpace *space,
                               const uint8_t *genes,
                               size_t count,
                               double *out);

/**
 * Trains a predictor on `count` (genotype, accuracy) samples. `config_toml`
 * may be NULL for defaults or hold training keys such as `epochs = 50`.
 *
 * # Safety
 * `genes` must point to `29·count` bytes, `accuracy` to `count` doubles,
 * `config_toml` be NULL or NUL-terminated, and `out` valid.
 */
enum AsStatus as_model_train(const struct AsSpace *space,
                             const uint8_t *genes,
                             const double *accuracy,
                             size_t count,
                             const char *config_toml,
                             uint64_t seed,
                             struct AsModel **out);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum AsStatus as_model_load(const char *path, struct AsModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` NUL-terminated.
 */
enum AsStatus as_model_save(const struct AsModel *model, const char *path);

/**
 * # Safety
 * `model` must be NULL or a live handle.
 */
void as_model_free(struct AsModel *model);

/**
 * Predicted accuracy scores in (0, 1) for `count` genotypes.
 *
 * # Safety
 * `genes` must point to `29·count` bytes and `out` to `count` doubles.
 */
enum AsStatus as_model_predict(const struct AsModel *model,
                               const struct AsSpace *space,
                               const uint8_t *genes,
                               size_t count,
                               double *out);

/**
 * Hypervolume of `count` maximization points (`x0, y0, x1, y1, ...`)
 * against a reference every point must strictly dominate.
 *
 * # Safety
 * `points` must point to `2·count` doubles and `out` be valid.
 */
enum AsStatus as_hypervolume_2d(const double *points,
                                size_t count,
                                double ref_x,
                                double ref_y,
                                double *out);

/**
 * Kendall τ-b of two sequences.
 *
 * # Safety
 * `a` and `b` must each point to `count` doubles and `out` be valid.
 */
enum AsStatus as_kendall_tau(const double *a, const double *b, size_t count, double *out);

/**
 * Mean IoU of a row-major `classes × classes` confusion matrix (rows are truth).
 *
 * # Safety
 * `matrix` must point to `classes²` values and `out` be valid.
 */
enum AsStatus as_miou(const uint64_t *matrix, size_t classes, double *out);

/**
 * KS distance between the samples and U(lo, hi).
 *
 * # Safety
 * `samples` must point to `count` doubles and `out` be valid.
 */
enum AsStatus as_ks_statistic(const double *samples,
                              size_t count,
                              double lo,
                              double hi,
                              double *out);

/**
 * Picks at most `k` of `count` latencies to be as uniform on [lo, hi] as
 * possible. `mask_out[i]` is set to 1 for selected entries, 0 otherwise.
 *
 * # Safety
 * `latencies` must point to `count` doubles and `mask_out` to `count` bytes.
 */
enum AsStatus as_subset_select_ks(const double *latencies,
                                  size_t count,
                                  size_t k,
                                  double lo,
                                  double hi,
                                  uint64_t seed,
                                  uint8_t *mask_out);

/**
 * Runs a full search from a configuration source (preset, TOML file or run
 * manifest) and writes `archive.csv` and `trace.csv` into `out_dir`.
 * `evaluations` and `hypervolume` may be NULL.
 *
 * # Safety
 * `config_source` and `out_dir` must be NUL-terminated.
 */
enum AsStatus as_search_run(const char *config_source,
                            const char *out_dir,
                            size_t *evaluations,
                            double *hypervolume);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARCHSEARCH_H */
