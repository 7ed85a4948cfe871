/* SPDX-License-Identifier: Apache-2.0 */

/* C interface of the sapphire shared library. Every call returns an
 * sph_status; on failure sph_last_error() describes the problem for the
 * calling thread. Handles are opaque and owned by the caller, who releases
 * them with the matching *_free function (NULL is accepted there). */

#ifndef SAPPHIRE_SAPPHIRE_H
#define SAPPHIRE_SAPPHIRE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SPH_API __declspec(dllexport)
#else
#define SPH_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sph_status {
  SPH_OK = 0,
  SPH_INVALID_ARGUMENT = 1,
  SPH_IO = 2,
  SPH_PARSE = 3,
  SPH_METRIC_MISMATCH = 4,
  SPH_OUT_OF_RANGE = 5,
  SPH_INTERNAL = 6
} sph_status;

typedef struct sph_config sph_config;
typedef struct sph_store sph_store;
typedef struct sph_cluster_tree sph_cluster_tree;
typedef struct sph_spanning_tree sph_spanning_tree;
typedef struct sph_progress sph_progress;
typedef struct sph_synth sph_synth;

SPH_API const char* sph_version(void);
/* Message of the last failed call on this thread; "" if none. */
SPH_API const char* sph_last_error(void);
SPH_API const char* sph_status_name(sph_status status);

/* ---- configuration: flat key=value settings ---- */

SPH_API sph_status sph_config_new(sph_config** out);
SPH_API void sph_config_free(sph_config* config);
SPH_API sph_status sph_config_set(sph_config* config, const char* key, const char* value);
SPH_API sph_status sph_config_load(sph_config* config, const char* path);
SPH_API sph_status sph_config_validate(const sph_config* config);
/* Copies the value of key, NUL-terminated, into buf when it fits; *needed
 * receives the full length including the terminator. buf may be NULL when
 * capacity is 0. */
SPH_API sph_status sph_config_get(const sph_config* config, const char* key, char* buf,
                                  size_t capacity, size_t* needed);
/* Number of recognized keys and the i-th key name. */
SPH_API size_t sph_config_key_count(void);
SPH_API const char* sph_config_key(size_t i);

/* ---- snapshot store ---- */

/* Loads the configured input (input, format, features, rows, period). */
SPH_API sph_status sph_store_load(const sph_config* config, sph_store** out);
/* Copies an n x d row-major matrix. features uses the feature-spec syntax,
 * e.g. "linear:3" or "circular:2". */
SPH_API sph_status sph_store_create(size_t n, size_t d, const double* values,
                                    const char* features, double period, sph_store** out);
SPH_API void sph_store_free(sph_store* store);
SPH_API sph_status sph_store_shape(const sph_store* store, size_t* n, size_t* d);
/* Borrowed pointer to row i, valid while the store lives. */
SPH_API sph_status sph_store_row(const sph_store* store, size_t i, const double** row);
/* format: "csv" or "raw_binary". */
SPH_API sph_status sph_store_save(const sph_store* store, const char* path, const char* format);
/* Uses the configured metric and period. */
SPH_API sph_status sph_distance(const sph_store* store, const sph_config* config, size_t i,
                                size_t j, double* out);

/* ---- tree-based clustering ---- */

/* Fills out[0..levels-1] with the thresholds of levels 1..H. */
SPH_API sph_status sph_threshold_ladder(size_t levels, double d_coarse, double d_fine,
                                        double* out);
/* Builds with levels, d_coarse, d_fine (0 picks data-driven defaults) and
 * then applies refine_depth refinement passes. */
SPH_API sph_status sph_cluster_build(const sph_store* store, const sph_config* config,
                                     sph_cluster_tree** out);
SPH_API void sph_cluster_free(sph_cluster_tree* tree);
SPH_API sph_status sph_cluster_height(const sph_cluster_tree* tree, size_t* height);
SPH_API sph_status sph_cluster_count(const sph_cluster_tree* tree, size_t level, size_t* count);
SPH_API sph_status sph_cluster_threshold(const sph_cluster_tree* tree, size_t level,
                                         double* threshold);
/* Extra refinement on an existing tree. */
SPH_API sph_status sph_cluster_refine(sph_cluster_tree* tree, const sph_store* store,
                                      const sph_config* config, size_t depth);
SPH_API sph_status sph_cluster_violation_fraction(const sph_cluster_tree* tree,
                                                  const sph_store* store,
                                                  const sph_config* config, size_t level,
                                                  double* fraction);
SPH_API sph_status sph_cluster_write(const sph_cluster_tree* tree, const char* path);

/* ---- spanning trees ---- */

typedef struct sph_sst_stats {
  size_t stages;
  uint64_t distance_evaluations;
  size_t max_cache_entries;
  size_t stale_cache_entries;
} sph_sst_stats;

typedef struct sph_tree_comparison {
  double shared_edge_fraction;
  double length_a;
  double length_b;
} sph_tree_comparison;

/* Exact minimum spanning tree (O(N^2) distance evaluations). */
SPH_API sph_status sph_mst_build(const sph_store* store, const sph_config* config,
                                 sph_spanning_tree** out);
/* Short spanning tree with the configured n_guesses, sigma_max,
 * schedule_span, seed, threads, shared_rng and stage_cap. stats may be NULL. */
SPH_API sph_status sph_sst_build(const sph_store* store, const sph_cluster_tree* clusters,
                                 const sph_config* config, sph_spanning_tree** out,
                                 sph_sst_stats* stats);
SPH_API void sph_spanning_tree_free(sph_spanning_tree* tree);
SPH_API sph_status sph_spanning_tree_size(const sph_spanning_tree* tree, size_t* n_vertices);
SPH_API sph_status sph_spanning_tree_length(const sph_spanning_tree* tree, double* length);
/* Edge i of N-1, sorted by (weight, u, v). */
SPH_API sph_status sph_spanning_tree_edge(const sph_spanning_tree* tree, size_t i, uint32_t* u,
                                          uint32_t* v, double* weight);
SPH_API sph_status sph_spanning_tree_write(const sph_spanning_tree* tree, const char* path);
/* n_vertices = 0 infers N from the edge count. */
SPH_API sph_status sph_spanning_tree_read(const char* path, size_t n_vertices,
                                          sph_spanning_tree** out);
SPH_API sph_status sph_spanning_tree_compare(const sph_spanning_tree* a,
                                             const sph_spanning_tree* b,
                                             sph_tree_comparison* out);

/* ---- progress index ---- */

/* Uses start and rho_f. With a store, the configured annotate columns are
 * attached; a configured labels file is attached as column "label".
 * store may be NULL when neither is wanted. */
SPH_API sph_status sph_progress_build(const sph_spanning_tree* tree, const sph_store* store,
                                      const sph_config* config, sph_progress** out);
SPH_API sph_status sph_progress_read(const char* path, sph_progress** out);
SPH_API void sph_progress_free(sph_progress* progress);
SPH_API sph_status sph_progress_size(const sph_progress* progress, size_t* n);
/* Row p of the table. cut is 0 and has_cut 0 at p = 0; mfpt may be inf. */
SPH_API sph_status sph_progress_row(const sph_progress* progress, size_t p, uint32_t* snapshot,
                                    double* added_weight, int* has_cut, uint64_t* cut,
                                    double* mfpt);
SPH_API sph_status sph_progress_write(const sph_progress* progress, const char* path);
SPH_API sph_status sph_progress_plot_svg(const sph_progress* progress, const char* path);

/* ---- synthetic data ---- */

typedef struct sph_synth_params {
  size_t states;
  size_t dim;
  double separation;
  double width;
  double hop;
  double outlier_rate;
  double outlier_scale;
  int circular; /* nonzero: circular_degrees features wrapped by period */
  double period;
  size_t n;
  uint64_t seed;
} sph_synth_params;

SPH_API void sph_synth_params_default(sph_synth_params* params);
SPH_API sph_status sph_synth_generate(const sph_synth_params* params, sph_synth** out);
SPH_API void sph_synth_free(sph_synth* synth);
/* New store handle holding a copy of the generated snapshots. */
SPH_API sph_status sph_synth_store(const sph_synth* synth, sph_store** out);
/* Borrowed label array of length n. */
SPH_API sph_status sph_synth_labels(const sph_synth* synth, const int** labels, size_t* n);
SPH_API sph_status sph_synth_outlier_count(const sph_synth* synth, size_t* count);
SPH_API sph_status sph_synth_write_labels(const sph_synth* synth, const char* path);

/* ---- orchestration ---- */

typedef struct sph_summary {
  size_t n_snapshots;
  size_t n_features;
  size_t stages;
  uint64_t distance_evaluations;
  double tree_length;
  double seconds_total;
  int has_peak_rss;
  uint64_t peak_rss_bytes;
} sph_summary;

/* Full run; writes clusters.csv, spanning_tree.csv, progress.csv,
 * sapphire.svg and summary.json into output_dir. summary may be NULL. */
SPH_API sph_status sph_pipeline_run(const sph_config* config, sph_summary* summary);

typedef struct sph_bench_row {
  size_t threads;
  size_t repeats;
  double seconds_min;
  double seconds_max;
  uint64_t distance_evaluations;
  int evaluations_reproducible;
  size_t stages;
  double seconds_per_evaluation;
  double efficiency;
} sph_bench_row;

/* Times SST construction for each thread count. rows must hold
 * thread_count entries; csv_path may be NULL. */
SPH_API sph_status sph_bench(const sph_config* config, const size_t* threads,
                             size_t thread_count, size_t repeats, const char* csv_path,
                             sph_bench_row* rows);

#ifdef __cplusplus
}
#endif

#endif /* SAPPHIRE_SAPPHIRE_H */
