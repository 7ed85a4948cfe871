// SPDX-License-Identifier: Apache-2.0

#include "sapphire/sapphire.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <new>
#include <optional>
#include <string>
#include <utility>

#include "sapphire/error.hpp"
#include "sapphire/pipeline.hpp"
#include "sapphire/synthgen.hpp"

struct sph_config {
  sapphire::RunConfig value;
};
struct sph_store {
  sapphire::SnapshotStore value;
};
struct sph_cluster_tree {
  sapphire::ClusterTree value;
};
struct sph_spanning_tree {
  sapphire::SpanningTree value;
};
struct sph_progress {
  sapphire::ProgressTable value;
};
struct sph_synth {
  sapphire::SyntheticRun value;
};

namespace {

thread_local std::string g_last_error;

sph_status to_status(sapphire::ErrorCode code) {
  switch (code) {
    case sapphire::ErrorCode::invalid_argument: return SPH_INVALID_ARGUMENT;
    case sapphire::ErrorCode::io: return SPH_IO;
    case sapphire::ErrorCode::parse: return SPH_PARSE;
    case sapphire::ErrorCode::metric_mismatch: return SPH_METRIC_MISMATCH;
    case sapphire::ErrorCode::out_of_range: return SPH_OUT_OF_RANGE;
    case sapphire::ErrorCode::internal: return SPH_INTERNAL;
  }
  return SPH_INTERNAL;
}

template <class F>
sph_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return SPH_OK;
  } catch (const sapphire::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SPH_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return SPH_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SPH_INTERNAL;
  }
}

template <class... Ptr>
void require(Ptr... ptrs) {
  if (((ptrs == nullptr) || ...))
    sapphire::fail(sapphire::ErrorCode::invalid_argument, "null argument");
}

}  // namespace

extern "C" {

const char* sph_version(void) { return "0.3.0"; }

const char* sph_last_error(void) { return g_last_error.c_str(); }

const char* sph_status_name(sph_status status) {
  switch (status) {
    case SPH_OK: return "ok";
    case SPH_INVALID_ARGUMENT: return "invalid_argument";
    case SPH_IO: return "io";
    case SPH_PARSE: return "parse";
    case SPH_METRIC_MISMATCH: return "metric_mismatch";
    case SPH_OUT_OF_RANGE: return "out_of_range";
    case SPH_INTERNAL: return "internal";
  }
  return "unknown";
}

// ---- configuration ----

sph_status sph_config_new(sph_config** out) {
  return guarded([&] {
    require(out);
    *out = new sph_config{};
  });
}

void sph_config_free(sph_config* config) { delete config; }

sph_status sph_config_set(sph_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, key, value);
    config->value.set(key, value);
  });
}

sph_status sph_config_load(sph_config* config, const char* path) {
  return guarded([&] {
    require(config, path);
    config->value.load_file(path);
  });
}

sph_status sph_config_validate(const sph_config* config) {
  return guarded([&] {
    require(config);
    config->value.validate();
  });
}

sph_status sph_config_get(const sph_config* config, const char* key, char* buf,
                          size_t capacity, size_t* needed) {
  return guarded([&] {
    require(config, key, needed);
    const std::string value = config->value.get(key);
    *needed = value.size() + 1;
    if (capacity >= *needed) {
      require(buf);
      std::memcpy(buf, value.c_str(), *needed);
    }
  });
}

size_t sph_config_key_count(void) { return sapphire::RunConfig::keys().size(); }

const char* sph_config_key(size_t i) {
  const auto keys = sapphire::RunConfig::keys();
  return i < keys.size() ? keys[i].data() : nullptr;
}

// ---- snapshot store ----

sph_status sph_store_load(const sph_config* config, sph_store** out) {
  return guarded([&] {
    require(config, out);
    const auto& c = config->value;
    if (c.input.empty())
      sapphire::fail(sapphire::ErrorCode::invalid_argument, "no input file configured");
    *out = new sph_store{sapphire::load_dataset(
        c.input, c.format, sapphire::parse_feature_spec(c.features), c.metric.period, c.rows)};
  });
}

sph_status sph_store_create(size_t n, size_t d, const double* values, const char* features,
                            double period, sph_store** out) {
  return guarded([&] {
    require(values, features, out);
    const auto kinds = sapphire::parse_feature_spec(features);
    if (kinds.size() != d)
      sapphire::fail(sapphire::ErrorCode::invalid_argument,
                     "feature spec describes " + std::to_string(kinds.size()) +
                         " columns, d = " + std::to_string(d));
    *out = new sph_store{
        sapphire::SnapshotStore(n, d, std::vector<double>(values, values + n * d), kinds, period)};
  });
}

void sph_store_free(sph_store* store) { delete store; }

sph_status sph_store_shape(const sph_store* store, size_t* n, size_t* d) {
  return guarded([&] {
    require(store, n, d);
    *n = store->value.size();
    *d = store->value.dimension();
  });
}

sph_status sph_store_row(const sph_store* store, size_t i, const double** row) {
  return guarded([&] {
    require(store, row);
    if (i >= store->value.size())
      sapphire::fail(sapphire::ErrorCode::out_of_range, "row index out of range");
    *row = store->value.row(i).data();
  });
}

sph_status sph_store_save(const sph_store* store, const char* path, const char* format) {
  return guarded([&] {
    require(store, path, format);
    sapphire::DataFormat f;
    if (std::strcmp(format, "csv") == 0)
      f = sapphire::DataFormat::csv;
    else if (std::strcmp(format, "raw_binary") == 0 || std::strcmp(format, "raw") == 0)
      f = sapphire::DataFormat::raw_binary;
    else
      sapphire::fail(sapphire::ErrorCode::invalid_argument, "format must be csv or raw_binary");
    sapphire::save_dataset(store->value, path, f);
  });
}

sph_status sph_distance(const sph_store* store, const sph_config* config, size_t i, size_t j,
                        double* out) {
  return guarded([&] {
    require(store, config, out);
    *out = sapphire::distance(store->value, config->value.metric, i, j);
  });
}

// ---- clustering ----

sph_status sph_threshold_ladder(size_t levels, double d_coarse, double d_fine, double* out) {
  return guarded([&] {
    require(out);
    const auto ladder = sapphire::threshold_ladder(levels, d_coarse, d_fine);
    std::copy(ladder.begin(), ladder.end(), out);
  });
}

sph_status sph_cluster_build(const sph_store* store, const sph_config* config,
                             sph_cluster_tree** out) {
  return guarded([&] {
    require(store, config, out);
    *out = new sph_cluster_tree{sapphire::build_clusters(store->value, config->value)};
  });
}

void sph_cluster_free(sph_cluster_tree* tree) { delete tree; }

sph_status sph_cluster_height(const sph_cluster_tree* tree, size_t* height) {
  return guarded([&] {
    require(tree, height);
    *height = tree->value.height();
  });
}

sph_status sph_cluster_count(const sph_cluster_tree* tree, size_t level, size_t* count) {
  return guarded([&] {
    require(tree, count);
    if (level > tree->value.height())
      sapphire::fail(sapphire::ErrorCode::out_of_range, "level out of range");
    *count = tree->value.level(level).size();
  });
}

sph_status sph_cluster_threshold(const sph_cluster_tree* tree, size_t level, double* threshold) {
  return guarded([&] {
    require(tree, threshold);
    if (level > tree->value.height())
      sapphire::fail(sapphire::ErrorCode::out_of_range, "level out of range");
    *threshold = tree->value.threshold(level);
  });
}

sph_status sph_cluster_refine(sph_cluster_tree* tree, const sph_store* store,
                              const sph_config* config, size_t depth) {
  return guarded([&] {
    require(tree, store, config);
    sapphire::refine_multipass(tree->value, store->value, config->value.metric, depth);
  });
}

sph_status sph_cluster_violation_fraction(const sph_cluster_tree* tree, const sph_store* store,
                                          const sph_config* config, size_t level,
                                          double* fraction) {
  return guarded([&] {
    require(tree, store, config, fraction);
    *fraction = sapphire::threshold_violation_fraction(tree->value, store->value,
                                                       config->value.metric, level);
  });
}

sph_status sph_cluster_write(const sph_cluster_tree* tree, const char* path) {
  return guarded([&] {
    require(tree, path);
    sapphire::write_tree_csv(tree->value, path);
  });
}

// ---- spanning trees ----

sph_status sph_mst_build(const sph_store* store, const sph_config* config,
                         sph_spanning_tree** out) {
  return guarded([&] {
    require(store, config, out);
    *out = new sph_spanning_tree{sapphire::exact_mst(store->value, config->value.metric)};
  });
}

sph_status sph_sst_build(const sph_store* store, const sph_cluster_tree* clusters,
                         const sph_config* config, sph_spanning_tree** out,
                         sph_sst_stats* stats) {
  return guarded([&] {
    require(store, clusters, config, out);
    auto result = sapphire::build_sst(store->value, config->value.metric, clusters->value,
                                      config->value.sst);
    if (stats) {
      stats->stages = result.stats.stages;
      stats->distance_evaluations = result.stats.distance_evaluations;
      stats->max_cache_entries = result.stats.max_cache_entries;
      stats->stale_cache_entries = result.stats.stale_cache_entries;
    }
    *out = new sph_spanning_tree{std::move(result.tree)};
  });
}

void sph_spanning_tree_free(sph_spanning_tree* tree) { delete tree; }

sph_status sph_spanning_tree_size(const sph_spanning_tree* tree, size_t* n_vertices) {
  return guarded([&] {
    require(tree, n_vertices);
    *n_vertices = tree->value.n_vertices();
  });
}

sph_status sph_spanning_tree_length(const sph_spanning_tree* tree, double* length) {
  return guarded([&] {
    require(tree, length);
    *length = tree->value.total_length();
  });
}

sph_status sph_spanning_tree_edge(const sph_spanning_tree* tree, size_t i, uint32_t* u,
                                  uint32_t* v, double* weight) {
  return guarded([&] {
    require(tree, u, v, weight);
    const auto edges = tree->value.edges();
    if (i >= edges.size()) sapphire::fail(sapphire::ErrorCode::out_of_range, "edge out of range");
    *u = edges[i].u;
    *v = edges[i].v;
    *weight = edges[i].weight;
  });
}

sph_status sph_spanning_tree_write(const sph_spanning_tree* tree, const char* path) {
  return guarded([&] {
    require(tree, path);
    sapphire::write_spanning_tree_csv(tree->value, path);
  });
}

sph_status sph_spanning_tree_read(const char* path, size_t n_vertices, sph_spanning_tree** out) {
  return guarded([&] {
    require(path, out);
    *out = new sph_spanning_tree{sapphire::read_spanning_tree_csv(path, n_vertices)};
  });
}

sph_status sph_spanning_tree_compare(const sph_spanning_tree* a, const sph_spanning_tree* b,
                                     sph_tree_comparison* out) {
  return guarded([&] {
    require(a, b, out);
    const auto c = sapphire::compare_trees(a->value, b->value);
    *out = {c.shared_edge_fraction, c.length_a, c.length_b};
  });
}

// ---- progress index ----

sph_status sph_progress_build(const sph_spanning_tree* tree, const sph_store* store,
                              const sph_config* config, sph_progress** out) {
  return guarded([&] {
    require(tree, config, out);
    const auto& c = config->value;
    const auto pi = sapphire::build_progress_index(tree->value, c.start, c.rho_f);
    const auto annotations =
        sapphire::config_annotations(store ? &store->value : nullptr, c, pi.size());
    *out = new sph_progress{
        sapphire::make_progress_table(pi, sapphire::cut_annotation(pi), annotations)};
  });
}

sph_status sph_progress_read(const char* path, sph_progress** out) {
  return guarded([&] {
    require(path, out);
    *out = new sph_progress{sapphire::read_progress_csv(path)};
  });
}

void sph_progress_free(sph_progress* progress) { delete progress; }

sph_status sph_progress_size(const sph_progress* progress, size_t* n) {
  return guarded([&] {
    require(progress, n);
    *n = progress->value.size();
  });
}

sph_status sph_progress_row(const sph_progress* progress, size_t p, uint32_t* snapshot,
                            double* added_weight, int* has_cut, uint64_t* cut, double* mfpt) {
  return guarded([&] {
    require(progress);
    const auto& t = progress->value;
    if (p >= t.size()) sapphire::fail(sapphire::ErrorCode::out_of_range, "row out of range");
    if (snapshot) *snapshot = t.snapshot[p];
    if (added_weight) *added_weight = t.added_weight[p];
    if (has_cut) *has_cut = t.cut[p].has_value() ? 1 : 0;
    if (cut) *cut = t.cut[p].value_or(0);
    if (mfpt) *mfpt = t.mfpt[p];
  });
}

sph_status sph_progress_write(const sph_progress* progress, const char* path) {
  return guarded([&] {
    require(progress, path);
    sapphire::write_progress_csv(progress->value, path);
  });
}

sph_status sph_progress_plot_svg(const sph_progress* progress, const char* path) {
  return guarded([&] {
    require(progress, path);
    sapphire::emit_sapphire_svg(progress->value, path);
  });
}

// ---- synthetic data ----

void sph_synth_params_default(sph_synth_params* params) {
  if (!params) return;
  *params = sph_synth_params{};
  params->states = 2;
  params->dim = 2;
  params->separation = 6.0;
  params->width = 1.0;
  params->hop = 0.001;
  params->outlier_rate = 0.0;
  params->outlier_scale = 4.0;
  params->circular = 0;
  params->period = 360.0;
  params->n = 10000;
  params->seed = 1;
}

sph_status sph_synth_generate(const sph_synth_params* params, sph_synth** out) {
  return guarded([&] {
    require(params, out);
    auto spec = sapphire::line_of_wells(params->states, params->dim, params->separation,
                                        params->width, params->hop);
    spec.outlier_rate = params->outlier_rate;
    spec.outlier_scale = params->outlier_scale;
    if (params->circular) {
      spec.kind = sapphire::FeatureKind::circular_degrees;
      spec.period = params->period;
    }
    *out = new sph_synth{sapphire::generate(spec, params->n, params->seed)};
  });
}

void sph_synth_free(sph_synth* synth) { delete synth; }

sph_status sph_synth_store(const sph_synth* synth, sph_store** out) {
  return guarded([&] {
    require(synth, out);
    *out = new sph_store{synth->value.store};
  });
}

sph_status sph_synth_labels(const sph_synth* synth, const int** labels, size_t* n) {
  return guarded([&] {
    require(synth, labels, n);
    *labels = synth->value.labels.data();
    *n = synth->value.labels.size();
  });
}

sph_status sph_synth_outlier_count(const sph_synth* synth, size_t* count) {
  return guarded([&] {
    require(synth, count);
    *count = synth->value.outliers.size();
  });
}

sph_status sph_synth_write_labels(const sph_synth* synth, const char* path) {
  return guarded([&] {
    require(synth, path);
    sapphire::write_labels_csv(synth->value, path);
  });
}

// ---- orchestration ----

sph_status sph_pipeline_run(const sph_config* config, sph_summary* summary) {
  return guarded([&] {
    require(config);
    const auto s = sapphire::run_pipeline(config->value);
    if (summary) {
      summary->n_snapshots = s.n_snapshots;
      summary->n_features = s.n_features;
      summary->stages = s.stages;
      summary->distance_evaluations = s.distance_evaluations;
      summary->tree_length = s.tree_length;
      summary->seconds_total = s.seconds_total;
      summary->has_peak_rss = s.peak_rss_bytes.has_value() ? 1 : 0;
      summary->peak_rss_bytes = s.peak_rss_bytes.value_or(0);
    }
  });
}

sph_status sph_bench(const sph_config* config, const size_t* threads, size_t thread_count,
                     size_t repeats, const char* csv_path, sph_bench_row* rows) {
  return guarded([&] {
    require(config, threads, rows);
    const auto result =
        sapphire::bench(config->value, std::span(threads, thread_count), repeats);
    if (csv_path) sapphire::write_bench_csv(result, csv_path);
    for (std::size_t i = 0; i < result.size(); ++i) {
      const auto& r = result[i];
      rows[i] = {r.threads,
                 r.repeats,
                 r.seconds_min,
                 r.seconds_max,
                 r.distance_evaluations,
                 r.evaluations_reproducible ? 1 : 0,
                 r.stages,
                 r.seconds_per_evaluation,
                 r.efficiency};
    }
  });
}

}  // extern "C"
