// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "sapphire/sapphire.h"

namespace {

// Thrown on a non-OK status; main turns it into a message and exit code.
struct Failure {
  sph_status status;
  std::string context;
};

void check(sph_status status, const std::string& context) {
  if (status != SPH_OK) throw Failure{status, context + ": " + sph_last_error()};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Config = std::unique_ptr<sph_config, Deleter<sph_config, sph_config_free>>;
using Store = std::unique_ptr<sph_store, Deleter<sph_store, sph_store_free>>;
using Clusters = std::unique_ptr<sph_cluster_tree, Deleter<sph_cluster_tree, sph_cluster_free>>;
using Span =
    std::unique_ptr<sph_spanning_tree, Deleter<sph_spanning_tree, sph_spanning_tree_free>>;
using Progress = std::unique_ptr<sph_progress, Deleter<sph_progress, sph_progress_free>>;
using Synth = std::unique_ptr<sph_synth, Deleter<sph_synth, sph_synth_free>>;

// Config file plus --set overrides shared by every data-driven subcommand.
struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", file, "key = value configuration file")
        ->check(CLI::ExistingFile);
    app->add_option("-s,--set", overrides, "override as key=value (repeatable)");
  }

  Config load(bool validate = true) const {
    sph_config* raw = nullptr;
    check(sph_config_new(&raw), "config");
    Config config(raw);
    if (!file.empty()) check(sph_config_load(config.get(), file.c_str()), "config " + file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw Failure{SPH_INVALID_ARGUMENT, "--set expects key=value, got '" + kv + "'"};
      const std::string key = kv.substr(0, eq);
      check(sph_config_set(config.get(), key.c_str(), kv.substr(eq + 1).c_str()),
            "--set " + key);
    }
    if (validate) check(sph_config_validate(config.get()), "config");
    return config;
  }
};

std::string config_value(const sph_config* config, const char* key) {
  size_t needed = 0;
  check(sph_config_get(config, key, nullptr, 0, &needed), "config");
  std::string value(needed, '\0');
  check(sph_config_get(config, key, value.data(), value.size(), &needed), "config");
  value.resize(needed - 1);
  return value;
}

Store load_store(const sph_config* config) {
  sph_store* raw = nullptr;
  check(sph_store_load(config, &raw), "dataset");
  return Store(raw);
}

Clusters build_clusters(const sph_store* store, const sph_config* config) {
  sph_cluster_tree* raw = nullptr;
  check(sph_cluster_build(store, config, &raw), "clustering");
  return Clusters(raw);
}

void print_levels(const sph_cluster_tree* tree) {
  size_t height = 0;
  check(sph_cluster_height(tree, &height), "clustering");
  std::printf("level,threshold,clusters\n");
  for (size_t h = 0; h <= height; ++h) {
    size_t count = 0;
    double threshold = 0.0;
    check(sph_cluster_count(tree, h, &count), "clustering");
    check(sph_cluster_threshold(tree, h, &threshold), "clustering");
    std::printf("%zu,%g,%zu\n", h, threshold, count);
  }
}

std::vector<size_t> parse_threads(const std::string& list) {
  std::vector<size_t> out;
  for (const auto& token : CLI::detail::split(list, ',')) {
    size_t value = 0;
    if (!CLI::detail::lexical_cast(token, value) || value == 0)
      throw Failure{SPH_INVALID_ARGUMENT, "bad thread count '" + token + "'"};
    out.push_back(value);
  }
  if (out.empty()) throw Failure{SPH_INVALID_ARGUMENT, "empty thread list"};
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progress-index analysis of time series: clustering, spanning trees, "
               "cut profiles and plots"};
  app.set_version_flag("--version", sph_version());
  app.require_subcommand(1);

  // synth
  sph_synth_params synth_params;
  sph_synth_params_default(&synth_params);
  std::string synth_out, synth_labels, synth_format = "csv";
  bool synth_circular = false;
  auto* synth = app.add_subcommand("synth", "generate a Markov chain over Gaussian wells");
  synth->add_option("-n,--snapshots", synth_params.n, "number of snapshots")
      ->capture_default_str();
  synth->add_option("--states", synth_params.states, "number of wells")->capture_default_str();
  synth->add_option("--dim", synth_params.dim, "features per snapshot")->capture_default_str();
  synth->add_option("--separation", synth_params.separation, "spacing of well centres")
      ->capture_default_str();
  synth->add_option("--width", synth_params.width, "well standard deviation")
      ->capture_default_str();
  synth->add_option("--hop", synth_params.hop, "per-step probability of leaving a well")
      ->capture_default_str();
  synth->add_option("--outlier-rate", synth_params.outlier_rate, "fraction of outliers")
      ->capture_default_str();
  synth->add_option("--outlier-scale", synth_params.outlier_scale,
                    "deviation multiplier for outliers")
      ->capture_default_str();
  synth->add_flag("--circular", synth_circular, "emit circular (degree) features");
  synth->add_option("--period", synth_params.period, "period of circular features")
      ->capture_default_str();
  synth->add_option("--seed", synth_params.seed, "random seed")->capture_default_str();
  synth->add_option("-o,--out", synth_out, "dataset output path")->required();
  synth->add_option("--format", synth_format, "csv or raw_binary")
      ->check(CLI::IsMember({"csv", "raw_binary"}))
      ->capture_default_str();
  synth->add_option("--labels", synth_labels, "labels sidecar output path");

  // cluster
  ConfigArgs cluster_args;
  std::string cluster_out = "clusters.csv";
  auto* cluster = app.add_subcommand("cluster", "build the multi-resolution cluster tree");
  cluster_args.attach(cluster);
  cluster->add_option("-o,--out", cluster_out, "cluster CSV path")->capture_default_str();

  // mst
  ConfigArgs mst_args;
  std::string mst_out = "spanning_tree.csv";
  auto* mst = app.add_subcommand("mst", "exact minimum spanning tree (quadratic cost)");
  mst_args.attach(mst);
  mst->add_option("-o,--out", mst_out, "spanning-tree CSV path")->capture_default_str();

  // sst
  ConfigArgs sst_args;
  std::string sst_out = "spanning_tree.csv";
  auto* sst = app.add_subcommand("sst", "short spanning tree from the cluster tree");
  sst_args.attach(sst);
  sst->add_option("-o,--out", sst_out, "spanning-tree CSV path")->capture_default_str();

  // pindex
  ConfigArgs pindex_args;
  std::string pindex_tree, pindex_out = "progress.csv";
  auto* pindex = app.add_subcommand("pindex", "progress index and cut profile of a tree");
  pindex_args.attach(pindex);
  pindex->add_option("-t,--tree", pindex_tree, "spanning-tree CSV")
      ->required()
      ->check(CLI::ExistingFile);
  pindex->add_option("-o,--out", pindex_out, "progress-index CSV path")->capture_default_str();

  // plot
  std::string plot_in, plot_out = "sapphire.svg";
  auto* plot = app.add_subcommand("plot", "render a progress-index CSV as SVG");
  plot->add_option("-p,--progress", plot_in, "progress-index CSV")
      ->required()
      ->check(CLI::ExistingFile);
  plot->add_option("-o,--out", plot_out, "SVG path")->capture_default_str();

  // bench
  ConfigArgs bench_args;
  std::string bench_threads = "1,2,4,8", bench_out;
  size_t bench_repeats = 3;
  auto* bench = app.add_subcommand("bench", "time spanning-tree construction per thread count");
  bench_args.attach(bench);
  bench->add_option("--threads", bench_threads, "comma separated thread counts")
      ->capture_default_str();
  bench->add_option("--repeats", bench_repeats, "repeats per thread count (>= 2)")
      ->capture_default_str();
  bench->add_option("-o,--out", bench_out, "bench CSV path");

  // pipeline
  ConfigArgs pipeline_args;
  auto* pipeline = app.add_subcommand("pipeline", "run every stage and write all artifacts");
  pipeline_args.attach(pipeline);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      synth_params.circular = synth_circular ? 1 : 0;
      sph_synth* raw = nullptr;
      check(sph_synth_generate(&synth_params, &raw), "synth");
      Synth run(raw);
      sph_store* store_raw = nullptr;
      check(sph_synth_store(run.get(), &store_raw), "synth");
      Store store(store_raw);
      check(sph_store_save(store.get(), synth_out.c_str(), synth_format.c_str()), "synth");
      if (!synth_labels.empty())
        check(sph_synth_write_labels(run.get(), synth_labels.c_str()), "synth");
      size_t outliers = 0;
      check(sph_synth_outlier_count(run.get(), &outliers), "synth");
      std::printf("snapshots=%zu features=%zu outliers=%zu\n", synth_params.n, synth_params.dim,
                  outliers);
    } else if (cluster->parsed()) {
      const auto config = cluster_args.load();
      const auto store = load_store(config.get());
      const auto tree = build_clusters(store.get(), config.get());
      check(sph_cluster_write(tree.get(), cluster_out.c_str()), "clustering");
      print_levels(tree.get());
    } else if (mst->parsed() || sst->parsed()) {
      const bool exact = mst->parsed();
      const auto config = (exact ? mst_args : sst_args).load();
      const auto store = load_store(config.get());
      sph_spanning_tree* raw = nullptr;
      sph_sst_stats stats{};
      if (exact) {
        check(sph_mst_build(store.get(), config.get(), &raw), "mst");
      } else {
        const auto clusters = build_clusters(store.get(), config.get());
        check(sph_sst_build(store.get(), clusters.get(), config.get(), &raw, &stats), "sst");
      }
      Span tree(raw);
      const std::string& out = exact ? mst_out : sst_out;
      check(sph_spanning_tree_write(tree.get(), out.c_str()), "spanning tree");
      double length = 0.0;
      check(sph_spanning_tree_length(tree.get(), &length), "spanning tree");
      if (exact)
        std::printf("length=%.17g\n", length);
      else
        std::printf("length=%.17g stages=%zu distance_evaluations=%llu\n", length, stats.stages,
                    static_cast<unsigned long long>(stats.distance_evaluations));
    } else if (pindex->parsed()) {
      const auto config = pindex_args.load(false);
      sph_spanning_tree* raw_tree = nullptr;
      check(sph_spanning_tree_read(pindex_tree.c_str(), 0, &raw_tree), "tree " + pindex_tree);
      Span tree(raw_tree);
      // The dataset is optional here; it is only read to attach feature columns.
      Store store;
      if (!config_value(config.get(), "input").empty()) store = load_store(config.get());
      sph_progress* raw_progress = nullptr;
      check(sph_progress_build(tree.get(), store.get(), config.get(), &raw_progress), "pindex");
      Progress progress(raw_progress);
      check(sph_progress_write(progress.get(), pindex_out.c_str()), "pindex");
      size_t n = 0;
      check(sph_progress_size(progress.get(), &n), "pindex");
      std::printf("rows=%zu\n", n);
    } else if (plot->parsed()) {
      sph_progress* raw = nullptr;
      check(sph_progress_read(plot_in.c_str(), &raw), "plot");
      Progress progress(raw);
      check(sph_progress_plot_svg(progress.get(), plot_out.c_str()), "plot");
    } else if (bench->parsed()) {
      const auto config = bench_args.load();
      const auto threads = parse_threads(bench_threads);
      std::vector<sph_bench_row> rows(threads.size());
      check(sph_bench(config.get(), threads.data(), threads.size(), bench_repeats,
                      bench_out.empty() ? nullptr : bench_out.c_str(), rows.data()),
            "bench");
      std::printf("threads,seconds_min,seconds_max,distance_evaluations,"
                  "seconds_per_evaluation,efficiency\n");
      for (const auto& r : rows)
        std::printf("%zu,%.6f,%.6f,%llu,%.4g,%.3f\n", r.threads, r.seconds_min, r.seconds_max,
                    static_cast<unsigned long long>(r.distance_evaluations),
                    r.seconds_per_evaluation, r.efficiency);
    } else if (pipeline->parsed()) {
      const auto config = pipeline_args.load();
      sph_summary s{};
      check(sph_pipeline_run(config.get(), &s), "pipeline");
      std::printf("snapshots=%zu features=%zu stages=%zu distance_evaluations=%llu "
                  "tree_length=%.17g seconds=%.3f",
                  s.n_snapshots, s.n_features, s.stages,
                  static_cast<unsigned long long>(s.distance_evaluations), s.tree_length,
                  s.seconds_total);
      if (s.has_peak_rss)
        std::printf(" peak_rss_bytes=%llu", static_cast<unsigned long long>(s.peak_rss_bytes));
      std::printf("\n");
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error (%s): %s\n", sph_status_name(f.status), f.context.c_str());
    return static_cast<int>(f.status);
  }
  return 0;
}
