// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sapphire/dataset.hpp"
#include "sapphire/hcluster.hpp"
#include "sapphire/progindex.hpp"
#include "sapphire/spantree.hpp"

namespace sapphire {

enum class TreeMode : std::uint8_t { sst, mst };

/// Every user-facing parameter of a run. Keys of the flat key=value form are
/// listed in `RunConfig::keys()`.
struct RunConfig {
  std::filesystem::path input;
  DataFormat format = DataFormat::csv;
  std::string features = "linear";
  std::size_t rows = 0;  // raw_binary only; 0 infers from file size
  Metric metric;

  std::size_t levels = 8;
  double d_coarse = 0.0;  // 0 picks a data-driven default
  double d_fine = 0.0;
  std::size_t refine_depth = 0;

  TreeMode mode = TreeMode::sst;
  SstParams sst;

  std::size_t start = 0;
  std::size_t rho_f = 0;
  /// Feature columns copied into the progress-index CSV.
  std::vector<std::size_t> annotate;
  /// Optional labels sidecar added as an annotation column.
  std::filesystem::path labels;

  std::filesystem::path output_dir = "sapphire_out";

  /// Applies one key=value setting; throws parse/invalid_argument.
  void set(std::string_view key, std::string_view value);
  /// Current value of a key in the form `set` accepts.
  std::string get(std::string_view key) const;
  /// Reads `key = value` lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  /// Checks every precondition that does not need the data itself.
  void validate() const;

  static std::span<const std::string_view> keys();
};

struct PipelineSummary {
  std::size_t n_snapshots = 0;
  std::size_t n_features = 0;
  std::size_t stages = 0;
  std::uint64_t distance_evaluations = 0;
  double tree_length = 0.0;
  double seconds_total = 0.0;
  double seconds_clustering = 0.0;
  double seconds_spanning_tree = 0.0;
  std::optional<std::size_t> peak_rss_bytes;
  double d_coarse = 0.0;
  double d_fine = 0.0;
  std::vector<LevelStats> levels;
};

/// Data-driven ladder endpoints used when neither threshold is configured:
/// half the largest distance among a fixed sample of pairs, and a twentieth
/// of that.
std::pair<double, double> default_thresholds(const SnapshotStore& store,
                                             const Metric& metric);

/// Clustering as configured: levels, thresholds (defaults when d_coarse is
/// 0), then refine_depth refinement passes.
ClusterTree build_clusters(const SnapshotStore& store, const RunConfig& config);

/// Annotation columns requested by `annotate` (needs the dataset) and
/// `labels` (added as "label") for a progress index over n snapshots.
std::vector<Annotation> config_annotations(const SnapshotStore* store,
                                           const RunConfig& config, std::size_t n);

/// Runs dataset -> clustering -> spanning tree -> progress index in memory
/// and only then writes clusters.csv, spanning_tree.csv, progress.csv,
/// sapphire.svg and summary.json into the output directory.
PipelineSummary run_pipeline(const RunConfig& config);

void write_summary_json(const PipelineSummary& summary,
                        const std::filesystem::path& path);

struct BenchRow {
  std::size_t threads = 0;
  std::size_t repeats = 0;
  double seconds_min = 0.0;
  double seconds_max = 0.0;
  std::uint64_t distance_evaluations = 0;  // identical across repeats
  bool evaluations_reproducible = true;
  std::size_t stages = 0;
  double seconds_per_evaluation = 0.0;  // from seconds_min
  double efficiency = 0.0;              // vs the 1-thread row
};

/// Times spanning-tree construction only; clustering happens once up front
/// and is excluded. The first entry of `threads` should be 1 so efficiency
/// has its reference; otherwise the smallest thread count is used.
std::vector<BenchRow> bench(const SnapshotStore& store, const RunConfig& config,
                            std::span<const std::size_t> threads,
                            std::size_t repeats);
std::vector<BenchRow> bench(const RunConfig& config,
                            std::span<const std::size_t> threads,
                            std::size_t repeats);

void write_bench_csv(std::span<const BenchRow> rows, const std::filesystem::path& path);

/// Peak resident set size of this process, where the platform reports it.
std::optional<std::size_t> peak_rss_bytes();

/// Static SVG: log-scaled cut curve over the index plus one colour strip per
/// annotation column.
void emit_sapphire_svg(const ProgressTable& table, const std::filesystem::path& path);

}  // namespace sapphire
