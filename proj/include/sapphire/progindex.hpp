// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sapphire/dataset.hpp"
#include "sapphire/spantree.hpp"

namespace sapphire {

struct ProgressIndex {
  /// Position -> snapshot.
  std::vector<SnapshotId> order;
  /// Weight of the tree edge that admitted order[p]; NaN at position 0.
  std::vector<double> added_weight;
  /// Per snapshot, whether leaf folding prioritized it.
  std::vector<bool> leaf_class;

  std::size_t size() const noexcept { return order.size(); }
  std::vector<std::size_t> positions() const;
};

/// Peel round of every vertex: 1 for the tree's leaves, r for vertices that
/// reach degree 1 once rounds < r are removed, 0 if never peeled.
std::vector<std::size_t> leaf_peel_rounds(const SpanningTree& tree);

std::vector<bool> leaf_classify(const SpanningTree& tree, std::size_t rho_f);

/// Greedy traversal from `start`: each step admits the frontier vertex with
/// the shortest connecting tree edge, leaf-class vertices first.
ProgressIndex build_progress_index(const SpanningTree& tree, std::size_t start,
                                   std::size_t rho_f);

struct CutAnnotation {
  /// counts[i - 1] = c(i) for splits i = 1..N-1.
  std::vector<std::uint64_t> counts;
  std::size_t n = 0;

  std::uint64_t at(std::size_t split) const { return counts.at(split - 1); }
};

/// Number of time-consecutive snapshot pairs straddling each split.
CutAnnotation cut_annotation(const ProgressIndex& pi);

/// Sum of mean first passage times in both directions, 2N / c. Infinite
/// when c = 0.
double mfpt_sum(std::uint64_t c, std::size_t n) noexcept;

std::vector<double> structural_track(const SnapshotStore& store,
                                     const ProgressIndex& pi,
                                     std::size_t feature);

/// In-memory form of the progress-index CSV.
struct ProgressTable {
  std::vector<SnapshotId> snapshot;
  std::vector<double> added_weight;                 // NaN at row 0
  std::vector<std::optional<std::uint64_t>> cut;    // empty at row 0
  std::vector<double> mfpt;                         // NaN at row 0
  std::vector<std::string> annotation_names;
  std::vector<std::vector<double>> annotations;     // per column, per row

  std::size_t size() const noexcept { return snapshot.size(); }
};

struct Annotation {
  std::string name;
  std::vector<double> by_snapshot;
};

ProgressTable make_progress_table(const ProgressIndex& pi, const CutAnnotation& cut,
                                  std::span<const Annotation> annotations);

/// Columns: position,snapshot_id,added_edge_weight,cut_count,mfpt_sum,
/// then one column per annotation.
void write_progress_csv(const ProgressTable& table, const std::filesystem::path& path);
ProgressTable read_progress_csv(const std::filesystem::path& path);

}  // namespace sapphire
