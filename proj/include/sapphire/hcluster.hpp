// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "sapphire/dataset.hpp"

namespace sapphire {

inline constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

struct Cluster {
  std::size_t parent = kNoParent;  // index into the previous level
  std::vector<std::size_t> children;
  std::vector<SnapshotId> members;  // time order
  std::vector<double> centroid;
};

/// Multi-resolution hierarchy with levels 0..H. Level 0 is a single cluster
/// holding every snapshot; levels 1..H use strictly decreasing thresholds.
class ClusterTree {
 public:
  ClusterTree() = default;
  ClusterTree(std::size_t n_snapshots, std::vector<double> thresholds);

  std::size_t height() const noexcept { return thresholds_.size(); }
  std::size_t n_snapshots() const noexcept { return n_; }
  std::size_t level_count() const noexcept { return levels_.size(); }

  /// Threshold of level h in 1..H; level 0 is unbounded.
  double threshold(std::size_t h) const noexcept {
    return h == 0 ? std::numeric_limits<double>::infinity() : thresholds_[h - 1];
  }
  std::span<const double> thresholds() const noexcept { return thresholds_; }

  std::span<const Cluster> level(std::size_t h) const noexcept {
    return levels_[h];
  }
  /// Cluster index at level h for every snapshot.
  std::span<const std::size_t> assignment(std::size_t h) const noexcept {
    return assignment_[h];
  }

  /// Throws internal if a level is not a partition of all snapshots or the
  /// parent and child links disagree. Rebuilt levels need not nest inside
  /// the memberships of their parents.
  void validate() const;

 private:
  friend class TreeBuilder;
  std::size_t n_ = 0;
  std::vector<double> thresholds_;
  std::vector<std::vector<Cluster>> levels_;
  std::vector<std::vector<std::size_t>> assignment_;
};

/// H evenly spaced thresholds from d_coarse (level 1) down to d_fine (level H).
std::vector<double> threshold_ladder(std::size_t levels, double d_coarse,
                                     double d_fine);

/// Two-pass construction: levels 1..H-1 grow top-down while snapshots are
/// inserted in time order, then level H is assigned against the fixed tree,
/// each snapshot descending to its parent by nearest centroid.
ClusterTree build_tree(const SnapshotStore& store, const Metric& metric,
                       std::size_t levels, double d_coarse, double d_fine);

/// Rebuilds levels H-1 down to H-depth in the same way level H was built,
/// against the fixed coarser levels. Finer levels keep their memberships and
/// are relinked to the rebuilt level. depth must lie in [0, H-2].
void refine_multipass(ClusterTree& tree, const SnapshotStore& store,
                      const Metric& metric, std::size_t depth);

struct LevelStats {
  std::size_t level = 0;
  std::size_t clusters = 0;
  std::size_t max_cluster_size = 0;
  double mean_cluster_size = 0.0;
  /// Mean members per cluster at the previous level divided by this level's
  /// mean. 1 for level 0.
  double size_ratio = 1.0;
};

std::vector<LevelStats> tree_stats(const ClusterTree& tree);

/// Fraction of snapshots at level h farther than the level threshold from
/// their cluster's current centroid.
double threshold_violation_fraction(const ClusterTree& tree,
                                    const SnapshotStore& store,
                                    const Metric& metric, std::size_t h);

struct ClusterRecord {
  std::size_t level = 0;
  std::size_t id = 0;
  long long parent = -1;
  std::size_t members = 0;
  std::vector<double> centroid;
};

/// CSV dump: level,id,parent,members,c0..c{D-1}; parent is -1 at level 0.
void write_tree_csv(const ClusterTree& tree, const std::filesystem::path& path);
std::vector<ClusterRecord> read_tree_csv(const std::filesystem::path& path);

}  // namespace sapphire
