// SPDX-License-Identifier: Apache-2.0

#include "sapphire/hcluster.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "sapphire/error.hpp"
#include "text_util.hpp"

namespace sapphire {

namespace {

// Running sums behind a centroid. For circular features `sum` holds sines
// and `aux` cosines; for 3D coordinates `sum` holds members superposed onto
// the centroid at insertion time.
struct Accumulator {
  std::vector<double> sum;
  std::vector<double> aux;
  std::size_t count = 0;
};

using Points = Eigen::Matrix<double, 3, Eigen::Dynamic>;

}  // namespace

/// Mutable view over a ClusterTree during construction and refinement.
class TreeBuilder {
 public:
  TreeBuilder(const SnapshotStore& store, const Metric& metric, ClusterTree& tree)
      : store_(store), metric_(metric), tree_(tree) {
    acc_.resize(tree_.levels_.size());
  }

  void init_root() {
    auto& root = tree_.levels_[0];
    root.assign(1, Cluster{});
    acc_[0].assign(1, Accumulator{});
    for (std::size_t s = 0; s < store_.size(); ++s)
      add_member(0, 0, static_cast<SnapshotId>(s));
    std::fill(tree_.assignment_[0].begin(), tree_.assignment_[0].end(), 0);
  }

  void clear_level(std::size_t h) {
    tree_.levels_[h].clear();
    acc_[h].clear();
    for (auto& parent : tree_.levels_[h - 1]) parent.children.clear();
  }

  // Nearest child of `parent` within the level threshold, else a new one.
  std::size_t assign(std::size_t h, std::size_t parent, SnapshotId s) {
    auto& level = tree_.levels_[h];
    const auto row = store_.row(s);
    const auto& candidates = tree_.levels_[h - 1][parent].children;
    std::size_t best = kNoParent;
    double best_d = std::numeric_limits<double>::infinity();
    for (const std::size_t c : candidates) {
      const double d = metric_distance(metric_, level[c].centroid, row);
      if (d < best_d) {  // strict: ties keep the earlier cluster
        best_d = d;
        best = c;
      }
    }
    if (best == kNoParent || !(best_d < tree_.threshold(h))) {
      best = level.size();
      Cluster fresh;
      fresh.parent = parent;
      level.push_back(std::move(fresh));
      acc_[h].emplace_back();
      tree_.levels_[h - 1][parent].children.push_back(best);
    }
    add_member(h, best, s);
    tree_.assignment_[h][s] = best;
    return best;
  }

  // Parent at level h-1 for building level h: nearest child centroid at each
  // of the fixed levels 1..h-1, starting from the root.
  std::size_t descend(std::size_t h, SnapshotId s) const {
    const auto row = store_.row(s);
    std::size_t at = 0;
    for (std::size_t g = 1; g < h; ++g) {
      const auto& level = tree_.levels_[g];
      std::size_t best = kNoParent;
      double best_d = std::numeric_limits<double>::infinity();
      for (const std::size_t c : tree_.levels_[g - 1][at].children) {
        const double d = metric_distance(metric_, level[c].centroid, row);
        if (best == kNoParent || d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best == kNoParent) fail(ErrorCode::internal, "childless cluster in a fixed level");
      at = best;
    }
    return at;
  }

  // After level h was rebuilt, points every level-(h+1) cluster at the new
  // level-h cluster holding most of its members (lowest index on ties).
  void relink(std::size_t h) {
    if (h + 1 >= tree_.levels_.size()) return;
    const auto& owner = tree_.assignment_[h];
    std::vector<std::size_t> votes(tree_.levels_[h].size(), 0);
    auto& finer = tree_.levels_[h + 1];
    for (std::size_t c = 0; c < finer.size(); ++c) {
      std::fill(votes.begin(), votes.end(), 0);
      for (const SnapshotId m : finer[c].members) ++votes[owner[m]];
      const auto parent = static_cast<std::size_t>(
          std::max_element(votes.begin(), votes.end()) - votes.begin());
      finer[c].parent = parent;
      tree_.levels_[h][parent].children.push_back(c);
    }
  }

  // Centroids of a finished level are kept; the accumulators are not.
  void release(std::size_t h) {
    acc_[h].clear();
    acc_[h].shrink_to_fit();
  }

 private:
  void add_member(std::size_t h, std::size_t c, SnapshotId s) {
    Cluster& cluster = tree_.levels_[h][c];
    Accumulator& acc = acc_[h][c];
    const auto row = store_.row(s);
    const std::size_t d = row.size();
    cluster.members.push_back(s);
    if (acc.count == 0) {
      acc.sum.assign(d, 0.0);
      if (metric_.kind == MetricKind::periodic_euclidean) acc.aux.assign(d, 0.0);
      cluster.centroid.assign(d, 0.0);
    }
    ++acc.count;
    const double inv = 1.0 / static_cast<double>(acc.count);

    switch (metric_.kind) {
      case MetricKind::euclidean:
        for (std::size_t f = 0; f < d; ++f) {
          acc.sum[f] += row[f];
          cluster.centroid[f] = acc.sum[f] * inv;
        }
        break;
      case MetricKind::periodic_euclidean: {
        const double to_rad = 2.0 * std::numbers::pi / metric_.period;
        for (std::size_t f = 0; f < d; ++f) {
          acc.sum[f] += std::sin(row[f] * to_rad);
          acc.aux[f] += std::cos(row[f] * to_rad);
          const double angle = std::atan2(acc.sum[f], acc.aux[f]) / to_rad;
          cluster.centroid[f] = wrap_periodic(angle, metric_.period);
        }
        break;
      }
      case MetricKind::aligned_rmsd: {
        const auto n = static_cast<Eigen::Index>(d / 3);
        Points pts = Eigen::Map<const Points>(row.data(), 3, n);
        const Eigen::Vector3d mean = pts.rowwise().mean();
        pts.colwise() -= mean;
        if (acc.count > 1) {
          const auto fit = optimal_superposition(
              std::span<const double>(pts.data(), d), cluster.centroid);
          Eigen::Matrix3d rot;
          for (int r = 0; r < 3; ++r)
            for (int col = 0; col < 3; ++col) rot(r, col) = fit.rotation[r * 3 + col];
          pts = (rot * pts).eval();
        }
        for (std::size_t f = 0; f < d; ++f) {
          acc.sum[f] += pts.data()[f];
          cluster.centroid[f] = acc.sum[f] * inv;
        }
        break;
      }
    }
  }

  const SnapshotStore& store_;
  const Metric& metric_;
  ClusterTree& tree_;
  std::vector<std::vector<Accumulator>> acc_;
};

ClusterTree::ClusterTree(std::size_t n_snapshots, std::vector<double> thresholds)
    : n_(n_snapshots), thresholds_(std::move(thresholds)) {
  levels_.resize(thresholds_.size() + 1);
  assignment_.assign(thresholds_.size() + 1,
                     std::vector<std::size_t>(n_snapshots, kNoParent));
}

void ClusterTree::validate() const {
  for (std::size_t h = 1; h < thresholds_.size(); ++h)
    if (!(thresholds_[h] < thresholds_[h - 1]))
      fail(ErrorCode::internal, "thresholds not strictly decreasing");
  if (levels_.empty() || levels_[0].size() != 1 ||
      levels_[0][0].members.size() != n_)
    fail(ErrorCode::internal, "level 0 must be a single cluster of all snapshots");
  for (std::size_t h = 0; h < levels_.size(); ++h) {
    std::vector<char> seen(n_, 0);
    for (std::size_t c = 0; c < levels_[h].size(); ++c) {
      const Cluster& cluster = levels_[h][c];
      if (cluster.members.empty())
        fail(ErrorCode::internal, "empty cluster at level " + std::to_string(h));
      if (h > 0 && cluster.parent >= levels_[h - 1].size())
        fail(ErrorCode::internal, "dangling parent link");
      for (const SnapshotId m : cluster.members) {
        if (m >= n_ || seen[m])
          fail(ErrorCode::internal,
               "level " + std::to_string(h) + " is not a partition");
        seen[m] = 1;
        if (assignment_[h][m] != c)
          fail(ErrorCode::internal, "assignment table out of sync");
      }
      for (const std::size_t child : cluster.children)
        if (h + 1 >= levels_.size() || levels_[h + 1][child].parent != c)
          fail(ErrorCode::internal, "child link mismatch");
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
      fail(ErrorCode::internal, "level " + std::to_string(h) + " misses snapshots");
  }
}

std::vector<double> threshold_ladder(std::size_t levels, double d_coarse,
                                     double d_fine) {
  if (levels < 2) fail(ErrorCode::invalid_argument, "need at least 2 levels");
  if (!(d_fine > 0.0) || !(d_coarse > d_fine) || !std::isfinite(d_coarse))
    fail(ErrorCode::invalid_argument,
         "thresholds must satisfy d_coarse > d_fine > 0");
  const double step = (d_coarse - d_fine) / static_cast<double>(levels - 1);
  std::vector<double> ladder(levels);
  for (std::size_t k = 0; k < levels; ++k)
    ladder[k] = d_coarse - static_cast<double>(k) * step;
  ladder.back() = d_fine;
  return ladder;
}

ClusterTree build_tree(const SnapshotStore& store, const Metric& metric,
                       std::size_t levels, double d_coarse, double d_fine) {
  check_compatible(store, metric);
  ClusterTree tree(store.size(), threshold_ladder(levels, d_coarse, d_fine));
  TreeBuilder builder(store, metric, tree);
  builder.init_root();
  builder.release(0);

  const std::size_t leaf = levels;
  for (std::size_t s = 0; s < store.size(); ++s) {
    std::size_t parent = 0;
    for (std::size_t h = 1; h < leaf; ++h)
      parent = builder.assign(h, parent, static_cast<SnapshotId>(s));
  }
  for (std::size_t s = 0; s < store.size(); ++s) {
    const auto id = static_cast<SnapshotId>(s);
    builder.assign(leaf, builder.descend(leaf, id), id);
  }
  return tree;
}

void refine_multipass(ClusterTree& tree, const SnapshotStore& store,
                      const Metric& metric, std::size_t depth) {
  const std::size_t leaf = tree.height();
  if (depth == 0) return;
  if (leaf < 2 || depth > leaf - 2)
    fail(ErrorCode::invalid_argument,
         "refinement depth must lie in [0, H-2] (H = " + std::to_string(leaf) +
             ")");
  if (tree.n_snapshots() != store.size())
    fail(ErrorCode::invalid_argument, "tree was built over a different dataset");
  check_compatible(store, metric);

  TreeBuilder builder(store, metric, tree);
  for (std::size_t k = 1; k <= depth; ++k) {
    const std::size_t h = leaf - k;
    builder.clear_level(h);
    for (std::size_t s = 0; s < store.size(); ++s) {
      const auto id = static_cast<SnapshotId>(s);
      builder.assign(h, builder.descend(h, id), id);
    }
    builder.release(h);
    builder.relink(h);
  }
}

std::vector<LevelStats> tree_stats(const ClusterTree& tree) {
  std::vector<LevelStats> stats;
  for (std::size_t h = 0; h < tree.level_count(); ++h) {
    LevelStats s;
    s.level = h;
    s.clusters = tree.level(h).size();
    for (const auto& c : tree.level(h))
      s.max_cluster_size = std::max(s.max_cluster_size, c.members.size());
    s.mean_cluster_size =
        static_cast<double>(tree.n_snapshots()) / static_cast<double>(s.clusters);
    if (h > 0) s.size_ratio = stats.back().mean_cluster_size / s.mean_cluster_size;
    stats.push_back(s);
  }
  return stats;
}

double threshold_violation_fraction(const ClusterTree& tree,
                                    const SnapshotStore& store,
                                    const Metric& metric, std::size_t h) {
  if (h == 0 || h > tree.height())
    fail(ErrorCode::out_of_range, "level out of range");
  std::size_t violations = 0;
  for (const auto& c : tree.level(h))
    for (const SnapshotId m : c.members)
      if (metric_distance(metric, c.centroid, store.row(m)) > tree.threshold(h))
        ++violations;
  return static_cast<double>(violations) / static_cast<double>(tree.n_snapshots());
}

void write_tree_csv(const ClusterTree& tree, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  const std::size_t d =
      tree.level_count() ? tree.level(0).front().centroid.size() : 0;
  out << "level,id,parent,members";
  for (std::size_t f = 0; f < d; ++f) out << ",c" << f;
  out << '\n';
  std::string buf;
  for (std::size_t h = 0; h < tree.level_count(); ++h) {
    const auto level = tree.level(h);
    for (std::size_t c = 0; c < level.size(); ++c) {
      buf = std::to_string(h) + ',' + std::to_string(c) + ',' +
            (h == 0 ? std::string("-1") : std::to_string(level[c].parent)) +
            ',' + std::to_string(level[c].members.size());
      for (const double v : level[c].centroid) {
        buf += ',';
        detail::append_double(buf, v);
      }
      buf += '\n';
      out << buf;
    }
  }
  if (!out) fail(ErrorCode::io, "write failed on " + path.string());
}

std::vector<ClusterRecord> read_tree_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).rfind("level,", 0) != 0)
    fail(ErrorCode::parse, path.string() + ": missing header");
  std::vector<ClusterRecord> records;
  while (std::getline(in, line)) {
    const auto view = detail::trim(line);
    if (view.empty()) continue;
    const auto cells = detail::split(view, ',');
    ClusterRecord r;
    bool ok = cells.size() >= 4 && detail::parse_int(cells[0], r.level) &&
              detail::parse_int(cells[1], r.id) &&
              detail::parse_int(cells[2], r.parent) &&
              detail::parse_int(cells[3], r.members);
    for (std::size_t i = 4; ok && i < cells.size(); ++i) {
      double v = 0.0;
      ok = detail::parse_double(cells[i], v);
      r.centroid.push_back(v);
    }
    if (!ok) fail(ErrorCode::parse, path.string() + ": malformed row");
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace sapphire
