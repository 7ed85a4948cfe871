// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <tuple>
#include <vector>

#include "sapphire/dataset.hpp"
#include "sapphire/hcluster.hpp"

namespace sapphire {

struct Edge {
  SnapshotId u = 0;
  SnapshotId v = 0;
  double weight = 0.0;

  static Edge make(SnapshotId a, SnapshotId b, double w) noexcept {
    return a < b ? Edge{a, b, w} : Edge{b, a, w};
  }
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Strict total order used for every tie-break: (weight, u, v).
inline bool edge_less(const Edge& a, const Edge& b) noexcept {
  return std::tie(a.weight, a.u, a.v) < std::tie(b.weight, b.u, b.v);
}

struct Neighbor {
  SnapshotId vertex;
  double weight;
};

/// N-1 canonical edges forming a single tree, plus a CSR adjacency index.
class SpanningTree {
 public:
  SpanningTree() = default;
  /// Validates edge count, acyclicity and connectivity; edges are stored in
  /// canonical form sorted by (weight, u, v).
  SpanningTree(std::size_t n_vertices, std::vector<Edge> edges);

  std::size_t n_vertices() const noexcept { return n_; }
  std::span<const Edge> edges() const noexcept { return edges_; }
  double total_length() const noexcept { return length_; }

  std::span<const Neighbor> neighbors(std::size_t v) const noexcept {
    return {adjacency_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::size_t degree(std::size_t v) const noexcept {
    return offsets_[v + 1] - offsets_[v];
  }

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  double length_ = 0.0;
  std::vector<std::size_t> offsets_;
  std::vector<Neighbor> adjacency_;
};

/// Dense Prim over the complete graph, O(N^2) distance evaluations.
SpanningTree exact_mst(const SnapshotStore& store, const Metric& metric);

struct SstParams {
  std::size_t n_guesses = 16;
  std::size_t sigma_max = 2;
  std::size_t schedule_span = 150;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  /// One mutex-guarded generator for all anchors instead of per-(vertex,
  /// stage) streams. Results then depend on scheduling.
  bool shared_rng = false;
  std::size_t stage_cap = 64;
};

struct SstStats {
  std::size_t stages = 0;
  std::uint64_t distance_evaluations = 0;
  /// Subtree count at the start of each stage.
  std::vector<std::size_t> subtrees;
  std::size_t max_cache_entries = 0;
  /// Cache entries found joining two vertices of one subtree after cleanup.
  std::size_t stale_cache_entries = 0;
};

struct SstResult {
  SpanningTree tree;
  SstStats stats;
};

/// Approximate MST by Borůvka merging with a limited number of guesses per
/// vertex drawn from the cluster tree.
SstResult build_sst(const SnapshotStore& store, const Metric& metric,
                    const ClusterTree& tree, const SstParams& params);

/// Counter-based stream: the output depends only on (seed, stage, vertex)
/// and the draw index, never on which thread asks.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stage, std::uint64_t vertex) noexcept;
  std::uint64_t next() noexcept;
  /// Uniform in [0, bound).
  std::size_t below(std::size_t bound) noexcept;

 private:
  std::uint64_t state_;
};

/// Eligible members of one cluster: the complement of the searching vertex's
/// subtree run inside a member list sorted by (subtree label, vertex).
class CandidatePool {
 public:
  CandidatePool() = default;
  CandidatePool(std::span<const std::uint64_t> sorted_keys, std::size_t run_begin,
                std::size_t run_end) noexcept
      : keys_(sorted_keys), run_begin_(run_begin), run_end_(run_end) {}

  std::size_t size() const noexcept {
    return keys_.size() - (run_end_ - run_begin_);
  }
  SnapshotId operator[](std::size_t k) const noexcept {
    const std::size_t idx = k < run_begin_ ? k : k + (run_end_ - run_begin_);
    return static_cast<SnapshotId>(keys_[idx] & 0xffffffffu);
  }

 private:
  std::span<const std::uint64_t> keys_;
  std::size_t run_begin_ = 0;
  std::size_t run_end_ = 0;
};

inline std::uint64_t member_key(SnapshotId label, SnapshotId vertex) noexcept {
  return (static_cast<std::uint64_t>(label) << 32) | vertex;
}

/// Locates the eligible members by two binary searches, O(log C).
CandidatePool candidate_pool(std::span<const std::uint64_t> sorted_keys,
                             SnapshotId label) noexcept;

/// Pool positions to evaluate. Returns every position when pool_size <= k.
/// Otherwise draws a uniform anchor and takes up to `span` consecutive
/// positions (stage >= 2) or `span` evenly spaced positions across the pool
/// (stage 1), repeating with fresh anchors until k positions are chosen.
template <class Uniform>
void scheduled_pick(std::size_t pool_size, std::size_t k, std::size_t stage,
                    std::size_t span, Uniform&& uniform,
                    std::vector<std::size_t>& out) {
  out.clear();
  if (pool_size <= k) {
    for (std::size_t i = 0; i < pool_size; ++i) out.push_back(i);
    return;
  }
  const std::size_t stride = stage <= 1 ? std::max<std::size_t>(1, pool_size / span) : 1;
  while (out.size() < k) {
    const std::size_t anchor = uniform(pool_size);
    const std::size_t take = std::min(span, k - out.size());
    for (std::size_t j = 0; j < take; ++j)
      out.push_back((anchor + j * stride) % pool_size);
  }
}

inline constexpr std::size_t kGuessCacheSize = 5;

/// Per-vertex list of the nearest eligible neighbors seen so far, ordered by
/// (weight, vertex). Entries carry their distance so later stages reuse them
/// without re-evaluation.
class GuessCache {
 public:
  explicit GuessCache(std::size_t n_vertices = 0)
      : entries_(n_vertices), sizes_(n_vertices, 0) {}

  std::size_t size(std::size_t v) const noexcept { return sizes_[v]; }
  const Neighbor& at(std::size_t v, std::size_t k) const noexcept {
    return entries_[v][k];
  }
  /// Inserts unless the vertex is already listed or the list is full of
  /// nearer entries; a full list drops its farthest entry.
  void push(std::size_t v, Neighbor entry) noexcept;
  /// Drops entries whose endpoints now share a subtree label.
  void purge(std::size_t v, std::span<const SnapshotId> labels) noexcept;

 private:
  std::vector<std::array<Neighbor, kGuessCacheSize>> entries_;
  std::vector<std::uint8_t> sizes_;
};

struct TreeComparison {
  double shared_edge_fraction = 0.0;
  double length_a = 0.0;
  double length_b = 0.0;
};

TreeComparison compare_trees(const SpanningTree& a, const SpanningTree& b);

/// CSV with header u,v,weight.
void write_spanning_tree_csv(const SpanningTree& tree,
                             const std::filesystem::path& path);
/// n_vertices = 0 infers N from the edge count.
SpanningTree read_spanning_tree_csv(const std::filesystem::path& path,
                                    std::size_t n_vertices = 0);

}  // namespace sapphire
