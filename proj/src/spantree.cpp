// SPDX-License-Identifier: Apache-2.0

#include "sapphire/spantree.hpp"

#include <atomic>
#include <barrier>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include "sapphire/error.hpp"
#include "text_util.hpp"

namespace sapphire {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Edge no_edge() { return Edge{0, 0, kInf}; }

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), SnapshotId{0});
  }

  // No writes, safe for concurrent readers while nobody unites.
  SnapshotId find(SnapshotId v) const noexcept {
    while (parent_[v] != v) v = parent_[v];
    return v;
  }

  SnapshotId find_compress(SnapshotId v) noexcept {
    while (parent_[v] != v) {
      parent_[v] = parent_[parent_[v]];
      v = parent_[v];
    }
    return v;
  }

  // Larger subtree wins; equal sizes keep the smaller root id.
  bool unite(SnapshotId a, SnapshotId b) noexcept {
    a = find_compress(a);
    b = find_compress(b);
    if (a == b) return false;
    if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

 private:
  std::vector<SnapshotId> parent_;
  std::vector<std::size_t> size_;
};

struct alignas(64) WorkerCounters {
  std::uint64_t evaluations = 0;
  std::size_t max_cache = 0;
  std::size_t stale_cache = 0;
};

// Member lists of one tree level, concatenated cluster by cluster and keyed
// by (subtree label, vertex).
struct LevelKeys {
  std::vector<std::size_t> offsets;
  std::vector<std::uint64_t> keys;

  std::span<std::uint64_t> cluster(std::size_t c) {
    return {keys.data() + offsets[c], offsets[c + 1] - offsets[c]};
  }
  std::span<const std::uint64_t> cluster(std::size_t c) const {
    return {keys.data() + offsets[c], offsets[c + 1] - offsets[c]};
  }
};

// Contiguous run of clusters within one level, the unit of re-sorting work.
struct SortTask {
  std::size_t level;
  std::size_t first;
  std::size_t last;
};

}  // namespace

SpanningTree::SpanningTree(std::size_t n_vertices, std::vector<Edge> edges)
    : n_(n_vertices), edges_(std::move(edges)) {
  if (n_ == 0) fail(ErrorCode::invalid_argument, "spanning tree needs N >= 1");
  if (edges_.size() != n_ - 1)
    fail(ErrorCode::invalid_argument,
         "spanning tree over " + std::to_string(n_) + " vertices needs " +
             std::to_string(n_ - 1) + " edges, got " +
             std::to_string(edges_.size()));
  UnionFind uf(n_);
  for (auto& e : edges_) {
    if (e.u >= n_ || e.v >= n_ || e.u == e.v)
      fail(ErrorCode::invalid_argument, "invalid edge endpoint");
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight))
      fail(ErrorCode::invalid_argument, "edge weight must be finite and >= 0");
    e = Edge::make(e.u, e.v, e.weight);
    if (!uf.unite(e.u, e.v))
      fail(ErrorCode::invalid_argument, "edge set contains a cycle");
  }
  // N-1 edges without a cycle connect all N vertices.
  std::sort(edges_.begin(), edges_.end(), edge_less);

  offsets_.assign(n_ + 1, 0);
  for (const auto& e : edges_) {
    ++offsets_[e.u + 1];
    ++offsets_[e.v + 1];
    length_ += e.weight;
  }
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
  adjacency_.resize(2 * edges_.size());
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& e : edges_) {
    adjacency_[fill[e.u]++] = Neighbor{e.v, e.weight};
    adjacency_[fill[e.v]++] = Neighbor{e.u, e.weight};
  }
}

SpanningTree exact_mst(const SnapshotStore& store, const Metric& metric) {
  const std::size_t n = store.size();
  if (n < 2) fail(ErrorCode::invalid_argument, "exact MST needs N >= 2");
  check_compatible(store, metric);

  std::vector<Edge> key(n, no_edge());
  std::vector<char> in_tree(n, 0);
  std::vector<Edge> edges;
  edges.reserve(n - 1);
  SnapshotId current = 0;
  in_tree[0] = 1;
  for (std::size_t added = 1; added < n; ++added) {
    const auto row = store.row(current);
    SnapshotId next = 0;
    Edge next_key = no_edge();
    bool found = false;
    for (SnapshotId w = 0; w < n; ++w) {
      if (in_tree[w]) continue;
      const Edge cand = Edge::make(current, w, metric_distance(metric, row, store.row(w)));
      if (edge_less(cand, key[w])) key[w] = cand;
      if (!found || edge_less(key[w], next_key)) {
        next_key = key[w];
        next = w;
        found = true;
      }
    }
    edges.push_back(next_key);
    in_tree[next] = 1;
    current = next;
  }
  return SpanningTree(n, std::move(edges));
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stage,
                       std::uint64_t vertex) noexcept
    : state_(mix64(seed ^ mix64(stage + 0x632be59bd9b4e019ULL)) ^
             mix64(vertex + 0x9e3779b97f4a7c15ULL)) {}

namespace {
__extension__ typedef unsigned __int128 Wide;
}  // namespace

std::uint64_t CounterRng::next() noexcept {
  state_ += 0x9e3779b97f4a7c15ULL;
  return mix64(state_);
}

std::size_t CounterRng::below(std::size_t bound) noexcept {
  return static_cast<std::size_t>(
      (static_cast<Wide>(next()) * bound) >> 64);
}

CandidatePool candidate_pool(std::span<const std::uint64_t> sorted_keys,
                             SnapshotId label) noexcept {
  const std::uint64_t lo_key = member_key(label, 0);
  const auto lo = std::lower_bound(sorted_keys.begin(), sorted_keys.end(), lo_key);
  const auto hi = std::lower_bound(
      lo, sorted_keys.end(), static_cast<std::uint64_t>(label + 1ULL) << 32);
  return CandidatePool(sorted_keys,
                       static_cast<std::size_t>(lo - sorted_keys.begin()),
                       static_cast<std::size_t>(hi - sorted_keys.begin()));
}

void GuessCache::push(std::size_t v, Neighbor entry) noexcept {
  auto& list = entries_[v];
  std::size_t size = sizes_[v];
  auto nearer = [](const Neighbor& a, const Neighbor& b) {
    return a.weight != b.weight ? a.weight < b.weight : a.vertex < b.vertex;
  };
  for (std::size_t k = 0; k < size; ++k)
    if (list[k].vertex == entry.vertex) return;
  if (size == kGuessCacheSize) {
    if (!nearer(entry, list[size - 1])) return;
    --size;
  }
  std::size_t k = size;
  for (; k > 0 && nearer(entry, list[k - 1]); --k) list[k] = list[k - 1];
  list[k] = entry;
  sizes_[v] = static_cast<std::uint8_t>(size + 1);
}

void GuessCache::purge(std::size_t v, std::span<const SnapshotId> labels) noexcept {
  auto& list = entries_[v];
  std::size_t kept = 0;
  for (std::size_t k = 0; k < sizes_[v]; ++k)
    if (labels[list[k].vertex] != labels[v]) list[kept++] = list[k];
  sizes_[v] = static_cast<std::uint8_t>(kept);
}

SstResult build_sst(const SnapshotStore& store, const Metric& metric,
                    const ClusterTree& tree, const SstParams& params) {
  const std::size_t n = store.size();
  if (n < 2) fail(ErrorCode::invalid_argument, "spanning tree needs N >= 2");
  if (n > std::numeric_limits<SnapshotId>::max())
    fail(ErrorCode::invalid_argument, "too many snapshots");
  if (tree.n_snapshots() != n || tree.level_count() == 0)
    fail(ErrorCode::invalid_argument, "cluster tree was built over a different dataset");
  if (params.n_guesses < 1) fail(ErrorCode::invalid_argument, "n_guesses must be >= 1");
  if (params.schedule_span < 1)
    fail(ErrorCode::invalid_argument, "schedule_span must be >= 1");
  if (params.threads < 1) fail(ErrorCode::invalid_argument, "threads must be >= 1");
  check_compatible(store, metric);

  const std::size_t top = tree.height();  // finest level index
  const std::size_t n_threads = params.threads;

  std::vector<LevelKeys> levels(top + 1);
  std::vector<SortTask> tasks;
  constexpr std::size_t kTaskMembers = 8192;
  for (std::size_t h = 0; h <= top; ++h) {
    const auto clusters = tree.level(h);
    auto& lk = levels[h];
    lk.offsets.assign(clusters.size() + 1, 0);
    lk.keys.reserve(n);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      for (const SnapshotId m : clusters[c].members) lk.keys.push_back(member_key(m, m));
      lk.offsets[c + 1] = lk.keys.size();
    }
    std::size_t first = 0;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (lk.offsets[c + 1] - lk.offsets[first] >= kTaskMembers) {
        tasks.push_back({h, first, c + 1});
        first = c + 1;
      }
    }
    if (first < clusters.size()) tasks.push_back({h, first, clusters.size()});
  }

  std::vector<SnapshotId> labels(n);
  std::iota(labels.begin(), labels.end(), SnapshotId{0});
  std::vector<SnapshotId> roots(labels);
  UnionFind forest(n);
  GuessCache cache(n);
  std::vector<Edge> best(n, no_edge());
  std::vector<Edge> slots(n, no_edge());
  constexpr std::size_t kStripes = 1024;
  auto stripes = std::make_unique<std::mutex[]>(kStripes);

  std::vector<Edge> result;
  result.reserve(n - 1);
  SstStats stats;
  std::vector<WorkerCounters> counters(n_threads);

  std::mutex shared_rng_mutex;
  std::mt19937_64 shared_rng(params.seed);

  std::atomic<std::size_t> next_task{0};
  std::atomic<bool> abort{false};
  bool done = false;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::barrier sync(static_cast<std::ptrdiff_t>(n_threads));

  auto chunk = [&](std::size_t t) {
    return std::pair{t * n / n_threads, (t + 1) * n / n_threads};
  };

  // Limited-guess search for the shortest eligible edge of v.
  auto search = [&](SnapshotId v, std::size_t stage, WorkerCounters& ctr,
                    std::vector<std::size_t>& picks) {
    CounterRng rng(params.seed, stage, v);
    auto uniform = [&](std::size_t bound) -> std::size_t {
      if (!params.shared_rng) return rng.below(bound);
      std::lock_guard lock(shared_rng_mutex);
      return static_cast<std::size_t>(
          (static_cast<Wide>(shared_rng()) * bound) >> 64);
    };
    const SnapshotId label = labels[v];
    const auto row = store.row(v);
    Edge found = no_edge();
    std::size_t guesses = 0;
    for (std::size_t k = 0; k < cache.size(v); ++k) {
      const Neighbor& e = cache.at(v, k);
      const Edge cand = Edge::make(v, e.vertex, e.weight);
      if (edge_less(cand, found)) found = cand;
    }

    std::size_t h = top;
    CandidatePool pool;
    while (true) {
      pool = candidate_pool(levels[h].cluster(tree.assignment(h)[v]), label);
      if (pool.size() > 0 || h == 0) break;
      --h;
    }
    const std::size_t start = h;
    while (guesses < params.n_guesses && pool.size() > 0) {
      scheduled_pick(pool.size(), params.n_guesses - guesses, stage,
                     params.schedule_span, uniform, picks);
      for (const std::size_t p : picks) {
        const SnapshotId w = pool[p];
        const double d = metric_distance(metric, row, store.row(w));
        ++ctr.evaluations;
        const Edge cand = Edge::make(v, w, d);
        if (edge_less(cand, found)) found = cand;
        cache.push(v, Neighbor{w, d});
      }
      guesses += picks.size();
      if (h == 0 || start - h >= params.sigma_max) break;
      --h;
      pool = candidate_pool(levels[h].cluster(tree.assignment(h)[v]), label);
    }
    best[v] = found;
  };

  // Merge phase, run by worker 0 alone.
  auto merge = [&]() {
    std::vector<Edge> candidates;
    for (const SnapshotId r : roots) {
      if (std::isfinite(slots[r].weight)) candidates.push_back(slots[r]);
      slots[r] = no_edge();
    }
    std::sort(candidates.begin(), candidates.end(), edge_less);
    std::size_t merged = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const Edge& e = candidates[i];
      if (i > 0 && e.u == candidates[i - 1].u && e.v == candidates[i - 1].v) continue;
      if (forest.unite(e.u, e.v)) {
        result.push_back(e);
        ++merged;
      }
    }
    if (merged == 0)
      fail(ErrorCode::internal, "Borůvka stage made no progress");
    std::erase_if(roots, [&](SnapshotId r) { return forest.find(r) != r; });
    if (roots.size() == 1) done = true;
  };

  auto worker = [&](std::size_t t) {
    WorkerCounters& ctr = counters[t];
    const auto [lo, hi] = chunk(t);
    std::vector<std::size_t> picks;
    std::vector<std::pair<SnapshotId, Edge>> local;
    try {
      for (std::size_t stage = 1;; ++stage) {
        if (t == 0) {
          if (stage > params.stage_cap)
            fail(ErrorCode::internal,
                 "stage cap " + std::to_string(params.stage_cap) + " exceeded");
          stats.subtrees.push_back(roots.size());
        }
        // Sort member lists by subtree.
        for (std::size_t i = next_task.fetch_add(1); i < tasks.size();
             i = next_task.fetch_add(1)) {
          const SortTask& task = tasks[i];
          for (std::size_t c = task.first; c < task.last; ++c) {
            auto keys = levels[task.level].cluster(c);
            for (auto& key : keys) {
              const auto m = static_cast<SnapshotId>(key & 0xffffffffu);
              key = member_key(labels[m], m);
            }
            std::sort(keys.begin(), keys.end());
          }
        }
        sync.arrive_and_wait();

        for (std::size_t v = lo; v < hi; ++v)
          search(static_cast<SnapshotId>(v), stage, ctr, picks);

        // Chunk-local minimum per subtree, then the shared slot.
        local.clear();
        for (std::size_t v = lo; v < hi; ++v)
          if (std::isfinite(best[v].weight)) local.emplace_back(labels[v], best[v]);
        std::sort(local.begin(), local.end(), [](const auto& a, const auto& b) {
          return a.first != b.first ? a.first < b.first : edge_less(a.second, b.second);
        });
        for (std::size_t i = 0; i < local.size(); ++i) {
          if (i > 0 && local[i].first == local[i - 1].first) continue;
          const auto [label, edge] = local[i];
          std::lock_guard lock(stripes[label % kStripes]);
          if (edge_less(edge, slots[label])) slots[label] = edge;
        }
        sync.arrive_and_wait();

        if (t == 0 && !abort.load()) {
          merge();
          next_task.store(0);
          stats.stages = stage;
        }
        sync.arrive_and_wait();
        if (done || abort.load()) break;

        // Relabel from the merged forest.
        for (std::size_t v = lo; v < hi; ++v)
          labels[v] = forest.find(static_cast<SnapshotId>(v));
        sync.arrive_and_wait();

        // Drop cache entries that now join one subtree.
        for (std::size_t v = lo; v < hi; ++v) {
          cache.purge(v, labels);
          const std::size_t size = cache.size(v);
          ctr.max_cache = std::max(ctr.max_cache, size);
          for (std::size_t k = 0; k < size; ++k)
            if (labels[cache.at(v, k).vertex] == labels[v]) ++ctr.stale_cache;
        }
        // Stage ends.
        sync.arrive_and_wait();
      }
    } catch (...) {
      {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
      abort.store(true);
      sync.arrive_and_drop();
    }
  };

  {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads - 1);
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker, t);
    worker(0);
  }
  if (failure) std::rethrow_exception(failure);

  for (const auto& c : counters) {
    stats.distance_evaluations += c.evaluations;
    stats.max_cache_entries = std::max(stats.max_cache_entries, c.max_cache);
    stats.stale_cache_entries += c.stale_cache;
  }
  return SstResult{SpanningTree(n, std::move(result)), std::move(stats)};
}

TreeComparison compare_trees(const SpanningTree& a, const SpanningTree& b) {
  if (a.n_vertices() != b.n_vertices())
    fail(ErrorCode::invalid_argument, "trees span different vertex counts");
  TreeComparison out;
  out.length_a = a.total_length();
  out.length_b = b.total_length();
  if (a.n_vertices() < 2) {
    out.shared_edge_fraction = 1.0;
    return out;
  }
  std::vector<std::uint64_t> pairs;
  pairs.reserve(a.edges().size());
  for (const auto& e : a.edges()) pairs.push_back(member_key(e.u, e.v));
  std::sort(pairs.begin(), pairs.end());
  std::size_t shared = 0;
  for (const auto& e : b.edges())
    if (std::binary_search(pairs.begin(), pairs.end(), member_key(e.u, e.v))) ++shared;
  out.shared_edge_fraction =
      static_cast<double>(shared) / static_cast<double>(a.n_vertices() - 1);
  return out;
}

void write_spanning_tree_csv(const SpanningTree& tree,
                             const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << "u,v,weight\n";
  std::string buf;
  for (const auto& e : tree.edges()) {
    buf = std::to_string(e.u) + ',' + std::to_string(e.v) + ',';
    detail::append_double(buf, e.weight);
    buf += '\n';
    out << buf;
  }
  if (!out) fail(ErrorCode::io, "write failed on " + path.string());
}

SpanningTree read_spanning_tree_csv(const std::filesystem::path& path,
                                    std::size_t n_vertices) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "u,v,weight")
    fail(ErrorCode::parse, path.string() + ": expected header u,v,weight");
  std::vector<Edge> edges;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = detail::trim(line);
    if (view.empty()) continue;
    const auto cells = detail::split(view, ',');
    Edge e;
    if (cells.size() != 3 || !detail::parse_int(detail::trim(cells[0]), e.u) ||
        !detail::parse_int(detail::trim(cells[1]), e.v) ||
        !detail::parse_double(detail::trim(cells[2]), e.weight))
      fail(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) +
                                 ": malformed edge row");
    edges.push_back(e);
  }
  if (n_vertices == 0) n_vertices = edges.size() + 1;
  return SpanningTree(n_vertices, std::move(edges));
}

}  // namespace sapphire
