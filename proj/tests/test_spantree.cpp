// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <fstream>
#include <random>
#include <set>

#include "sapphire/error.hpp"
#include "sapphire/hcluster.hpp"
#include "sapphire/spantree.hpp"
#include "sapphire/synthgen.hpp"
#include "support.hpp"

using namespace sapphire;

namespace {

// Kruskal over the complete graph; the oracle for exact_mst.
std::vector<Edge> kruskal(const SnapshotStore& store, const Metric& metric) {
  const std::size_t n = store.size();
  std::vector<Edge> all;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      all.push_back(Edge::make(static_cast<SnapshotId>(i), static_cast<SnapshotId>(j),
                               metric_distance(metric, store.row(i), store.row(j))));
  std::sort(all.begin(), all.end(), edge_less);
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<Edge> out;
  for (const auto& e : all) {
    const auto a = find(e.u), b = find(e.v);
    if (a == b) continue;
    parent[a] = b;
    out.push_back(e);
  }
  return out;
}

bool same_edges(std::span<const Edge> a, std::span<const Edge> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].u != b[i].u || a[i].v != b[i].v || a[i].weight != b[i].weight) return false;
  return true;
}

SstParams exhaustive(std::size_t n, std::size_t levels) {
  SstParams p;
  p.n_guesses = n * (levels + 2);
  p.sigma_max = levels;
  return p;
}

}  // namespace

TEST_CASE("spanning tree construction rejects non-trees") {
  CHECK_NOTHROW(SpanningTree(3, {Edge::make(0, 1, 1.0), Edge::make(2, 1, 2.0)}));
  CHECK_THROWS_AS(SpanningTree(3, {Edge::make(0, 1, 1.0)}), Error);
  CHECK_THROWS_AS(SpanningTree(4, {Edge::make(0, 1, 1.0), Edge::make(1, 2, 1.0),
                                   Edge::make(0, 2, 1.0)}),
                  Error);
  CHECK_THROWS_AS(SpanningTree(3, {Edge::make(0, 1, 1.0), Edge::make(1, 3, 1.0)}), Error);
  CHECK_THROWS_AS(SpanningTree(3, {Edge::make(0, 1, -1.0), Edge::make(1, 2, 1.0)}), Error);
  CHECK_THROWS_AS(SpanningTree(3, {Edge::make(0, 1, NAN), Edge::make(1, 2, 1.0)}), Error);
  CHECK_THROWS_AS(SpanningTree(3, {Edge::make(0, 0, 1.0), Edge::make(1, 2, 1.0)}), Error);

  const SpanningTree t(4, {Edge::make(3, 0, 2.0), Edge::make(1, 0, 1.0), Edge::make(2, 0, 1.0)});
  CHECK(t.total_length() == 4.0);
  CHECK(t.degree(0) == 3);
  CHECK(t.degree(3) == 1);
  CHECK(t.edges()[0].u == 0);  // canonical u < v, sorted by (weight, u, v)
  CHECK(t.edges()[0].v == 1);
  CHECK(t.edges()[2].v == 3);
}

TEST_CASE("exact mst matches Kruskal") {
  for (const std::uint64_t seed : {1u, 2u, 3u}) {
    const auto store = testing::uniform_store(150, 3, seed);
    const auto mst = exact_mst(store, Metric{});
    const auto oracle = kruskal(store, Metric{});
    const SpanningTree expected(store.size(), oracle);
    CHECK(same_edges(mst.edges(), expected.edges()));
    CHECK(mst.total_length() == doctest::Approx(expected.total_length()).epsilon(1e-12));
  }
  CHECK_THROWS_AS(exact_mst(testing::uniform_store(1, 2, 1), Metric{}), Error);
}

TEST_CASE("exhaustive short spanning tree equals the mst") {
  const auto store = testing::uniform_store(300, 4, 9);
  const auto tree = build_tree(store, Metric{}, 5, 0.8, 0.15);
  const auto mst = exact_mst(store, Metric{});
  for (const std::size_t threads : {1u, 3u}) {
    auto params = exhaustive(store.size(), tree.height());
    params.threads = threads;
    const auto sst = build_sst(store, Metric{}, tree, params);
    CHECK(same_edges(sst.tree.edges(), mst.edges()));
    CHECK(compare_trees(sst.tree, mst).shared_edge_fraction == 1.0);
  }
}

TEST_CASE("short spanning tree is a valid tree for limited searches") {
  const auto store = testing::uniform_store(2000, 3, 21);
  const auto tree = build_tree(store, Metric{}, 6, 0.7, 0.05);
  const auto mst = exact_mst(store, Metric{});
  for (const std::size_t guesses : {1u, 4u, 16u})
    for (const std::size_t sigma : {0u, 2u}) {
      SstParams p;
      p.n_guesses = guesses;
      p.sigma_max = sigma;
      p.schedule_span = 7;
      const auto sst = build_sst(store, Metric{}, tree, p);
      CHECK(sst.tree.n_vertices() == store.size());
      CHECK(sst.tree.total_length() >= mst.total_length() - 1e-9);
      CHECK(sst.stats.stages == sst.stats.subtrees.size());
      CHECK(sst.stats.subtrees.front() == store.size());
      CHECK(std::is_sorted(sst.stats.subtrees.rbegin(), sst.stats.subtrees.rend()));
      CHECK(sst.stats.stale_cache_entries == 0);
      CHECK(sst.stats.max_cache_entries <= kGuessCacheSize);
      // Every stage at least halves the subtree count.
      for (std::size_t s = 1; s < sst.stats.subtrees.size(); ++s)
        CHECK(2 * sst.stats.subtrees[s] <= sst.stats.subtrees[s - 1]);
    }
}

TEST_CASE("thread count does not change the tree") {
  const auto store = testing::uniform_store(3000, 5, 33);
  const auto tree = build_tree(store, Metric{}, 6, 1.0, 0.2);
  SstParams p;
  p.seed = 77;
  const auto reference = build_sst(store, Metric{}, tree, p);
  for (const std::size_t threads : {2u, 4u, 7u}) {
    p.threads = threads;
    const auto other = build_sst(store, Metric{}, tree, p);
    CHECK(same_edges(other.tree.edges(), reference.tree.edges()));
    CHECK(other.stats.distance_evaluations == reference.stats.distance_evaluations);
  }
  p.threads = 1;
  p.seed = 78;
  CHECK_FALSE(same_edges(build_sst(store, Metric{}, tree, p).tree.edges(),
                         reference.tree.edges()));
}

TEST_CASE("shared generator mode still yields a spanning tree") {
  const auto store = testing::uniform_store(1500, 3, 5);
  const auto tree = build_tree(store, Metric{}, 5, 0.8, 0.1);
  SstParams p;
  p.shared_rng = true;
  p.threads = 3;
  const auto sst = build_sst(store, Metric{}, tree, p);
  CHECK(sst.tree.n_vertices() == store.size());
}

TEST_CASE("stage cap and argument errors surface") {
  const auto store = testing::uniform_store(400, 2, 5);
  const auto tree = build_tree(store, Metric{}, 4, 0.8, 0.1);
  SstParams p;
  p.stage_cap = 1;
  p.threads = 2;
  try {
    build_sst(store, Metric{}, tree, p);
    FAIL("expected the stage cap to trigger");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::internal);
  }
  p = SstParams{};
  p.n_guesses = 0;
  CHECK_THROWS_AS(build_sst(store, Metric{}, tree, p), Error);
  const auto other = testing::uniform_store(401, 2, 5);
  CHECK_THROWS_AS(build_sst(other, Metric{}, tree, SstParams{}), Error);
}

TEST_CASE("counter rng depends only on its key") {
  CounterRng a(1, 2, 3), b(1, 2, 3), c(1, 2, 4), d(1, 3, 3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    seen.insert(x);
    seen.insert(c.next());
    seen.insert(d.next());
  }
  CHECK(seen.size() == 300);

  // Chi-square on 10 bins; 27.9 is the 0.999 quantile for 9 degrees of freedom.
  CounterRng r(42, 1, 1);
  std::array<int, 10> bins{};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto x = r.below(10);
    REQUIRE(x < 10);
    ++bins[x];
  }
  double chi2 = 0.0;
  for (const int b : bins) chi2 += (b - draws / 10.0) * (b - draws / 10.0) / (draws / 10.0);
  CHECK(chi2 < 27.9);
}

TEST_CASE("scheduled picking follows the stretch schedule") {
  std::vector<std::size_t> out;
  auto fixed = [](std::size_t) { return std::size_t{5}; };
  scheduled_pick(4, 10, 1, 150, fixed, out);
  CHECK(out == std::vector<std::size_t>{0, 1, 2, 3});

  scheduled_pick(1000, 4, 2, 150, fixed, out);
  CHECK(out == std::vector<std::size_t>{5, 6, 7, 8});

  scheduled_pick(1500, 3, 1, 150, fixed, out);  // stride 10 in the first stage
  CHECK(out == std::vector<std::size_t>{5, 15, 25});

  scheduled_pick(100, 5, 2, 150, [](std::size_t) { return std::size_t{98}; }, out);
  CHECK(out == std::vector<std::size_t>{98, 99, 0, 1, 2});

  // Short spans re-anchor until k positions are chosen.
  std::size_t calls = 0;
  scheduled_pick(
      100, 7, 3, 3, [&](std::size_t) { return 10 * ++calls; }, out);
  CHECK(calls == 3);
  CHECK(out == std::vector<std::size_t>{10, 11, 12, 20, 21, 22, 30});
}

TEST_CASE("scheduled picking is uniform over the pool") {
  // With a uniform anchor every position is picked with equal probability.
  CounterRng rng(9, 2, 0);
  auto uniform = [&](std::size_t b) { return rng.below(b); };
  const std::size_t pool = 37;
  for (const std::size_t stage : {1u, 2u}) {
    std::vector<int> hits(pool, 0);
    std::vector<std::size_t> out;
    const int rounds = 20000;
    for (int r = 0; r < rounds; ++r) {
      scheduled_pick(pool, 5, stage, 4, uniform, out);
      for (const auto p : out) ++hits[p];
    }
    const double expected = rounds * 5.0 / pool;
    double chi2 = 0.0;
    for (const int h : hits) chi2 += (h - expected) * (h - expected) / expected;
    CHECK(chi2 < 70.0);  // 0.999 quantile for 36 degrees of freedom is about 67.9
  }
}

TEST_CASE("candidate pool excludes exactly the own subtree") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<SnapshotId> label_dist(0, 6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint64_t> keys;
    for (SnapshotId v = 0; v < 60; ++v) keys.push_back(member_key(label_dist(rng), v));
    std::sort(keys.begin(), keys.end());
    for (SnapshotId label = 0; label <= 7; ++label) {
      const auto pool = candidate_pool(keys, label);
      std::vector<SnapshotId> expected;  // linear scan oracle
      for (const auto k : keys)
        if ((k >> 32) != label) expected.push_back(static_cast<SnapshotId>(k & 0xffffffffu));
      REQUIRE(pool.size() == expected.size());
      for (std::size_t i = 0; i < pool.size(); ++i) CHECK(pool[i] == expected[i]);
    }
  }
}

TEST_CASE("guess cache keeps the nearest distinct entries") {
  GuessCache cache(6);
  for (const auto& [v, w] : std::vector<std::pair<SnapshotId, double>>{
           {1, 5.0}, {3, 3.0}, {3, 3.0}, {4, 9.0}, {4, 7.0}, {1, 5.0}})
    cache.push(2, Neighbor{v, w});
  // Vertex 4 was offered twice with different weights; the first stays.
  CHECK(cache.size(2) == 3);
  CHECK(cache.at(2, 0).vertex == 3);
  CHECK(cache.at(2, 1).vertex == 1);
  CHECK(cache.at(2, 2).weight == 9.0);

  for (SnapshotId v = 10; v < 20; ++v) cache.push(0, Neighbor{v, 20.0 - v});
  CHECK(cache.size(0) == kGuessCacheSize);
  CHECK(cache.at(0, 0).vertex == 19);
  CHECK(cache.at(0, 4).vertex == 15);
  cache.push(0, Neighbor{30, 100.0});  // farther than every kept entry
  CHECK(cache.at(0, 4).vertex == 15);

  const std::vector<SnapshotId> labels{0, 1, 0, 0, 4, 5};
  cache.purge(2, labels);  // vertex 3 now shares the subtree of vertex 2
  CHECK(cache.size(2) == 2);
  CHECK(cache.at(2, 0).vertex == 1);
  CHECK(cache.at(2, 1).vertex == 4);
}

TEST_CASE("tree comparison and csv round trip") {
  testing::TempDir dir("span");
  const auto store = testing::uniform_store(200, 2, 3);
  const auto mst = exact_mst(store, Metric{});
  const auto tree = build_tree(store, Metric{}, 4, 0.6, 0.1);
  const auto sst = build_sst(store, Metric{}, tree, SstParams{}).tree;
  const auto same = compare_trees(mst, mst);
  CHECK(same.shared_edge_fraction == 1.0);
  const auto cmp = compare_trees(sst, mst);
  CHECK(cmp.length_a == sst.total_length());
  CHECK(cmp.length_b == mst.total_length());
  CHECK(cmp.shared_edge_fraction >= 0.0);
  CHECK(cmp.shared_edge_fraction <= 1.0);
  CHECK_THROWS_AS(compare_trees(mst, exact_mst(testing::uniform_store(10, 2, 1), Metric{})),
                  Error);

  write_spanning_tree_csv(sst, dir / "t.csv");
  const auto back = read_spanning_tree_csv(dir / "t.csv");
  CHECK(same_edges(back.edges(), sst.edges()));
  CHECK(read_spanning_tree_csv(dir / "t.csv", 200).n_vertices() == 200);
  CHECK_THROWS_AS(read_spanning_tree_csv(dir / "t.csv", 300), Error);
  {
    std::ofstream(dir / "cycle.csv") << "u,v,weight\n0,1,1\n1,2,1\n2,0,1\n";
  }
  CHECK_THROWS_AS(read_spanning_tree_csv(dir / "cycle.csv"), Error);
}
