// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "sapphire/error.hpp"
#include "sapphire/hcluster.hpp"
#include "sapphire/synthgen.hpp"
#include "support.hpp"

using namespace sapphire;

TEST_CASE("threshold ladder is linear between its endpoints") {
  const auto ladder = threshold_ladder(5, 10.0, 2.0);
  REQUIRE(ladder.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) CHECK(ladder[k] == doctest::Approx(10.0 - 2.0 * k));
  CHECK(ladder.back() == 2.0);
  CHECK_THROWS_AS(threshold_ladder(1, 10.0, 2.0), Error);
  CHECK_THROWS_AS(threshold_ladder(4, 2.0, 10.0), Error);
  CHECK_THROWS_AS(threshold_ladder(4, 2.0, 2.0), Error);
  CHECK_THROWS_AS(threshold_ladder(4, 2.0, 0.0), Error);
}

TEST_CASE("well separated groups become separate clusters") {
  // Two tight groups far apart, each with two tight pairs.
  const SnapshotStore store(8, 1, {0.0, 0.1, 3.0, 3.1, 100.0, 100.1, 103.0, 103.1},
                            std::vector<FeatureKind>(1, FeatureKind::linear));
  const auto tree = build_tree(store, Metric{}, 2, 20.0, 1.0);
  tree.validate();
  CHECK(tree.level(0).size() == 1);
  CHECK(tree.level(1).size() == 2);
  CHECK(tree.level(2).size() == 4);
  const auto leaf = tree.assignment(2);
  CHECK(leaf[0] == leaf[1]);
  CHECK(leaf[2] == leaf[3]);
  CHECK(leaf[0] != leaf[2]);
  CHECK(tree.assignment(1)[0] != tree.assignment(1)[4]);
  // Members stay in time order.
  for (std::size_t h = 0; h <= 2; ++h)
    for (const auto& c : tree.level(h))
      CHECK(std::is_sorted(c.members.begin(), c.members.end()));
  CHECK(tree.level(2)[leaf[0]].centroid[0] == doctest::Approx(0.05));
}

TEST_CASE("periodic clusters bridge the wrap-around point") {
  const SnapshotStore store(4, 1, {359.0, 1.0, 180.0, 182.0},
                            std::vector<FeatureKind>(1, FeatureKind::circular_degrees));
  const Metric periodic{MetricKind::periodic_euclidean, 360.0};
  const auto tree = build_tree(store, periodic, 2, 30.0, 5.0);
  CHECK(tree.assignment(2)[0] == tree.assignment(2)[1]);
  const double c = tree.level(2)[tree.assignment(2)[0]].centroid[0];
  CHECK((c < 1e-9 || c > 360.0 - 1e-9));  // circular mean of 359 and 1
}

namespace {

// Oracle: nearest child centroid at each level from the root down to `last`.
std::size_t descent_path_end(const ClusterTree& tree, const SnapshotStore& store,
                             const Metric& metric, std::size_t s, std::size_t last) {
  std::size_t at = 0;
  for (std::size_t g = 1; g <= last; ++g) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto c : tree.level(g - 1)[at].children) {
      const double d = metric_distance(metric, tree.level(g)[c].centroid, store.row(s));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    at = best;
  }
  return at;
}

}  // namespace

TEST_CASE("random data yields a valid hierarchy") {
  const auto store = testing::uniform_store(3000, 3, 17, 10.0);
  for (const std::size_t depth : {0u, 1u, 3u, 5u}) {
    auto tree = build_tree(store, Metric{}, 7, 8.0, 0.8);
    refine_multipass(tree, store, Metric{}, depth);
    CHECK_NOTHROW(tree.validate());
    const auto stats = tree_stats(tree);
    REQUIRE(stats.size() == 8);
    CHECK(stats[0].clusters == 1);
    CHECK(stats[7].clusters > stats[1].clusters);
  }
  auto tree = build_tree(store, Metric{}, 7, 8.0, 0.8);
  CHECK_THROWS_AS(refine_multipass(tree, store, Metric{}, 6), Error);
}

TEST_CASE("leaf and refined levels follow the nearest-centroid descent") {
  const auto store = testing::uniform_store(2000, 2, 6, 10.0);
  const std::size_t levels = 6;
  auto tree = build_tree(store, Metric{}, levels, 6.0, 0.6);
  for (std::size_t s = 0; s < store.size(); ++s) {
    const auto& leaf = tree.level(levels)[tree.assignment(levels)[s]];
    CHECK(leaf.parent == descent_path_end(tree, store, Metric{}, s, levels - 1));
  }
  // Level H-1 is rebuilt against levels 0..H-2, which stay fixed.
  const auto before = tree;
  refine_multipass(tree, store, Metric{}, 1);
  CHECK_NOTHROW(tree.validate());
  for (std::size_t h = 0; h < levels - 1; ++h) {
    const auto a = before.assignment(h), b = tree.assignment(h);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  const auto leaf_before = before.assignment(levels), leaf_after = tree.assignment(levels);
  CHECK(std::equal(leaf_before.begin(), leaf_before.end(), leaf_after.begin()));
  std::size_t moved = 0;
  for (std::size_t s = 0; s < store.size(); ++s) {
    const auto& c = tree.level(levels - 1)[tree.assignment(levels - 1)[s]];
    CHECK(c.parent == descent_path_end(tree, store, Metric{}, s, levels - 2));
    moved += before.assignment(levels - 1)[s] != tree.assignment(levels - 1)[s];
  }
  CHECK(moved > 0);
  CHECK(tree.level(levels - 1).size() <= before.level(levels - 1).size());
}

TEST_CASE("refinement with zero depth leaves the tree unchanged") {
  const auto store = testing::uniform_store(500, 2, 4, 5.0);
  const auto tree = build_tree(store, Metric{}, 5, 4.0, 0.5);
  auto copy = tree;
  refine_multipass(copy, store, Metric{}, 0);
  for (std::size_t h = 0; h <= tree.height(); ++h) {
    const auto a = tree.assignment(h), b = copy.assignment(h);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST_CASE("violation fraction matches a direct recount") {
  // Oracle: a direct recount of members farther than d_H from their final
  // leaf centroid.
  const auto store = testing::uniform_store(800, 2, 8, 6.0);
  const auto tree = build_tree(store, Metric{}, 4, 5.0, 0.6);
  const std::size_t top = tree.height();
  std::size_t far = 0;
  for (std::size_t s = 0; s < store.size(); ++s) {
    const auto& own = tree.level(top)[tree.assignment(top)[s]];
    const double d = metric_distance(Metric{}, own.centroid, store.row(s));
    if (d > tree.threshold(top)) ++far;
  }
  // Centroids drift as members join, so a few snapshots may end up past the
  // threshold; most must not.
  CHECK(static_cast<double>(far) / store.size() < 0.1);
  CHECK(threshold_violation_fraction(tree, store, Metric{}, top) ==
        doctest::Approx(static_cast<double>(far) / store.size()));
  CHECK_THROWS_AS(threshold_violation_fraction(tree, store, Metric{}, 0), Error);
  CHECK_THROWS_AS(threshold_violation_fraction(tree, store, Metric{}, top + 1), Error);
}

TEST_CASE("tree csv round-trips") {
  testing::TempDir dir("tree");
  const auto store = testing::uniform_store(300, 2, 12, 4.0);
  const auto tree = build_tree(store, Metric{}, 4, 3.0, 0.5);
  write_tree_csv(tree, dir / "t.csv");
  const auto records = read_tree_csv(dir / "t.csv");
  std::size_t total = 0;
  for (std::size_t h = 0; h <= tree.height(); ++h) total += tree.level(h).size();
  REQUIRE(records.size() == total);
  std::size_t k = 0;
  for (std::size_t h = 0; h <= tree.height(); ++h)
    for (std::size_t c = 0; c < tree.level(h).size(); ++c, ++k) {
      const auto& cl = tree.level(h)[c];
      CHECK(records[k].level == h);
      CHECK(records[k].id == c);
      CHECK(records[k].members == cl.members.size());
      CHECK(records[k].parent == (h == 0 ? -1 : static_cast<long long>(cl.parent)));
      for (std::size_t f = 0; f < cl.centroid.size(); ++f)
        CHECK(records[k].centroid[f] == cl.centroid[f]);
    }
  {
    std::ofstream(dir / "bad.csv") << "level,id,parent,members,c0\n1,0,zz,3,0.5\n";
  }
  CHECK_THROWS_AS(read_tree_csv(dir / "bad.csv"), Error);
}

TEST_CASE("size ratios compare adjacent levels") {
  const auto store = testing::uniform_store(1000, 2, 21, 10.0);
  const auto tree = build_tree(store, Metric{}, 4, 6.0, 1.0);
  const auto stats = tree_stats(tree);
  CHECK(stats[0].size_ratio == 1.0);
  for (std::size_t h = 1; h < stats.size(); ++h) {
    CHECK(stats[h].mean_cluster_size ==
          doctest::Approx(1000.0 / static_cast<double>(stats[h].clusters)));
    CHECK(stats[h].size_ratio ==
          doctest::Approx(stats[h - 1].mean_cluster_size / stats[h].mean_cluster_size));
  }
}

TEST_CASE("a single snapshot gives singleton levels") {
  const SnapshotStore store(1, 2, {1.0, 2.0}, std::vector<FeatureKind>(2, FeatureKind::linear));
  auto tree = build_tree(store, Metric{}, 4, 3.0, 1.0);
  refine_multipass(tree, store, Metric{}, 2);
  for (const auto& s : tree_stats(tree)) {
    CHECK(s.clusters == 1);
    CHECK(s.size_ratio == 1.0);
  }
}

TEST_CASE("far apart wells separate at the first level") {
  auto spec = line_of_wells(3, 2, 100.0, 1.0, 0.01);
  const auto run = generate(spec, 3000, 3);
  const auto tree = build_tree(run.store, Metric{}, 5, 30.0, 2.0);
  REQUIRE(tree.level(1).size() == 3);
  for (const auto& c : tree.level(1)) {
    std::set<int> labels;
    for (const auto m : c.members) labels.insert(run.labels[m]);
    CHECK(labels.size() == 1);
  }
}
