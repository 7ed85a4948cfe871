// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "sapphire/sapphire.h"

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("sapphire_capi_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const char* name) const { return (path / name).string(); }
};

std::string get(const sph_config* c, const char* key) {
  std::size_t needed = 0;
  REQUIRE(sph_config_get(c, key, nullptr, 0, &needed) == SPH_OK);
  std::string buf(needed, '\0');
  REQUIRE(sph_config_get(c, key, buf.data(), buf.size(), &needed) == SPH_OK);
  buf.resize(needed - 1);
  return buf;
}

}  // namespace

TEST_CASE("status codes and errors") {
  CHECK(std::strlen(sph_version()) > 0);
  CHECK(std::string(sph_status_name(SPH_IO)) == "io");
  sph_config* c = nullptr;
  REQUIRE(sph_config_new(&c) == SPH_OK);
  CHECK(sph_config_set(c, "no_such_key", "1") == SPH_INVALID_ARGUMENT);
  CHECK(std::strlen(sph_last_error()) > 0);
  CHECK(sph_config_set(c, "levels", "x") == SPH_PARSE);
  CHECK(sph_config_set(nullptr, "levels", "3") == SPH_INVALID_ARGUMENT);
  CHECK(sph_config_validate(c) == SPH_INVALID_ARGUMENT);
  CHECK(sph_config_load(c, "/nonexistent/run.cfg") == SPH_IO);
  REQUIRE(sph_config_set(c, "levels", "5") == SPH_OK);
  CHECK(std::string(sph_last_error()).empty());
  CHECK(get(c, "levels") == "5");
  std::size_t needed = 0;
  char small[2];
  CHECK(sph_config_get(c, "output_dir", small, sizeof small, &needed) == SPH_OK);
  CHECK(needed > sizeof small);
  CHECK(sph_config_key_count() > 10);
  CHECK(sph_config_key(sph_config_key_count()) == nullptr);
  sph_config_free(c);
  sph_config_free(nullptr);
}

TEST_CASE("store, distances and clustering") {
  const std::vector<double> values{0.0, 0.0, 3.0, 4.0, 0.0, 1.0, 50.0, 50.0};
  sph_store* s = nullptr;
  REQUIRE(sph_store_create(4, 2, values.data(), "linear:2", 360.0, &s) == SPH_OK);
  std::size_t n = 0, d = 0;
  REQUIRE(sph_store_shape(s, &n, &d) == SPH_OK);
  CHECK(n == 4);
  CHECK(d == 2);
  const double* row = nullptr;
  REQUIRE(sph_store_row(s, 1, &row) == SPH_OK);
  CHECK(row[1] == 4.0);
  CHECK(sph_store_row(s, 4, &row) == SPH_OUT_OF_RANGE);

  sph_config* c = nullptr;
  REQUIRE(sph_config_new(&c) == SPH_OK);
  double dist = 0.0;
  REQUIRE(sph_distance(s, c, 0, 1, &dist) == SPH_OK);
  CHECK(dist == doctest::Approx(5.0));
  sph_config_set(c, "metric", "rmsd");
  CHECK(sph_distance(s, c, 0, 1, &dist) == SPH_METRIC_MISMATCH);
  sph_config_set(c, "metric", "euclidean");

  double ladder[3];
  REQUIRE(sph_threshold_ladder(3, 9.0, 1.0, ladder) == SPH_OK);
  CHECK(ladder[1] == doctest::Approx(5.0));
  CHECK(sph_threshold_ladder(3, 1.0, 9.0, ladder) == SPH_INVALID_ARGUMENT);

  sph_config_set(c, "levels", "2");
  sph_config_set(c, "d_coarse", "20");
  sph_config_set(c, "d_fine", "2");
  sph_cluster_tree* t = nullptr;
  REQUIRE(sph_cluster_build(s, c, &t) == SPH_OK);
  std::size_t h = 0, count = 0;
  REQUIRE(sph_cluster_height(t, &h) == SPH_OK);
  CHECK(h == 2);
  REQUIRE(sph_cluster_count(t, 1, &count) == SPH_OK);
  CHECK(count == 2);
  double thr = 0.0;
  REQUIRE(sph_cluster_threshold(t, 2, &thr) == SPH_OK);
  CHECK(thr == 2.0);
  double frac = -1.0;
  REQUIRE(sph_cluster_violation_fraction(t, s, c, 2, &frac) == SPH_OK);
  CHECK(frac >= 0.0);
  CHECK(sph_cluster_count(t, 3, &count) == SPH_OUT_OF_RANGE);
  sph_cluster_free(t);
  sph_config_free(c);
  sph_store_free(s);
}

TEST_CASE("synthetic data through the whole chain") {
  TempDir dir;
  sph_synth_params p;
  sph_synth_params_default(&p);
  p.n = 3000;
  p.outlier_rate = 0.01;
  sph_synth* syn = nullptr;
  REQUIRE(sph_synth_generate(&p, &syn) == SPH_OK);
  const int* labels = nullptr;
  std::size_t n = 0, outliers = 0;
  REQUIRE(sph_synth_labels(syn, &labels, &n) == SPH_OK);
  CHECK(n == 3000);
  CHECK(labels[0] == 0);
  REQUIRE(sph_synth_outlier_count(syn, &outliers) == SPH_OK);
  CHECK(outliers > 0);
  sph_store* s = nullptr;
  REQUIRE(sph_synth_store(syn, &s) == SPH_OK);
  REQUIRE(sph_store_save(s, (dir / "d.bin").c_str(), "raw_binary") == SPH_OK);
  REQUIRE(sph_synth_write_labels(syn, (dir / "l.csv").c_str()) == SPH_OK);

  sph_config* c = nullptr;
  REQUIRE(sph_config_new(&c) == SPH_OK);
  sph_config_set(c, "levels", "5");
  sph_cluster_tree* clusters = nullptr;
  REQUIRE(sph_cluster_build(s, c, &clusters) == SPH_OK);
  sph_spanning_tree* sst = nullptr;
  sph_sst_stats stats{};
  REQUIRE(sph_sst_build(s, clusters, c, &sst, &stats) == SPH_OK);
  CHECK(stats.stages >= 1);
  CHECK(stats.stale_cache_entries == 0);
  sph_spanning_tree* mst = nullptr;
  REQUIRE(sph_mst_build(s, c, &mst) == SPH_OK);
  sph_tree_comparison cmp{};
  REQUIRE(sph_spanning_tree_compare(sst, mst, &cmp) == SPH_OK);
  CHECK(cmp.length_a >= cmp.length_b - 1e-9);
  std::uint32_t u = 0, v = 0;
  double w = 0.0;
  REQUIRE(sph_spanning_tree_edge(mst, 0, &u, &v, &w) == SPH_OK);
  CHECK(u < v);
  CHECK(sph_spanning_tree_edge(mst, 2999, &u, &v, &w) == SPH_OUT_OF_RANGE);
  REQUIRE(sph_spanning_tree_write(sst, (dir / "t.csv").c_str()) == SPH_OK);
  sph_spanning_tree* back = nullptr;
  REQUIRE(sph_spanning_tree_read((dir / "t.csv").c_str(), 0, &back) == SPH_OK);
  double la = 0.0, lb = 0.0;
  sph_spanning_tree_length(sst, &la);
  sph_spanning_tree_length(back, &lb);
  CHECK(la == lb);

  sph_config_set(c, "labels", (dir / "l.csv").c_str());
  sph_config_set(c, "annotate", "0");
  sph_progress* pi = nullptr;
  REQUIRE(sph_progress_build(sst, s, c, &pi) == SPH_OK);
  std::size_t rows = 0;
  REQUIRE(sph_progress_size(pi, &rows) == SPH_OK);
  CHECK(rows == 3000);
  std::uint32_t snap = 1;
  double added = 0.0, mfpt = 0.0;
  int has_cut = 1;
  std::uint64_t cut = 7;
  REQUIRE(sph_progress_row(pi, 0, &snap, &added, &has_cut, &cut, &mfpt) == SPH_OK);
  CHECK(snap == 0);
  CHECK(has_cut == 0);
  REQUIRE(sph_progress_row(pi, 1, &snap, &added, &has_cut, &cut, &mfpt) == SPH_OK);
  CHECK(has_cut == 1);
  CHECK(mfpt == doctest::Approx(6000.0 / static_cast<double>(cut)));
  REQUIRE(sph_progress_write(pi, (dir / "p.csv").c_str()) == SPH_OK);
  REQUIRE(sph_progress_plot_svg(pi, (dir / "p.svg").c_str()) == SPH_OK);
  sph_progress* reread = nullptr;
  REQUIRE(sph_progress_read((dir / "p.csv").c_str(), &reread) == SPH_OK);
  sph_progress_free(reread);

  // Annotations without the store cannot be built.
  sph_progress* fail = nullptr;
  CHECK(sph_progress_build(sst, nullptr, c, &fail) == SPH_INVALID_ARGUMENT);
  CHECK(fail == nullptr);

  sph_progress_free(pi);
  sph_spanning_tree_free(back);
  sph_spanning_tree_free(mst);
  sph_spanning_tree_free(sst);
  sph_cluster_free(clusters);
  sph_config_free(c);
  sph_store_free(s);
  sph_synth_free(syn);
}

TEST_CASE("pipeline and bench through the C interface") {
  TempDir dir;
  sph_synth_params p;
  sph_synth_params_default(&p);
  p.n = 2000;
  sph_synth* syn = nullptr;
  REQUIRE(sph_synth_generate(&p, &syn) == SPH_OK);
  sph_store* s = nullptr;
  REQUIRE(sph_synth_store(syn, &s) == SPH_OK);
  REQUIRE(sph_store_save(s, (dir / "d.csv").c_str(), "csv") == SPH_OK);

  {
    std::ofstream(dir / "run.cfg") << "input = " << (dir / "d.csv") << "\nfeatures = linear:2\n"
                                   << "levels = 5\noutput_dir = " << (dir / "out") << "\n";
  }
  sph_config* c = nullptr;
  REQUIRE(sph_config_new(&c) == SPH_OK);
  REQUIRE(sph_config_load(c, (dir / "run.cfg").c_str()) == SPH_OK);
  REQUIRE(sph_config_validate(c) == SPH_OK);
  sph_summary summary{};
  REQUIRE(sph_pipeline_run(c, &summary) == SPH_OK);
  CHECK(summary.n_snapshots == 2000);
  CHECK(summary.n_features == 2);
  CHECK(summary.has_peak_rss == 1);
  CHECK(std::filesystem::exists(dir.path / "out" / "summary.json"));

  const std::size_t threads[] = {1, 2};
  sph_bench_row rows[2];
  REQUIRE(sph_bench(c, threads, 2, 2, (dir / "b.csv").c_str(), rows) == SPH_OK);
  CHECK(rows[0].efficiency == doctest::Approx(1.0));
  CHECK(rows[1].evaluations_reproducible == 1);
  CHECK(std::filesystem::exists(dir.path / "b.csv"));
  CHECK(sph_bench(c, threads, 2, 1, nullptr, rows) == SPH_INVALID_ARGUMENT);

  sph_config_set(c, "input", (dir / "missing.csv").c_str());
  sph_config_set(c, "output_dir", (dir / "out2").c_str());
  CHECK(sph_pipeline_run(c, nullptr) == SPH_IO);
  CHECK_FALSE(std::filesystem::exists(dir.path / "out2"));

  sph_config_free(c);
  sph_store_free(s);
  sph_synth_free(syn);
}
