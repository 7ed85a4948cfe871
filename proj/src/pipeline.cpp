// SPDX-License-Identifier: Apache-2.0

#include "sapphire/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <tuple>

#include "sapphire/error.hpp"
#include "sapphire/synthgen.hpp"
#include "text_util.hpp"

namespace sapphire {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr std::string_view kKeys[] = {
    "input",      "format",   "features",      "rows",         "metric",
    "period",     "levels",   "d_coarse",      "d_fine",       "refine_depth",
    "mode",       "n_guesses", "sigma_max",    "schedule_span", "seed",
    "threads",    "shared_rng", "stage_cap",   "start",        "rho_f",
    "annotate",   "labels",   "output_dir",
};

template <class Int>
Int to_int(std::string_view key, std::string_view value) {
  Int out{};
  if (!detail::parse_int(value, out))
    fail(ErrorCode::parse, "config key '" + std::string(key) +
                               "' expects a non-negative integer, got '" +
                               std::string(value) + "'");
  return out;
}

double to_real(std::string_view key, std::string_view value) {
  double out = 0.0;
  if (!detail::parse_double(value, out) || !std::isfinite(out))
    fail(ErrorCode::parse, "config key '" + std::string(key) +
                               "' expects a number, got '" + std::string(value) + "'");
  return out;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  fail(ErrorCode::parse, "config key '" + std::string(key) + "' expects a boolean");
}

}  // namespace

std::span<const std::string_view> RunConfig::keys() { return kKeys; }

void RunConfig::set(std::string_view key, std::string_view raw) {
  key = detail::trim(key);
  const std::string_view value = detail::trim(raw);
  if (key == "input") {
    input = std::string(value);
  } else if (key == "format") {
    if (value == "csv")
      format = DataFormat::csv;
    else if (value == "raw" || value == "raw_binary")
      format = DataFormat::raw_binary;
    else
      fail(ErrorCode::parse, "format must be csv or raw_binary");
  } else if (key == "features") {
    parse_feature_spec(value);  // validate early
    features = std::string(value);
  } else if (key == "rows") {
    rows = to_int<std::size_t>(key, value);
  } else if (key == "metric") {
    metric.kind = parse_metric_kind(value);
  } else if (key == "period") {
    metric.period = to_real(key, value);
  } else if (key == "levels") {
    levels = to_int<std::size_t>(key, value);
  } else if (key == "d_coarse") {
    d_coarse = to_real(key, value);
  } else if (key == "d_fine") {
    d_fine = to_real(key, value);
  } else if (key == "refine_depth" || key == "eta_max") {
    refine_depth = to_int<std::size_t>(key, value);
  } else if (key == "mode") {
    if (value == "sst")
      mode = TreeMode::sst;
    else if (value == "mst")
      mode = TreeMode::mst;
    else
      fail(ErrorCode::parse, "mode must be sst or mst");
  } else if (key == "n_guesses") {
    sst.n_guesses = to_int<std::size_t>(key, value);
  } else if (key == "sigma_max") {
    sst.sigma_max = to_int<std::size_t>(key, value);
  } else if (key == "schedule_span") {
    sst.schedule_span = to_int<std::size_t>(key, value);
  } else if (key == "seed") {
    sst.seed = to_int<std::uint64_t>(key, value);
  } else if (key == "threads") {
    sst.threads = to_int<std::size_t>(key, value);
  } else if (key == "shared_rng") {
    sst.shared_rng = to_bool(key, value);
  } else if (key == "stage_cap") {
    sst.stage_cap = to_int<std::size_t>(key, value);
  } else if (key == "start") {
    start = to_int<std::size_t>(key, value);
  } else if (key == "rho_f") {
    rho_f = to_int<std::size_t>(key, value);
  } else if (key == "annotate") {
    annotate.clear();
    if (value.empty() || value == "none") return;
    for (auto token : detail::split(value, ','))
      annotate.push_back(to_int<std::size_t>(key, detail::trim(token)));
  } else if (key == "labels") {
    labels = std::string(value);
  } else if (key == "output_dir") {
    output_dir = std::string(value);
  } else {
    fail(ErrorCode::invalid_argument, "unknown config key '" + std::string(key) + "'");
  }
}

std::string RunConfig::get(std::string_view key) const {
  auto real = [](double v) {
    std::string out;
    detail::append_double(out, v);
    return out;
  };
  key = detail::trim(key);
  if (key == "input") return input.string();
  if (key == "format") return format == DataFormat::csv ? "csv" : "raw_binary";
  if (key == "features") return features;
  if (key == "rows") return std::to_string(rows);
  if (key == "metric") return std::string(metric_kind_name(metric.kind));
  if (key == "period") return real(metric.period);
  if (key == "levels") return std::to_string(levels);
  if (key == "d_coarse") return real(d_coarse);
  if (key == "d_fine") return real(d_fine);
  if (key == "refine_depth" || key == "eta_max") return std::to_string(refine_depth);
  if (key == "mode") return mode == TreeMode::sst ? "sst" : "mst";
  if (key == "n_guesses") return std::to_string(sst.n_guesses);
  if (key == "sigma_max") return std::to_string(sst.sigma_max);
  if (key == "schedule_span") return std::to_string(sst.schedule_span);
  if (key == "seed") return std::to_string(sst.seed);
  if (key == "threads") return std::to_string(sst.threads);
  if (key == "shared_rng") return sst.shared_rng ? "true" : "false";
  if (key == "stage_cap") return std::to_string(sst.stage_cap);
  if (key == "start") return std::to_string(start);
  if (key == "rho_f") return std::to_string(rho_f);
  if (key == "annotate") {
    std::string out;
    for (const auto f : annotate) out += (out.empty() ? "" : ",") + std::to_string(f);
    return out;
  }
  if (key == "labels") return labels.string();
  if (key == "output_dir") return output_dir.string();
  fail(ErrorCode::invalid_argument, "unknown config key '" + std::string(key) + "'");
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos)
      view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) +
                                 ": expected key = value");
    set(view.substr(0, eq), view.substr(eq + 1));
  }
}

void RunConfig::validate() const {
  if (input.empty()) fail(ErrorCode::invalid_argument, "no input file configured");
  const auto kinds = parse_feature_spec(features);
  // A one-row store is enough to check metric compatibility up front.
  check_compatible(SnapshotStore(1, kinds.size(), std::vector<double>(kinds.size(), 0.0),
                                 kinds, metric.period),
                   metric);
  if (levels < 2) fail(ErrorCode::invalid_argument, "levels must be >= 2");
  if (d_coarse != 0.0 || d_fine != 0.0) threshold_ladder(levels, d_coarse, d_fine);
  if (refine_depth > levels - 2)
    fail(ErrorCode::invalid_argument, "refine_depth must lie in [0, levels-2]");
  if (sst.n_guesses < 1) fail(ErrorCode::invalid_argument, "n_guesses must be >= 1");
  if (sst.schedule_span < 1) fail(ErrorCode::invalid_argument, "schedule_span must be >= 1");
  if (sst.threads < 1) fail(ErrorCode::invalid_argument, "threads must be >= 1");
  if (sst.stage_cap < 1) fail(ErrorCode::invalid_argument, "stage_cap must be >= 1");
}

std::pair<double, double> default_thresholds(const SnapshotStore& store,
                                             const Metric& metric) {
  const std::size_t n = store.size();
  double largest = 0.0;
  constexpr std::size_t kSamples = 2000;
  auto consider = [&](std::size_t i, std::size_t j) {
    largest = std::max(largest, metric_distance(metric, store.row(i), store.row(j)));
  };
  if (n * (n - 1) / 2 <= kSamples) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) consider(i, j);
  } else {
    CounterRng rng(0x5a17, 0, n);
    for (std::size_t k = 0; k < kSamples; ++k) {
      const std::size_t i = rng.below(n);
      const std::size_t j = (i + 1 + rng.below(n - 1)) % n;
      consider(i, j);
    }
  }
  if (!(largest > 0.0)) largest = 1.0;
  return {0.5 * largest, 0.025 * largest};
}

ClusterTree build_clusters(const SnapshotStore& store, const RunConfig& config) {
  auto [d_coarse, d_fine] = std::pair{config.d_coarse, config.d_fine};
  if (d_coarse <= 0.0) std::tie(d_coarse, d_fine) = default_thresholds(store, config.metric);
  ClusterTree tree = build_tree(store, config.metric, config.levels, d_coarse, d_fine);
  refine_multipass(tree, store, config.metric, config.refine_depth);
  return tree;
}

std::vector<Annotation> config_annotations(const SnapshotStore* store,
                                           const RunConfig& config, std::size_t n) {
  std::vector<Annotation> annotations;
  if (store && store->size() != n)
    fail(ErrorCode::invalid_argument, "dataset has " + std::to_string(store->size()) +
                                          " rows for a tree over " + std::to_string(n));
  for (const auto f : config.annotate) {
    if (!store) fail(ErrorCode::invalid_argument, "feature annotations need the dataset");
    if (f >= store->dimension())
      fail(ErrorCode::out_of_range, "annotation feature " + std::to_string(f) +
                                        " out of range (D = " +
                                        std::to_string(store->dimension()) + ")");
    Annotation a{"f" + std::to_string(f), {}};
    a.by_snapshot.reserve(n);
    for (std::size_t s = 0; s < n; ++s) a.by_snapshot.push_back(store->row(s)[f]);
    annotations.push_back(std::move(a));
  }
  if (!config.labels.empty()) {
    const auto table = read_labels_csv(config.labels);
    if (table.labels.size() != n)
      fail(ErrorCode::invalid_argument, "labels file has " +
                                            std::to_string(table.labels.size()) +
                                            " rows for N = " + std::to_string(n));
    annotations.push_back({"label", std::vector<double>(table.labels.begin(),
                                                         table.labels.end())});
  }
  return annotations;
}

PipelineSummary run_pipeline(const RunConfig& config) {
  const auto t0 = Clock::now();
  config.validate();
  const auto kinds = parse_feature_spec(config.features);
  const SnapshotStore store =
      load_dataset(config.input, config.format, kinds, config.metric.period, config.rows);
  if (config.start >= store.size())
    fail(ErrorCode::out_of_range, "start snapshot " + std::to_string(config.start) +
                                      " out of range (N = " +
                                      std::to_string(store.size()) + ")");
  if (store.size() < 2) fail(ErrorCode::invalid_argument, "pipeline needs N >= 2");
  const auto annotations = config_annotations(&store, config, store.size());

  PipelineSummary summary;
  summary.n_snapshots = store.size();
  summary.n_features = store.dimension();

  auto t = Clock::now();
  const ClusterTree tree = build_clusters(store, config);
  summary.d_coarse = tree.threshold(1);
  summary.d_fine = tree.threshold(tree.height());
  summary.seconds_clustering = seconds_since(t);
  summary.levels = tree_stats(tree);

  t = Clock::now();
  SpanningTree span;
  if (config.mode == TreeMode::mst) {
    span = exact_mst(store, config.metric);
    summary.distance_evaluations =
        static_cast<std::uint64_t>(store.size()) * (store.size() - 1) / 2;
  } else {
    auto result = build_sst(store, config.metric, tree, config.sst);
    summary.stages = result.stats.stages;
    summary.distance_evaluations = result.stats.distance_evaluations;
    span = std::move(result.tree);
  }
  summary.seconds_spanning_tree = seconds_since(t);
  summary.tree_length = span.total_length();

  const ProgressIndex pi = build_progress_index(span, config.start, config.rho_f);
  const CutAnnotation cut = cut_annotation(pi);
  const ProgressTable table = make_progress_table(pi, cut, annotations);

  std::filesystem::create_directories(config.output_dir);
  write_tree_csv(tree, config.output_dir / "clusters.csv");
  write_spanning_tree_csv(span, config.output_dir / "spanning_tree.csv");
  write_progress_csv(table, config.output_dir / "progress.csv");
  emit_sapphire_svg(table, config.output_dir / "sapphire.svg");
  summary.seconds_total = seconds_since(t0);
  summary.peak_rss_bytes = peak_rss_bytes();
  write_summary_json(summary, config.output_dir / "summary.json");
  return summary;
}

void write_summary_json(const PipelineSummary& s, const std::filesystem::path& path) {
  nlohmann::json j;
  j["n_snapshots"] = s.n_snapshots;
  j["n_features"] = s.n_features;
  j["stages"] = s.stages;
  j["distance_evaluations"] = s.distance_evaluations;
  j["tree_length"] = s.tree_length;
  j["seconds_total"] = s.seconds_total;
  j["seconds_clustering"] = s.seconds_clustering;
  j["seconds_spanning_tree"] = s.seconds_spanning_tree;
  j["d_coarse"] = s.d_coarse;
  j["d_fine"] = s.d_fine;
  if (s.peak_rss_bytes) j["peak_rss_bytes"] = *s.peak_rss_bytes;
  auto& levels = j["levels"] = nlohmann::json::array();
  for (const auto& l : s.levels)
    levels.push_back({{"level", l.level},
                      {"clusters", l.clusters},
                      {"max_cluster_size", l.max_cluster_size},
                      {"size_ratio", l.size_ratio}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<BenchRow> bench(const SnapshotStore& store, const RunConfig& config,
                            std::span<const std::size_t> threads, std::size_t repeats) {
  if (threads.empty()) fail(ErrorCode::invalid_argument, "no thread counts given");
  if (repeats < 2) fail(ErrorCode::invalid_argument, "bench needs at least 2 repeats");
  for (const auto t : threads)
    if (t < 1) fail(ErrorCode::invalid_argument, "thread counts must be >= 1");
  const ClusterTree tree = build_clusters(store, config);

  std::vector<BenchRow> rows;
  for (const std::size_t t : threads) {
    BenchRow row;
    row.threads = t;
    row.repeats = repeats;
    row.seconds_min = std::numeric_limits<double>::infinity();
    SstParams params = config.sst;
    params.threads = t;
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto t0 = Clock::now();
      const auto result = build_sst(store, config.metric, tree, params);
      const double secs = seconds_since(t0);
      row.seconds_min = std::min(row.seconds_min, secs);
      row.seconds_max = std::max(row.seconds_max, secs);
      if (r == 0) {
        row.distance_evaluations = result.stats.distance_evaluations;
        row.stages = result.stats.stages;
      } else if (row.distance_evaluations != result.stats.distance_evaluations) {
        row.evaluations_reproducible = false;
      }
    }
    row.seconds_per_evaluation =
        row.seconds_min / static_cast<double>(std::max<std::uint64_t>(1, row.distance_evaluations));
    rows.push_back(row);
  }
  const auto ref = std::min_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.threads < b.threads;
  });
  for (auto& row : rows)
    row.efficiency = (ref->seconds_per_evaluation * static_cast<double>(ref->threads)) /
                     (row.seconds_per_evaluation * static_cast<double>(row.threads));
  return rows;
}

std::vector<BenchRow> bench(const RunConfig& config, std::span<const std::size_t> threads,
                            std::size_t repeats) {
  config.validate();
  const SnapshotStore store = load_dataset(config.input, config.format,
                                           parse_feature_spec(config.features),
                                           config.metric.period, config.rows);
  if (store.size() < 2) fail(ErrorCode::invalid_argument, "bench needs N >= 2");
  return bench(store, config, threads, repeats);
}

void write_bench_csv(std::span<const BenchRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << "threads,repeats,seconds_min,seconds_max,distance_evaluations,"
         "evaluations_reproducible,stages,seconds_per_evaluation,efficiency\n";
  for (const auto& r : rows) {
    std::string buf = std::to_string(r.threads) + ',' + std::to_string(r.repeats) + ',';
    detail::append_double(buf, r.seconds_min);
    buf += ',';
    detail::append_double(buf, r.seconds_max);
    buf += ',' + std::to_string(r.distance_evaluations) + ',' +
           (r.evaluations_reproducible ? "1" : "0") + ',' + std::to_string(r.stages) + ',';
    detail::append_double(buf, r.seconds_per_evaluation);
    buf += ',';
    detail::append_double(buf, r.efficiency);
    out << buf << '\n';
  }
  if (!out) fail(ErrorCode::io, "write failed on " + path.string());
}

std::optional<std::size_t> peak_rss_bytes() {
  std::ifstream in("/proc/self/status");
  if (!in) return std::nullopt;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) != 0) continue;
    std::size_t kb = 0;
    const auto digits = detail::trim(std::string_view(line).substr(6));
    const auto end = digits.find(' ');
    if (!detail::parse_int(digits.substr(0, end), kb)) return std::nullopt;
    return kb * 1024;
  }
  return std::nullopt;
}

}  // namespace sapphire
