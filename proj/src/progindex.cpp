// SPDX-License-Identifier: Apache-2.0

#include "sapphire/progindex.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>

#include "sapphire/error.hpp"
#include "text_util.hpp"

namespace sapphire {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct FrontierEntry {
  double weight;
  SnapshotId vertex;
  bool operator>(const FrontierEntry& o) const noexcept {
    return weight != o.weight ? weight > o.weight : vertex > o.vertex;
  }
};

using Frontier = std::priority_queue<FrontierEntry, std::vector<FrontierEntry>,
                                     std::greater<>>;

}  // namespace

std::vector<std::size_t> ProgressIndex::positions() const {
  std::vector<std::size_t> pos(order.size());
  for (std::size_t p = 0; p < order.size(); ++p) pos[order[p]] = p;
  return pos;
}

std::vector<std::size_t> leaf_peel_rounds(const SpanningTree& tree) {
  const std::size_t n = tree.n_vertices();
  std::vector<std::size_t> round(n, 0);
  std::vector<std::size_t> degree(n);
  std::vector<SnapshotId> current;
  for (std::size_t v = 0; v < n; ++v) {
    degree[v] = tree.degree(v);
    if (degree[v] == 1) current.push_back(static_cast<SnapshotId>(v));
  }
  std::vector<SnapshotId> next;
  for (std::size_t r = 1; !current.empty(); ++r) {
    for (const SnapshotId v : current) round[v] = r;
    next.clear();
    for (const SnapshotId v : current)
      for (const auto& nb : tree.neighbors(v)) {
        if (round[nb.vertex] != 0) continue;
        if (--degree[nb.vertex] == 1) next.push_back(nb.vertex);
      }
    current.swap(next);
  }
  return round;
}

std::vector<bool> leaf_classify(const SpanningTree& tree, std::size_t rho_f) {
  const auto rounds = leaf_peel_rounds(tree);
  std::vector<bool> leaf(rounds.size(), false);
  for (std::size_t v = 0; v < rounds.size(); ++v)
    leaf[v] = rounds[v] != 0 && rounds[v] <= rho_f;
  return leaf;
}

ProgressIndex build_progress_index(const SpanningTree& tree, std::size_t start,
                                   std::size_t rho_f) {
  const std::size_t n = tree.n_vertices();
  if (start >= n) fail(ErrorCode::out_of_range, "start snapshot out of range");

  ProgressIndex pi;
  pi.leaf_class = leaf_classify(tree, rho_f);
  pi.order.reserve(n);
  pi.added_weight.reserve(n);

  std::vector<char> added(n, 0);
  Frontier leaves;
  Frontier others;
  auto admit = [&](SnapshotId v, double w) {
    added[v] = 1;
    pi.order.push_back(v);
    pi.added_weight.push_back(w);
    for (const auto& nb : tree.neighbors(v)) {
      if (added[nb.vertex]) continue;
      (pi.leaf_class[nb.vertex] ? leaves : others).push({nb.weight, nb.vertex});
    }
  };

  admit(static_cast<SnapshotId>(start), kNaN);
  while (pi.order.size() < n) {
    Frontier& from = leaves.empty() ? others : leaves;
    const FrontierEntry e = from.top();
    from.pop();
    admit(e.vertex, e.weight);
  }
  return pi;
}

CutAnnotation cut_annotation(const ProgressIndex& pi) {
  const std::size_t n = pi.size();
  CutAnnotation cut;
  cut.n = n;
  if (n < 2) return cut;
  const auto pos = pi.positions();
  std::vector<std::int64_t> diff(n + 1, 0);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const auto [lo, hi] = std::minmax(pos[t], pos[t + 1]);
    ++diff[lo + 1];
    --diff[hi + 1];
  }
  cut.counts.resize(n - 1);
  std::int64_t running = 0;
  for (std::size_t i = 1; i < n; ++i) {
    running += diff[i];
    cut.counts[i - 1] = static_cast<std::uint64_t>(running);
  }
  return cut;
}

double mfpt_sum(std::uint64_t c, std::size_t n) noexcept {
  if (c == 0) return std::numeric_limits<double>::infinity();
  return 2.0 * static_cast<double>(n) / static_cast<double>(c);
}

std::vector<double> structural_track(const SnapshotStore& store,
                                     const ProgressIndex& pi,
                                     std::size_t feature) {
  if (feature >= store.dimension())
    fail(ErrorCode::out_of_range, "feature index out of range");
  if (pi.size() != store.size())
    fail(ErrorCode::invalid_argument, "progress index and dataset sizes differ");
  std::vector<double> track;
  track.reserve(pi.size());
  for (const SnapshotId s : pi.order) track.push_back(store.row(s)[feature]);
  return track;
}

ProgressTable make_progress_table(const ProgressIndex& pi, const CutAnnotation& cut,
                                  std::span<const Annotation> annotations) {
  const std::size_t n = pi.size();
  ProgressTable t;
  t.snapshot = pi.order;
  t.added_weight = pi.added_weight;
  t.cut.resize(n);
  t.mfpt.assign(n, kNaN);
  for (std::size_t p = 1; p < n; ++p) {
    t.cut[p] = cut.at(p);
    t.mfpt[p] = mfpt_sum(cut.at(p), n);
  }
  for (const auto& a : annotations) {
    if (a.by_snapshot.size() != n)
      fail(ErrorCode::invalid_argument, "annotation '" + a.name + "' has wrong length");
    t.annotation_names.push_back(a.name);
    auto& column = t.annotations.emplace_back();
    column.reserve(n);
    for (const SnapshotId s : pi.order) column.push_back(a.by_snapshot[s]);
  }
  return t;
}

void write_progress_csv(const ProgressTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << "position,snapshot_id,added_edge_weight,cut_count,mfpt_sum";
  for (const auto& name : table.annotation_names) out << ',' << name;
  out << '\n';
  std::string buf;
  for (std::size_t p = 0; p < table.size(); ++p) {
    buf = std::to_string(p) + ',' + std::to_string(table.snapshot[p]) + ',';
    if (!std::isnan(table.added_weight[p])) detail::append_double(buf, table.added_weight[p]);
    buf += ',';
    if (table.cut[p]) buf += std::to_string(*table.cut[p]);
    buf += ',';
    if (!std::isnan(table.mfpt[p])) detail::append_double(buf, table.mfpt[p]);
    for (const auto& column : table.annotations) {
      buf += ',';
      detail::append_double(buf, column[p]);
    }
    buf += '\n';
    out << buf;
  }
  if (!out) fail(ErrorCode::io, "write failed on " + path.string());
}

ProgressTable read_progress_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::parse, path.string() + ": empty file");
  const auto header = detail::split(detail::trim(line), ',');
  static constexpr std::string_view kFixed[] = {
      "position", "snapshot_id", "added_edge_weight", "cut_count", "mfpt_sum"};
  if (header.size() < 5)
    fail(ErrorCode::parse, path.string() + ": not a progress-index file");
  for (std::size_t i = 0; i < 5; ++i)
    if (detail::trim(header[i]) != kFixed[i])
      fail(ErrorCode::parse, path.string() + ": unexpected column '" +
                                 std::string(header[i]) + "'");
  ProgressTable t;
  for (std::size_t i = 5; i < header.size(); ++i)
    t.annotation_names.emplace_back(detail::trim(header[i]));
  t.annotations.resize(t.annotation_names.size());

  std::size_t line_no = 1;
  auto bad = [&](const char* what) {
    fail(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = detail::trim(line);
    if (view.empty()) continue;
    const auto cells = detail::split(view, ',');
    if (cells.size() != header.size()) bad("wrong column count");
    std::size_t position = 0;
    SnapshotId snap = 0;
    if (!detail::parse_int(cells[0], position) || position != t.size())
      bad("positions must run 0..N-1");
    if (!detail::parse_int(cells[1], snap)) bad("bad snapshot_id");
    double w = kNaN;
    if (!cells[2].empty() && !detail::parse_double(cells[2], w)) bad("bad added_edge_weight");
    std::optional<std::uint64_t> c;
    if (!cells[3].empty()) {
      std::uint64_t v = 0;
      if (!detail::parse_int(cells[3], v)) bad("bad cut_count");
      c = v;
    }
    double m = kNaN;
    if (cells[4] == "inf") {
      m = std::numeric_limits<double>::infinity();
    } else if (!cells[4].empty() && !detail::parse_double(cells[4], m)) {
      bad("bad mfpt_sum");
    }
    t.snapshot.push_back(snap);
    t.added_weight.push_back(w);
    t.cut.push_back(c);
    t.mfpt.push_back(m);
    for (std::size_t a = 0; a < t.annotations.size(); ++a) {
      double v = 0.0;
      if (!detail::parse_double(cells[5 + a], v)) bad("bad annotation value");
      t.annotations[a].push_back(v);
    }
  }
  if (t.size() == 0) fail(ErrorCode::parse, path.string() + ": no rows");
  return t;
}

}  // namespace sapphire
