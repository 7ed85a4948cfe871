// SPDX-License-Identifier: Apache-2.0

#include "sapphire/synthgen.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "sapphire/error.hpp"
#include "text_util.hpp"

namespace sapphire {

void WellSpec::validate() const {
  const std::size_t m = means.size();
  if (m == 0) fail(ErrorCode::invalid_argument, "need at least one state");
  const std::size_t d = means.front().size();
  if (d == 0) fail(ErrorCode::invalid_argument, "well means must be non-empty");
  for (const auto& mu : means)
    if (mu.size() != d) fail(ErrorCode::invalid_argument, "well means differ in length");
  if (!(width > 0.0)) fail(ErrorCode::invalid_argument, "well width must be > 0");
  if (transitions.size() != m)
    fail(ErrorCode::invalid_argument, "transition matrix must be m x m");
  for (const auto& row : transitions) {
    if (row.size() != m) fail(ErrorCode::invalid_argument, "transition matrix must be m x m");
    double sum = 0.0;
    for (const double p : row) {
      if (!(p >= 0.0)) fail(ErrorCode::invalid_argument, "negative transition probability");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-12)
      fail(ErrorCode::invalid_argument, "transition rows must sum to 1");
  }
  if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0))
    fail(ErrorCode::invalid_argument, "outlier rate must lie in [0, 1]");
  if (!(outlier_scale > 0.0)) fail(ErrorCode::invalid_argument, "outlier scale must be > 0");
  if (!(memory >= 0.0 && memory < 1.0))
    fail(ErrorCode::invalid_argument, "memory must lie in [0, 1)");
  if (kind == FeatureKind::coord3d)
    fail(ErrorCode::invalid_argument, "wells generate linear or circular features only");
}

WellSpec line_of_wells(std::size_t states, std::size_t dim, double separation,
                       double width, double hop) {
  if (states == 0 || dim == 0)
    fail(ErrorCode::invalid_argument, "states and dim must be >= 1");
  WellSpec spec;
  spec.width = width;
  spec.means.assign(states, std::vector<double>(dim, 0.0));
  for (std::size_t k = 0; k < states; ++k)
    spec.means[k][0] = static_cast<double>(k) * separation;
  spec.transitions.assign(states, std::vector<double>(states, 0.0));
  for (std::size_t a = 0; a < states; ++a)
    for (std::size_t b = 0; b < states; ++b) {
      if (states == 1)
        spec.transitions[a][b] = 1.0;
      else
        spec.transitions[a][b] =
            a == b ? 1.0 - hop : hop / static_cast<double>(states - 1);
    }
  return spec;
}

SyntheticRun generate(const WellSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) fail(ErrorCode::invalid_argument, "N must be >= 1");
  const std::size_t m = spec.states();
  const std::size_t d = spec.means.front().size();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, spec.width);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> values(n * d);
  std::vector<int> labels(n);
  std::vector<SnapshotId> outliers;
  std::vector<std::vector<std::uint64_t>> counts(m, std::vector<std::uint64_t>(m, 0));
  std::vector<double> dev(d, 0.0);
  std::vector<double> emitted(d);
  const double innovation = std::sqrt(1.0 - spec.memory * spec.memory);

  std::size_t state = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) {
      const double u = unit(rng);
      const auto& row = spec.transitions[state];
      std::size_t next = m - 1;
      double acc = 0.0;
      for (std::size_t b = 0; b < m; ++b) {
        acc += row[b];
        if (u < acc) {
          next = b;
          break;
        }
      }
      ++counts[state][next];
      state = next;
    }
    labels[t] = static_cast<int>(state);
    // The first snapshot starts from the stationary spread.
    const double keep = t == 0 ? 0.0 : spec.memory;
    const double fresh = t == 0 ? 1.0 : innovation;
    for (auto& x : dev) x = keep * x + fresh * gauss(rng);
    emitted = dev;
    if (unit(rng) < spec.outlier_rate) {
      for (auto& x : emitted) x *= spec.outlier_scale;
      outliers.push_back(static_cast<SnapshotId>(t));
    }
    for (std::size_t f = 0; f < d; ++f) values[t * d + f] = spec.means[state][f] + emitted[f];
  }
  SnapshotStore store(n, d, std::move(values), std::vector<FeatureKind>(d, spec.kind),
                      spec.period);
  return SyntheticRun{std::move(store), std::move(labels), std::move(counts),
                      std::move(outliers)};
}

MarkovCut markov_oracle(std::span<const int> labels, std::span<const bool> group_a) {
  MarkovCut out;
  auto in_a = [&](int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= group_a.size())
      fail(ErrorCode::out_of_range, "label outside the state partition");
    return group_a[static_cast<std::size_t>(label)];
  };
  for (std::size_t t = 0; t + 1 < labels.size(); ++t)
    if (in_a(labels[t]) != in_a(labels[t + 1])) ++out.count;
  out.mfpt_sum = out.count == 0
                     ? std::numeric_limits<double>::infinity()
                     : 2.0 * static_cast<double>(labels.size()) / static_cast<double>(out.count);
  return out;
}

void write_labels_csv(const SyntheticRun& run, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << "snapshot,label,outlier\n";
  std::size_t next_outlier = 0;
  for (std::size_t t = 0; t < run.labels.size(); ++t) {
    const bool is_outlier =
        next_outlier < run.outliers.size() && run.outliers[next_outlier] == t;
    if (is_outlier) ++next_outlier;
    out << t << ',' << run.labels[t] << ',' << (is_outlier ? 1 : 0) << '\n';
  }
  if (!out) fail(ErrorCode::io, "write failed on " + path.string());
}

LabelTable read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "snapshot,label,outlier")
    fail(ErrorCode::parse, path.string() + ": expected header snapshot,label,outlier");
  LabelTable table;
  while (std::getline(in, line)) {
    const auto view = detail::trim(line);
    if (view.empty()) continue;
    const auto cells = detail::split(view, ',');
    std::size_t snap = 0;
    int label = 0;
    int outlier = 0;
    if (cells.size() != 3 || !detail::parse_int(cells[0], snap) ||
        snap != table.labels.size() || !detail::parse_int(cells[1], label) ||
        !detail::parse_int(cells[2], outlier))
      fail(ErrorCode::parse, path.string() + ": malformed label row");
    table.labels.push_back(label);
    table.outlier.push_back(outlier != 0);
  }
  return table;
}

}  // namespace sapphire
