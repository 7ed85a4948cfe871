// SPDX-License-Identifier: Apache-2.0

#include "sapphire/dataset.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sapphire/error.hpp"
#include "text_util.hpp"

namespace sapphire {

namespace {

FeatureKind parse_kind_name(std::string_view name) {
  if (name == "linear") return FeatureKind::linear;
  if (name == "circular" || name == "circular_degrees")
    return FeatureKind::circular_degrees;
  if (name == "coord3d") return FeatureKind::coord3d;
  fail(ErrorCode::parse, "unknown feature kind '" + std::string(name) + "'");
}

std::string_view kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::linear: return "linear";
    case FeatureKind::circular_degrees: return "circular";
    case FeatureKind::coord3d: return "coord3d";
  }
  return "?";
}

FeatureKind required_kind(MetricKind kind) {
  switch (kind) {
    case MetricKind::euclidean: return FeatureKind::linear;
    case MetricKind::periodic_euclidean: return FeatureKind::circular_degrees;
    case MetricKind::aligned_rmsd: return FeatureKind::coord3d;
  }
  return FeatureKind::linear;
}

using Points = Eigen::Matrix<double, 3, Eigen::Dynamic>;

// Centers a flat xyz array in place of a 3 x n matrix.
Points centered(std::span<const double> flat) {
  const auto n = static_cast<Eigen::Index>(flat.size() / 3);
  Points pts = Eigen::Map<const Points>(flat.data(), 3, n);
  const Eigen::Vector3d mean = pts.rowwise().mean();
  pts.colwise() -= mean;
  return pts;
}

Eigen::Matrix3d kabsch_rotation(const Points& p, const Points& q) {
  const Eigen::Matrix3d cov = p * q.transpose();
  if (cov.cwiseAbs().maxCoeff() == 0.0) return Eigen::Matrix3d::Identity();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
  if ((v * u.transpose()).determinant() < 0.0) fix(2, 2) = -1.0;
  return v * fix * u.transpose();
}

double aligned_rmsd(std::span<const double> a, std::span<const double> b) {
  const Points p = centered(a);
  const Points q = centered(b);
  const Eigen::Matrix3d rot = kabsch_rotation(p, q);
  const double sq = (rot * p - q).squaredNorm();
  return std::sqrt(sq / static_cast<double>(p.cols()));
}

}  // namespace

double wrap_periodic(double value, double period) noexcept {
  double w = std::fmod(value, period);
  if (w < 0.0) w += period;
  if (w >= period) w = 0.0;
  return w;
}

std::vector<FeatureKind> parse_feature_spec(std::string_view spec) {
  std::vector<FeatureKind> kinds;
  for (auto token : detail::split(spec, ',')) {
    token = detail::trim(token);
    if (token.empty()) continue;
    std::size_t count = 1;
    if (const auto colon = token.find(':'); colon != std::string_view::npos) {
      const auto digits = detail::trim(token.substr(colon + 1));
      const auto [ptr, ec] =
          std::from_chars(digits.data(), digits.data() + digits.size(), count);
      if (ec != std::errc{} || ptr != digits.data() + digits.size() ||
          count == 0)
        fail(ErrorCode::parse,
             "bad repeat count in feature spec token '" + std::string(token) +
                 "'");
      token = detail::trim(token.substr(0, colon));
    }
    kinds.insert(kinds.end(), count, parse_kind_name(token));
  }
  if (kinds.empty()) fail(ErrorCode::parse, "empty feature spec");
  return kinds;
}

std::string format_feature_spec(std::span<const FeatureKind> kinds) {
  std::string out;
  std::size_t i = 0;
  while (i < kinds.size()) {
    std::size_t j = i;
    while (j < kinds.size() && kinds[j] == kinds[i]) ++j;
    if (!out.empty()) out += ',';
    out += kind_name(kinds[i]);
    if (j - i > 1) out += ':' + std::to_string(j - i);
    i = j;
  }
  return out;
}

MetricKind parse_metric_kind(std::string_view name) {
  if (name == "euclidean") return MetricKind::euclidean;
  if (name == "periodic" || name == "periodic_euclidean")
    return MetricKind::periodic_euclidean;
  if (name == "rmsd" || name == "aligned_rmsd") return MetricKind::aligned_rmsd;
  fail(ErrorCode::parse, "unknown metric '" + std::string(name) + "'");
}

std::string_view metric_kind_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::euclidean: return "euclidean";
    case MetricKind::periodic_euclidean: return "periodic_euclidean";
    case MetricKind::aligned_rmsd: return "aligned_rmsd";
  }
  return "?";
}

SnapshotStore::SnapshotStore(std::size_t n_snapshots, std::size_t n_features,
                             std::vector<double> values,
                             std::vector<FeatureKind> kinds, double period)
    : n_(n_snapshots),
      d_(n_features),
      period_(period),
      values_(std::move(values)),
      kinds_(std::move(kinds)) {
  if (n_ == 0 || d_ == 0)
    fail(ErrorCode::invalid_argument, "dataset must have N >= 1 and D >= 1");
  if (values_.size() != n_ * d_)
    fail(ErrorCode::invalid_argument, "value count does not match N x D");
  if (kinds_.size() != d_)
    fail(ErrorCode::invalid_argument,
         "feature spec lists " + std::to_string(kinds_.size()) +
             " kinds for " + std::to_string(d_) + " columns");
  if (!(period_ > 0.0) || !std::isfinite(period_))
    fail(ErrorCode::invalid_argument, "period must be positive");

  // coord3d columns come in runs whose lengths are multiples of three.
  for (std::size_t f = 0; f < d_;) {
    std::size_t run = 0;
    while (f + run < d_ && kinds_[f + run] == FeatureKind::coord3d) ++run;
    if (run % 3 != 0)
      fail(ErrorCode::invalid_argument,
           "coord3d features must come in consecutive xyz triplets");
    f += run ? run : 1;
  }

  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t f = 0; f < d_; ++f) {
      double& v = values_[i * d_ + f];
      if (!std::isfinite(v))
        fail(ErrorCode::invalid_argument,
             "non-finite value at row " + std::to_string(i));
      if (kinds_[f] == FeatureKind::circular_degrees)
        v = wrap_periodic(v, period_);
    }
}

SnapshotStore load_dataset(const std::filesystem::path& path, DataFormat format,
                           std::span<const FeatureKind> kinds, double period,
                           std::size_t n_rows) {
  const std::size_t d = kinds.size();
  if (d == 0) fail(ErrorCode::invalid_argument, "empty feature spec");
  std::vector<FeatureKind> kind_vec(kinds.begin(), kinds.end());

  if (format == DataFormat::raw_binary) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) fail(ErrorCode::io, "cannot open " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    const std::size_t row_bytes = d * sizeof(double);
    if (n_rows == 0) {
      if (bytes % row_bytes != 0)
        fail(ErrorCode::parse, path.string() + ": size " +
                                   std::to_string(bytes) +
                                   " is not a multiple of D*8");
      n_rows = bytes / row_bytes;
    } else if (bytes != n_rows * row_bytes) {
      fail(ErrorCode::parse, path.string() + ": expected " +
                                 std::to_string(n_rows * row_bytes) +
                                 " bytes, found " + std::to_string(bytes));
    }
    std::vector<double> values(n_rows * d);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(bytes));
    if (!in) fail(ErrorCode::io, "short read on " + path.string());
    if constexpr (std::endian::native == std::endian::big) {
      for (auto& v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        bits = __builtin_bswap64(bits);
        v = std::bit_cast<double>(bits);
      }
    }
    return SnapshotStore(n_rows, d, std::move(values), std::move(kind_vec),
                         period);
  }

  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  bool first = true;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = detail::trim(line);
    if (view.empty()) continue;
    const auto cells = detail::split(view, ',');
    std::vector<double> parsed;
    parsed.reserve(cells.size());
    bool numeric = true;
    for (auto cell : cells) {
      double v = 0.0;
      if (!detail::parse_double(detail::trim(cell), v)) {
        numeric = false;
        break;
      }
      parsed.push_back(v);
    }
    if (!numeric) {
      if (first) {
        first = false;  // header row
        continue;
      }
      fail(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) +
                                 ": non-numeric cell");
    }
    first = false;
    if (parsed.size() != d)
      fail(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) +
                                 ": expected " + std::to_string(d) +
                                 " values, found " +
                                 std::to_string(parsed.size()));
    values.insert(values.end(), parsed.begin(), parsed.end());
    ++rows;
  }
  if (rows == 0) fail(ErrorCode::parse, path.string() + ": no data rows");
  return SnapshotStore(rows, d, std::move(values), std::move(kind_vec), period);
}

void save_dataset(const SnapshotStore& store, const std::filesystem::path& path,
                  DataFormat format) {
  if (format == DataFormat::raw_binary) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot write " + path.string());
    const auto values = store.values();
    if constexpr (std::endian::native == std::endian::big) {
      for (double v : values) {
        const auto bits = __builtin_bswap64(std::bit_cast<std::uint64_t>(v));
        out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
      }
    } else {
      out.write(reinterpret_cast<const char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
    if (!out) fail(ErrorCode::io, "write failed on " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  for (std::size_t f = 0; f < store.dimension(); ++f)
    out << (f ? "," : "") << 'f' << f;
  out << '\n';
  std::string buf;
  for (std::size_t i = 0; i < store.size(); ++i) {
    buf.clear();
    const auto row = store.row(i);
    for (std::size_t f = 0; f < row.size(); ++f) {
      if (f) buf += ',';
      detail::append_double(buf, row[f]);
    }
    buf += '\n';
    out << buf;
  }
  if (!out) fail(ErrorCode::io, "write failed on " + path.string());
}

void check_compatible(const SnapshotStore& store, const Metric& metric) {
  const FeatureKind need = required_kind(metric.kind);
  for (const auto k : store.kinds())
    if (k != need)
      fail(ErrorCode::metric_mismatch,
           std::string(metric_kind_name(metric.kind)) +
               " metric requires all features to be " +
               std::string(kind_name(need)));
  if (metric.kind == MetricKind::periodic_euclidean && !(metric.period > 0.0))
    fail(ErrorCode::invalid_argument, "period must be positive");
}

double distance(const SnapshotStore& store, const Metric& metric,
                std::size_t i, std::size_t j) {
  if (i >= store.size() || j >= store.size())
    fail(ErrorCode::out_of_range, "snapshot index out of range");
  check_compatible(store, metric);
  return metric_distance(metric, store.row(i), store.row(j));
}

double metric_distance(const Metric& metric, std::span<const double> a,
                       std::span<const double> b) {
  switch (metric.kind) {
    case MetricKind::euclidean: {
      double sum = 0.0;
      for (std::size_t f = 0; f < a.size(); ++f) {
        const double diff = a[f] - b[f];
        sum += diff * diff;
      }
      return std::sqrt(sum);
    }
    case MetricKind::periodic_euclidean: {
      const double period = metric.period;
      double sum = 0.0;
      for (std::size_t f = 0; f < a.size(); ++f) {
        double diff = std::fmod(std::fabs(a[f] - b[f]), period);
        diff = std::min(diff, period - diff);
        sum += diff * diff;
      }
      return std::sqrt(sum);
    }
    case MetricKind::aligned_rmsd:
      return aligned_rmsd(a, b);
  }
  return 0.0;
}

Superposition optimal_superposition(std::span<const double> p,
                                    std::span<const double> q) {
  if (p.size() != q.size() || p.empty() || p.size() % 3 != 0)
    fail(ErrorCode::invalid_argument,
         "superposition needs two equal, non-empty xyz point sets");
  const Points pc = centered(p);
  const Points qc = centered(q);
  const Eigen::Matrix3d rot = kabsch_rotation(pc, qc);
  Superposition out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.rotation[r * 3 + c] = rot(r, c);
  out.rmsd = std::sqrt((rot * pc - qc).squaredNorm() /
                       static_cast<double>(pc.cols()));
  return out;
}

}  // namespace sapphire
