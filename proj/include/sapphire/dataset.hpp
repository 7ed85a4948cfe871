// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sapphire {

/// Index of a snapshot in time order. 32 bits keeps the per-level
/// bookkeeping of the cluster tree and the spanning-tree search compact.
using SnapshotId = std::uint32_t;

enum class FeatureKind : std::uint8_t { linear, circular_degrees, coord3d };

enum class MetricKind : std::uint8_t {
  euclidean,
  periodic_euclidean,
  aligned_rmsd,
};

struct Metric {
  MetricKind kind = MetricKind::euclidean;
  double period = 360.0;
};

enum class DataFormat : std::uint8_t { csv, raw_binary };

/// Parses a comma separated list of feature kinds. Each token is a kind
/// name with an optional repeat count, e.g. "linear:2,circular" or
/// "coord3d:30". Accepted names: linear, circular (or circular_degrees),
/// coord3d.
std::vector<FeatureKind> parse_feature_spec(std::string_view spec);
std::string format_feature_spec(std::span<const FeatureKind> kinds);

MetricKind parse_metric_kind(std::string_view name);
std::string_view metric_kind_name(MetricKind kind);

/// Immutable N x D matrix of snapshots in time order. Circular features are
/// wrapped into [0, period) at construction.
class SnapshotStore {
 public:
  SnapshotStore(std::size_t n_snapshots, std::size_t n_features,
                std::vector<double> values, std::vector<FeatureKind> kinds,
                double period = 360.0);

  std::size_t size() const noexcept { return n_; }
  std::size_t dimension() const noexcept { return d_; }
  double period() const noexcept { return period_; }

  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * d_, d_};
  }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const FeatureKind> kinds() const noexcept { return kinds_; }

 private:
  std::size_t n_;
  std::size_t d_;
  double period_;
  std::vector<double> values_;
  std::vector<FeatureKind> kinds_;
};

/// Reads a dataset. For raw_binary, `n_rows` may be 0 to infer the row count
/// from the file size; otherwise the byte length must equal n_rows * D * 8.
SnapshotStore load_dataset(const std::filesystem::path& path, DataFormat format,
                           std::span<const FeatureKind> kinds,
                           double period = 360.0, std::size_t n_rows = 0);

void save_dataset(const SnapshotStore& store, const std::filesystem::path& path,
                  DataFormat format);

/// Throws metric_mismatch unless every feature has the kind the metric needs.
void check_compatible(const SnapshotStore& store, const Metric& metric);

/// Checked distance between two stored snapshots.
double distance(const SnapshotStore& store, const Metric& metric,
                std::size_t i, std::size_t j);

/// Unchecked kernel on two feature vectors of equal length. Used on raw rows
/// and on cluster centroids alike.
double metric_distance(const Metric& metric, std::span<const double> a,
                       std::span<const double> b);

struct Superposition {
  /// Row-major proper rotation that maps centered P onto centered Q.
  std::array<double, 9> rotation;
  double rmsd;
};

/// Least-squares rigid-body fit of two point sets given as flat xyz triplets
/// (covariance SVD with reflection correction). All-coincident input yields
/// the identity rotation.
Superposition optimal_superposition(std::span<const double> p,
                                    std::span<const double> q);

/// Wraps a value into [0, period).
double wrap_periodic(double value, double period) noexcept;

}  // namespace sapphire
