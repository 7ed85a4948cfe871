// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sapphire/dataset.hpp"

namespace sapphire {

/// Markov chain over isotropic Gaussian wells.
struct WellSpec {
  std::vector<std::vector<double>> means;        // one D-vector per state
  double width = 1.0;                            // sigma of every well
  std::vector<std::vector<double>> transitions;  // row-stochastic, m x m
  double outlier_rate = 0.0;
  /// Planted outliers have their deviation vector scaled by this factor.
  double outlier_scale = 4.0;
  /// AR(1) coefficient of the in-well deviation, in [0, 1). Deviations keep
  /// their stationary spread `width`; 0 draws every snapshot independently.
  double memory = 0.0;
  FeatureKind kind = FeatureKind::linear;  // linear or circular_degrees
  double period = 360.0;

  std::size_t states() const noexcept { return means.size(); }
  void validate() const;
};

/// Uniform hopping: stay with probability 1 - hop, else move to one of the
/// other states uniformly. Means sit on axis 0 at multiples of `separation`.
WellSpec line_of_wells(std::size_t states, std::size_t dim, double separation,
                       double width, double hop);

struct SyntheticRun {
  SnapshotStore store;
  std::vector<int> labels;
  std::vector<std::vector<std::uint64_t>> transition_counts;
  std::vector<SnapshotId> outliers;  // ascending
};

/// The chain starts in state 0.
SyntheticRun generate(const WellSpec& spec, std::size_t n, std::uint64_t seed);

struct MarkovCut {
  std::uint64_t count = 0;
  double mfpt_sum = 0.0;  // 2N / count, infinite without crossings
};

/// Counts time-consecutive label pairs with one side in `group_a` (indexed
/// by state) and the other outside.
MarkovCut markov_oracle(std::span<const int> labels, std::span<const bool> group_a);

/// Sidecar CSV: snapshot,label,outlier.
void write_labels_csv(const SyntheticRun& run, const std::filesystem::path& path);

struct LabelTable {
  std::vector<int> labels;
  std::vector<bool> outlier;
};
LabelTable read_labels_csv(const std::filesystem::path& path);

}  // namespace sapphire
