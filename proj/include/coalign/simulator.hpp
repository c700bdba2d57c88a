#pragma once

// Synthetic experiments: random ground-truth frames, node motion, graphs and
// Gaussian range noise calibrated by an SNR in dB.

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "coalign/multi_node.hpp"
#include "coalign/network.hpp"
#include "coalign/two_node.hpp"

namespace coalign {

/// Mean separation of two uniform points in [1, 9]^2; the signal level of the
/// SNR definition.
inline constexpr double kMeanRange = 4.1712;

/// sigma such that 10 log10(kMeanRange^2 / sigma^2) = snr_db; +inf gives 0.
double sigma_from_snr(double snr_db);

struct Scenario {
  int dim = 2;
  double area_lo = 1.0;
  double area_hi = 9.0;
  int n_targets = 1;
  /// Initial anchor positions (network scenarios); each of length dim.
  std::vector<std::vector<double>> anchors;
  /// Nodes closer than this measure each other. +inf gives complete graphs.
  double comm_radius = 1.0;
  double snr_db = 20.0;  ///< +inf for noiseless ranges
  int tbar = 20;
  std::uint64_t seed = 1;
  /// Nodes wander inside a box of this half width around their initial
  /// position, moving at most `step` per axis per time step.
  double wander_half_width = 0.5;
  double step = 0.5;
  bool anchors_move = true;
  /// Keep the graph of the first snapshot for all time (ranges still follow
  /// the motion).
  bool fixed_graph = false;

  double noise_sigma() const { return sigma_from_snr(snr_db); }

  /// Throws UsageError on an inconsistent or degenerate configuration,
  /// including snr_db <= 0.
  void validate() const;

  static Scenario two_node(double snr_db, int tbar, std::uint64_t seed);
  /// 110 wandering targets, anchors at the corners (2,2), (2,8), (8,2), (8,8),
  /// communication radius 1, SNR 100 dB, 25 snapshots.
  static Scenario corner_anchor_network();
};

template <int Dim>
struct GroundTruth {
  PoseSet<Dim> poses;
  std::vector<std::vector<Vec<Dim>>> target_global;  ///< [snapshot][target]
  std::vector<std::vector<Vec<Dim>>> anchor_global;  ///< [snapshot][anchor]
};

/// Independent generator for stream `stream` of a seed.
std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream);

/// Seed of Monte-Carlo trial `trial` under a base seed.
std::uint64_t trial_seed(std::uint64_t base, std::uint64_t trial);

/// Uniform anchor and target positions in the area, target frame drawn at
/// random, p_l pulled back through the true pose. Ranges are clamped at 0.
template <int Dim>
std::pair<TwoNodeDataset<Dim>, GroundTruth<Dim>> generate_two_node(const Scenario& scenario);

template <int Dim>
std::pair<NetworkDataset<Dim>, GroundTruth<Dim>> generate_network(const Scenario& scenario);

/// Noiseless ranges recomputed from a ground truth, in dataset order.
template <int Dim>
std::vector<double> true_ranges(const TwoNodeDataset<Dim>& data, const GroundTruth<Dim>& truth);

/// Counts of targets with 0, 1-5, 6-10, 11-15, 16-20 and more than 20
/// target-anchor ranges.
std::vector<int> anchor_measurement_histogram(const std::vector<int>& counts);

}  // namespace coalign
