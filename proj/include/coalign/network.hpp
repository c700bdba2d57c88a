#pragma once

// Time-indexed measurement graphs of n targets and r anchors.
//
// Targets are numbered 0..n-1 and anchors 0..r-1. A target-target range is
// directed: (i, j, d_ij) is node i's measurement of node j, and the reverse
// direction is stored separately because the two sensors may disagree.

#include <vector>

#include "coalign/geometry.hpp"

namespace coalign {

struct TargetEdge {
  int i = 0;
  int j = 0;
  double range = 0.0;
};

struct AnchorEdge {
  int i = 0;  ///< target
  int a = 0;  ///< anchor
  double range = 0.0;
};

template <int Dim>
struct NetworkSnapshot {
  int t = 1;
  std::vector<Vec<Dim>> target_local;   ///< p_i^l(t), one per target
  std::vector<Vec<Dim>> anchor_global;  ///< p_a^g(t), one per anchor
  std::vector<TargetEdge> tt_edges;
  std::vector<AnchorEdge> ta_edges;
};

template <int Dim>
struct NetworkDataset {
  int n_targets = 0;
  int n_anchors = 0;
  std::vector<NetworkSnapshot<Dim>> snapshots;

  /// Throws UsageError on size mismatches, out-of-range indices, negative or
  /// non-finite ranges, self loops, non-increasing t, or a target-target edge
  /// whose reverse direction is missing.
  void validate() const;
};

template <int Dim>
using PoseSet = std::vector<Pose<Dim>>;

/// True for targets joined to some anchor by a path in the union of all
/// snapshot graphs.
template <int Dim>
std::vector<bool> check_union_connectivity(const NetworkDataset<Dim>& data);

/// Same edge set (ignoring ranges) in every snapshot.
template <int Dim>
bool is_fixed_graph(const NetworkDataset<Dim>& data);

/// Number of target-anchor ranges each target took over all snapshots.
template <int Dim>
std::vector<int> anchor_measurement_counts(const NetworkDataset<Dim>& data);

/// |E| / |V| for the union graph, counting directed target-target edges and
/// target-anchor edges over n + r nodes.
template <int Dim>
double average_degree(const NetworkDataset<Dim>& data);

/// Sub-network on the kept targets, renumbered in increasing order. Edges
/// touching a dropped target are removed. `old_index`, when given, receives
/// the original index of every kept target.
template <int Dim>
NetworkDataset<Dim> restrict_to_targets(const NetworkDataset<Dim>& data,
                                        const std::vector<bool>& keep,
                                        std::vector<int>* old_index = nullptr);

}  // namespace coalign
