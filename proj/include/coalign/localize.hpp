#pragma once

// Network localization driver: solver selection, escape rounds out of local
// minima, and exclusion of targets that cannot be identified.

#include <random>
#include <vector>

#include "coalign/multi_node.hpp"

namespace coalign {

/// kDppa runs the distributed protocol (fixed graphs only); escape rounds
/// around it are driven centrally.
enum class MultiMethod { kLeastSquares, kJacobi, kDppa };

struct MultiOptions {
  MultiMethod method = MultiMethod::kLeastSquares;
  MasterRule rule = MasterRule::kWeightedRefit;
  StoppingRule stop;
  /// After convergence the solve is repeated from a perturbed start and
  /// kept only if the objective drops, up to `escape_rounds` times. Even
  /// rounds re-draw the targets whose mean squared residual exceeds
  /// `escape_ratio` times the median (all targets when none does); odd
  /// rounds re-draw every target.
  int escape_rounds = 0;
  double escape_ratio = 2.0;
};

/// Per-target mean squared range residual over every edge touching it
/// (target edges count for both ends); 0 for a target without edges.
template <int Dim>
std::vector<double> target_residuals(const PoseSet<Dim>& poses, const NetworkDataset<Dim>& data);

template <int Dim>
struct MultiSolveResult {
  MultiResult<Dim> best;
  int escapes_tried = 0;
  int escapes_accepted = 0;
};

/// Solve from `init`, then run escape rounds drawing fresh poses from `rng`.
template <int Dim>
MultiSolveResult<Dim> multi_solve(const NetworkDataset<Dim>& data, const PoseSet<Dim>& init,
                                  const MultiOptions& options, std::mt19937_64& rng);

struct TargetSelection {
  std::vector<bool> keep;
  std::vector<int> unanchored;  ///< no path to an anchor in the union graph
  std::vector<int> ill_posed;   ///< anchored, but rejected by the LS master
};

/// Targets that can be solved: anchored in the union graph and, with
/// `check_master`, accepted by the least-squares master. Rejected targets are
/// removed repeatedly until the remaining network is consistent.
template <int Dim>
TargetSelection select_targets(const NetworkDataset<Dim>& data, bool check_master);

template <int Dim>
struct NetworkSolution {
  /// One pose per original target; excluded targets keep the identity.
  PoseSet<Dim> poses;
  std::vector<bool> solved;
  std::vector<int> unanchored;  ///< no path to an anchor in the union graph
  std::vector<int> ill_posed;   ///< anchored, but rejected by the LS master
  MultiSolveResult<Dim> run;    ///< on the solved sub-network
  PoseSet<Dim> init;            ///< starting poses of that run
  std::vector<int> solved_index;  ///< original index of each sub-network target
};

/// Solves the targets kept by select_targets from random initial poses.
/// An empty selection returns with nothing solved.
template <int Dim>
NetworkSolution<Dim> localize_network(const NetworkDataset<Dim>& data, const MultiOptions& options,
                                      std::mt19937_64& rng);

}  // namespace coalign
