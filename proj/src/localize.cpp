#include "coalign/localize.hpp"

#include <algorithm>

#include "coalign/dppa.hpp"
#include "coalign/errors.hpp"

namespace coalign {

template <int Dim>
std::vector<double> target_residuals(const PoseSet<Dim>& poses, const NetworkDataset<Dim>& data) {
  std::vector<double> res(data.n_targets, 0.0);
  std::vector<int> count(data.n_targets, 0);
  for (const auto& snap : data.snapshots) {
    for (const auto& e : snap.tt_edges) {
      const double r =
          e.range - edge_displacement(poses[e.i], snap.target_local[e.i], poses[e.j],
                                      snap.target_local[e.j])
                        .norm();
      res[e.i] += r * r;
      res[e.j] += r * r;
      ++count[e.i];
      ++count[e.j];
    }
    for (const auto& e : snap.ta_edges) {
      const double r =
          e.range - (apply_pose(poses[e.i], snap.target_local[e.i]) - snap.anchor_global[e.a]).norm();
      res[e.i] += r * r;
      ++count[e.i];
    }
  }
  for (int i = 0; i < data.n_targets; ++i)
    if (count[i] > 0) res[i] /= count[i];
  return res;
}

template <int Dim>
MultiSolveResult<Dim> multi_solve(const NetworkDataset<Dim>& data, const PoseSet<Dim>& init,
                                  const MultiOptions& options, std::mt19937_64& rng) {
  auto solve_from = [&](const PoseSet<Dim>& start) {
    switch (options.method) {
      case MultiMethod::kJacobi:
        return jacobi_solve(data, start, options.stop);
      case MultiMethod::kDppa:
        return dppa_solve(data, start, options.stop);
      case MultiMethod::kLeastSquares:
        break;
    }
    return ppa_multi_solve(data, start, options.stop, options.rule);
  };
  MultiSolveResult<Dim> out;
  out.best = solve_from(init);
  for (int round = 0; round < options.escape_rounds; ++round) {
    const auto res = target_residuals(out.best.poses, data);
    auto sorted = res;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double threshold = options.escape_ratio * sorted[sorted.size() / 2];
    PoseSet<Dim> start = out.best.poses;
    const PoseSet<Dim> fresh = random_poses<Dim>(data.n_targets, rng);
    bool any = false;
    if (round % 2 == 0) {
      for (int i = 0; i < data.n_targets; ++i) {
        if (res[i] > threshold) {
          start[i] = fresh[i];
          any = true;
        }
      }
    }
    if (!any) start = fresh;
    ++out.escapes_tried;
    auto candidate = solve_from(start);
    if (candidate.trace.back() < out.best.trace.back()) {
      out.best = std::move(candidate);
      ++out.escapes_accepted;
    }
  }
  return out;
}

template <int Dim>
TargetSelection select_targets(const NetworkDataset<Dim>& data, bool check_master) {
  data.validate();
  TargetSelection sel;
  sel.keep = check_union_connectivity(data);
  for (int i = 0; i < data.n_targets; ++i)
    if (!sel.keep[i]) sel.unanchored.push_back(i);

  for (;;) {
    std::vector<int> index;
    const NetworkDataset<Dim> sub = restrict_to_targets(data, sel.keep, &index);
    if (sub.n_targets == 0) break;
    // A target may lose its anchor path once ill-posed targets are dropped.
    const auto connected = check_union_connectivity(sub);
    if (std::find(connected.begin(), connected.end(), false) != connected.end()) {
      for (int k = 0; k < sub.n_targets; ++k) {
        if (!connected[k]) {
          sel.keep[index[k]] = false;
          sel.unanchored.push_back(index[k]);
        }
      }
      continue;
    }
    if (!check_master) break;
    try {
      const LeastSquaresMaster<Dim> master(assemble_gram(sub), sub.n_targets);
      break;
    } catch (const IdentifiabilityError& e) {
      if (e.targets().empty()) throw;
      for (int k : e.targets()) {
        sel.keep[index[k]] = false;
        sel.ill_posed.push_back(index[k]);
      }
    }
  }
  std::sort(sel.unanchored.begin(), sel.unanchored.end());
  std::sort(sel.ill_posed.begin(), sel.ill_posed.end());
  return sel;
}

template <int Dim>
NetworkSolution<Dim> localize_network(const NetworkDataset<Dim>& data, const MultiOptions& options,
                                      std::mt19937_64& rng) {
  const TargetSelection sel =
      select_targets(data, options.method == MultiMethod::kLeastSquares);
  NetworkSolution<Dim> sol;
  sol.poses.assign(data.n_targets, Pose<Dim>::identity());
  sol.solved = sel.keep;
  sol.unanchored = sel.unanchored;
  sol.ill_posed = sel.ill_posed;
  const NetworkDataset<Dim> sub = restrict_to_targets(data, sel.keep, &sol.solved_index);
  if (sub.n_targets == 0) return sol;
  sol.init = random_poses<Dim>(sub.n_targets, rng);
  sol.run = multi_solve(sub, sol.init, options, rng);
  for (std::size_t k = 0; k < sol.solved_index.size(); ++k)
    sol.poses[sol.solved_index[k]] = sol.run.best.poses[k];
  return sol;
}

#define COALIGN_INSTANTIATE(D)                                                                 \
  template std::vector<double> target_residuals<D>(const PoseSet<D>&, const NetworkDataset<D>&); \
  template MultiSolveResult<D> multi_solve<D>(const NetworkDataset<D>&, const PoseSet<D>&,       \
                                              const MultiOptions&, std::mt19937_64&);            \
  template TargetSelection select_targets<D>(const NetworkDataset<D>&, bool);                  \
  template NetworkSolution<D> localize_network<D>(const NetworkDataset<D>&, const MultiOptions&, \
                                                  std::mt19937_64&);

COALIGN_INSTANTIATE(2)
COALIGN_INSTANTIATE(3)

#undef COALIGN_INSTANTIATE

}  // namespace coalign
