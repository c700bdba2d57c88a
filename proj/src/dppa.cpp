#include "coalign/dppa.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "coalign/errors.hpp"

namespace coalign {

template <int Dim>
LocalMeasurements<Dim> local_measurements(int i, const NetworkDataset<Dim>& data) {
  if (i < 0 || i >= data.n_targets) throw UsageError("local_measurements: bad target index");
  LocalMeasurements<Dim> local;
  for (const auto& snap : data.snapshots) {
    local.p_local.push_back(snap.target_local[i]);
    auto& tr = local.target_ranges.emplace_back();
    for (const auto& e : snap.tt_edges)
      if (e.i == i) tr.push_back({e.j, e.range});
    std::stable_sort(tr.begin(), tr.end(), [](const auto& x, const auto& y) { return x.j < y.j; });
    auto& ar = local.anchor_ranges.emplace_back();
    for (const auto& e : snap.ta_edges)
      if (e.i == i) ar.push_back({e.a, snap.anchor_global[e.a], e.range});
    std::stable_sort(ar.begin(), ar.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
  }
  return local;
}

template <int Dim>
DppaNode<Dim>::DppaNode(int id, LocalMeasurements<Dim> local, const Pose<Dim>& init)
    : id_(id), local_(std::move(local)), pose_(init) {
  std::set<int> measured;
  for (const auto& snap : local_.target_ranges)
    for (const auto& tr : snap) measured.insert(tr.j);
  measured_.assign(measured.begin(), measured.end());
  neighbors_ = measured_;
}

template <int Dim>
bool DppaNode<Dim>::non_identifiable() const {
  if (!neighbors_.empty()) return false;
  for (const auto& ar : local_.anchor_ranges)
    if (!ar.empty()) return false;
  return true;
}

template <int Dim>
TrajectoryMessage<Dim> DppaNode<Dim>::trajectory_for(int neighbor) const {
  TrajectoryMessage<Dim> msg{id_, neighbor, local_.p_local, {}};
  msg.ranges.resize(local_.p_local.size());
  for (std::size_t s = 0; s < local_.target_ranges.size(); ++s) {
    for (const auto& tr : local_.target_ranges[s])
      if (tr.j == neighbor) msg.ranges[s].push_back(tr.range);
  }
  return msg;
}

template <int Dim>
void DppaNode<Dim>::receive(const TrajectoryMessage<Dim>& msg) {
  if (msg.to != id_) throw UsageError("trajectory message delivered to the wrong node");
  if (msg.p_local.size() != local_.p_local.size() || msg.ranges.size() != local_.p_local.size()) {
    throw UsageError("trajectory message has the wrong number of snapshots");
  }
  neighbor_trajectory_[msg.from] = msg.p_local;
  bool any = false;
  for (const auto& r : msg.ranges) any = any || !r.empty();
  if (any) incoming_ranges_[msg.from] = msg.ranges;
  const auto pos = std::lower_bound(neighbors_.begin(), neighbors_.end(), msg.from);
  if (pos == neighbors_.end() || *pos != msg.from) neighbors_.insert(pos, msg.from);
}

template <int Dim>
void DppaNode<Dim>::receive(const PoseMessage<Dim>& msg) {
  if (msg.to != id_) throw UsageError("pose message delivered to the wrong node");
  neighbor_pose_[msg.from] = msg.pose;
}

template <int Dim>
std::vector<PoseMessage<Dim>> DppaNode<Dim>::broadcast(int round) const {
  std::vector<PoseMessage<Dim>> out;
  out.reserve(neighbors_.size());
  for (int j : neighbors_) out.push_back({round, id_, j, pose_});
  return out;
}

template <int Dim>
void DppaNode<Dim>::update() {
  auto lookup = [&](int j) {
    const auto pose_it = neighbor_pose_.find(j);
    const auto traj_it = neighbor_trajectory_.find(j);
    if (pose_it == neighbor_pose_.end() || traj_it == neighbor_trajectory_.end()) {
      throw UsageError("node " + std::to_string(id_) + " is missing data from neighbour " +
                       std::to_string(j));
    }
    return std::make_pair(&pose_it->second, &traj_it->second);
  };
  std::vector<JacobiPair<Dim>> pairs;
  for (std::size_t s = 0; s < local_.p_local.size(); ++s) {
    const Vec<Dim>& p_i = local_.p_local[s];
    for (const auto& tr : local_.target_ranges[s]) {
      const auto [pose_j, traj_j] = lookup(tr.j);
      const Vec<Dim>& p_j = traj_j->at(s);
      const SphereSurface<Dim> sphere{Vec<Dim>::Zero(), tr.range};
      const Vec<Dim> y = project_onto_sphere(sphere, edge_displacement(pose_, p_i, *pose_j, p_j));
      pairs.push_back({Vec<Dim>(y + apply_pose(*pose_j, p_j)), p_i});
    }
    for (const auto& [j, ranges] : incoming_ranges_) {
      if (ranges[s].empty()) continue;
      const auto [pose_j, traj_j] = lookup(j);
      const Vec<Dim>& p_j = traj_j->at(s);
      for (double range : ranges[s]) {
        const SphereSurface<Dim> sphere{Vec<Dim>::Zero(), range};
        const Vec<Dim> y =
            project_onto_sphere(sphere, edge_displacement(*pose_j, p_j, pose_, p_i));
        pairs.push_back({Vec<Dim>(apply_pose(*pose_j, p_j) - y), p_i});
      }
    }
    for (const auto& ar : local_.anchor_ranges[s]) {
      const SphereSurface<Dim> sphere{ar.anchor, ar.range};
      pairs.push_back({project_onto_sphere(sphere, apply_pose(pose_, p_i)), p_i});
    }
  }
  pose_ = jacobi_fit<Dim>(pairs, pose_).pose;
}

// ---------------------------------------------------------------------------

template <int Dim>
DppaNetwork<Dim>::DppaNetwork(const NetworkDataset<Dim>& data, const PoseSet<Dim>& init,
                              bool keep_log)
    : keep_log_(keep_log) {
  if (!is_fixed_graph(data)) throw UsageError("DPPA requires the same graph in every snapshot");
  if (static_cast<int>(init.size()) != data.n_targets) {
    throw UsageError("DPPA: one initial pose per target required");
  }
  unanchored_ = check_union_connectivity(data);
  std::transform(unanchored_.begin(), unanchored_.end(), unanchored_.begin(),
                 [](bool connected) { return !connected; });
  nodes_.reserve(data.n_targets);
  for (int i = 0; i < data.n_targets; ++i) {
    nodes_.emplace_back(i, local_measurements(i, data), init[i]);
  }
  for (const auto& node : nodes_) {
    for (int j : node.measured()) {
      nodes_[j].receive(node.trajectory_for(j));
      ++trajectory_messages_;
    }
  }
  for (const auto& node : nodes_) {
    const auto& measured = node.measured();
    for (int j : node.neighbors()) {
      if (std::binary_search(measured.begin(), measured.end(), j)) continue;
      nodes_[j].receive(node.trajectory_for(j));
      ++trajectory_messages_;
    }
  }
  std::vector<PoseMessage<Dim>> outgoing;
  for (const auto& node : nodes_) {
    auto msgs = node.broadcast(0);
    outgoing.insert(outgoing.end(), msgs.begin(), msgs.end());
  }
  deliver(outgoing);
}

template <int Dim>
void DppaNetwork<Dim>::deliver(const std::vector<PoseMessage<Dim>>& outgoing) {
  for (const auto& msg : outgoing) {
    nodes_[msg.to].receive(msg);
    ++pose_messages_;
    if (keep_log_) log_.push_back(msg);
  }
}

template <int Dim>
void DppaNetwork<Dim>::round() {
  ++rounds_;
  for (auto& node : nodes_) node.update();
  std::vector<PoseMessage<Dim>> outgoing;
  for (const auto& node : nodes_) {
    auto msgs = node.broadcast(rounds_);
    outgoing.insert(outgoing.end(), msgs.begin(), msgs.end());
  }
  deliver(outgoing);
}

template <int Dim>
void DppaNetwork<Dim>::run(int rounds) {
  for (int k = 0; k < rounds; ++k) round();
}

template <int Dim>
PoseSet<Dim> DppaNetwork<Dim>::poses() const {
  PoseSet<Dim> out;
  out.reserve(nodes_.size());
  for (const auto& node : nodes_) out.push_back(node.pose());
  return out;
}

template <int Dim>
MultiResult<Dim> dppa_solve(const NetworkDataset<Dim>& data, const PoseSet<Dim>& init,
                            const StoppingRule& stop) {
  DppaNetwork<Dim> net(data, init, false);
  MultiResult<Dim> result;
  result.poses = init;
  double current = composite_objective(result.poses, project_all_edges(result.poses, data), data);
  result.trace.push_back(current);
  while (result.iterations < stop.max_iterations && current > 0.0) {
    net.round();
    result.poses = net.poses();
    const double previous = current;
    current = composite_objective(result.poses, project_all_edges(result.poses, data), data);
    ++result.iterations;
    result.trace.push_back(current);
    if (stop.relative_tolerance > 0.0 &&
        std::abs(previous - current) <= stop.relative_tolerance * previous) {
      break;
    }
  }
  result.non_identifiable.reserve(data.n_targets);
  for (const auto& node : net.nodes()) result.non_identifiable.push_back(node.non_identifiable());
  return result;
}

template MultiResult<2> dppa_solve<2>(const NetworkDataset<2>&, const PoseSet<2>&,
                                      const StoppingRule&);
template MultiResult<3> dppa_solve<3>(const NetworkDataset<3>&, const PoseSet<3>&,
                                      const StoppingRule&);
template LocalMeasurements<2> local_measurements<2>(int, const NetworkDataset<2>&);
template LocalMeasurements<3> local_measurements<3>(int, const NetworkDataset<3>&);
template class DppaNode<2>;
template class DppaNode<3>;
template class DppaNetwork<2>;
template class DppaNetwork<3>;

}  // namespace coalign
