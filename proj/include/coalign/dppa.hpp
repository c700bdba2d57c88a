#pragma once

// Distributed Jacobi refit over a fixed graph.
//
// Every target runs as an isolated state machine holding only its own
// measurements. Neighbours first exchange their local trajectories and the
// ranges they measured to each other once, then proceed in synchronous
// lockstep rounds: each node projects every edge it belongs to with the
// neighbour poses it last received, refits its own pose in closed form, and
// broadcasts the new pose. Delivery is reliable and in order, so round k
// reproduces centralized Jacobi iteration k exactly.

#include <map>
#include <vector>

#include "coalign/multi_node.hpp"

namespace coalign {

template <int Dim>
struct PoseMessage {
  int round = 0;  ///< 0 carries the initial pose
  int from = 0;
  int to = 0;
  Pose<Dim> pose;
};

/// One-time exchange of local positions p_j^l(t), one per snapshot, plus the
/// ranges the sender measured to the receiver in each snapshot.
template <int Dim>
struct TrajectoryMessage {
  int from = 0;
  int to = 0;
  std::vector<Vec<Dim>> p_local;
  std::vector<std::vector<double>> ranges;
};

/// What target i knows from its own sensors.
template <int Dim>
struct LocalMeasurements {
  struct TargetRange {
    int j = 0;
    double range = 0.0;
  };
  struct AnchorRange {
    int a = 0;
    Vec<Dim> anchor = Vec<Dim>::Zero();
    double range = 0.0;
  };
  std::vector<Vec<Dim>> p_local;                       ///< per snapshot
  std::vector<std::vector<TargetRange>> target_ranges; ///< per snapshot
  std::vector<std::vector<AnchorRange>> anchor_ranges; ///< per snapshot
};

/// Extracts target i's own view of the network, each snapshot's ranges
/// sorted by neighbour and anchor index.
template <int Dim>
LocalMeasurements<Dim> local_measurements(int i, const NetworkDataset<Dim>& data);

template <int Dim>
class DppaNode {
 public:
  DppaNode(int id, LocalMeasurements<Dim> local, const Pose<Dim>& init);

  int id() const { return id_; }
  const Pose<Dim>& pose() const { return pose_; }
  /// Targets sharing an edge with this one in either direction. Complete
  /// only once all trajectory messages have arrived.
  const std::vector<int>& neighbors() const { return neighbors_; }
  /// Targets this node measured a range to.
  const std::vector<int>& measured() const { return measured_; }
  /// No edge in either direction; the pose never moves.
  bool non_identifiable() const;

  TrajectoryMessage<Dim> trajectory_for(int neighbor) const;
  void receive(const TrajectoryMessage<Dim>& msg);
  void receive(const PoseMessage<Dim>& msg);

  /// Outgoing messages carrying the current pose, one per neighbour.
  std::vector<PoseMessage<Dim>> broadcast(int round) const;

  /// Projects own edges against cached neighbour poses and refits. Throws
  /// UsageError if a neighbour's pose or trajectory has not arrived.
  void update();

 private:
  int id_;
  LocalMeasurements<Dim> local_;
  Pose<Dim> pose_;
  std::vector<int> neighbors_;
  std::vector<int> measured_;
  std::map<int, std::vector<Vec<Dim>>> neighbor_trajectory_;
  /// Ranges measured by neighbour j to this node, [j][snapshot].
  std::map<int, std::vector<std::vector<double>>> incoming_ranges_;
  std::map<int, Pose<Dim>> neighbor_pose_;
};

template <int Dim>
class DppaNetwork {
 public:
  /// Throws UsageError unless the graph is fixed over time and one initial
  /// pose is given per target. Performs the trajectory exchange (to measured
  /// targets, then replies to the others) and the initial pose broadcast. With keep_log false only message counts are kept.
  DppaNetwork(const NetworkDataset<Dim>& data, const PoseSet<Dim>& init, bool keep_log = true);

  /// One synchronous round: every node updates, then all poses are delivered.
  void round();
  void run(int rounds);

  int rounds_completed() const { return rounds_; }
  PoseSet<Dim> poses() const;
  const std::vector<DppaNode<Dim>>& nodes() const { return nodes_; }
  const std::vector<PoseMessage<Dim>>& message_log() const { return log_; }
  std::size_t pose_messages() const { return pose_messages_; }
  std::size_t trajectory_messages() const { return trajectory_messages_; }
  /// Targets with no path to an anchor; their poses drift unanchored.
  const std::vector<bool>& unanchored() const { return unanchored_; }

 private:
  void deliver(const std::vector<PoseMessage<Dim>>& outgoing);

  std::vector<DppaNode<Dim>> nodes_;
  std::vector<PoseMessage<Dim>> log_;
  std::vector<bool> unanchored_;
  std::size_t pose_messages_ = 0;
  std::size_t trajectory_messages_ = 0;
  int rounds_ = 0;
  bool keep_log_ = true;
};

/// Runs a DppaNetwork until the stopping rule fires. The objective is
/// monitored from outside the network after every round with the same
/// expression as the centralized solvers, so the stop decision (and every
/// iterate) matches jacobi_solve.
template <int Dim>
MultiResult<Dim> dppa_solve(const NetworkDataset<Dim>& data, const PoseSet<Dim>& init,
                            const StoppingRule& stop = {});

}  // namespace coalign
