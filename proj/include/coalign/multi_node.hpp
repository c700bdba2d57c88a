#pragma once

// Localizing n targets over time-varying graphs.
//
// Each measured edge contributes a sphere: S_ij(t) = { y : ||y|| = d_ij(t) }
// for the displacement between two targets, S_ia(t) = { y : ||y - p_a|| =
// r_ia(t) } for a target-anchor range. Iterations alternate edge projections
// with a pose refit, either
//   * jointly: an unconstrained linear least-squares solve for affine maps
//     (Z_i, T_i), each Z_i then mapped to a rotation, or
//   * per node (Jacobi): each target refits its own pose in closed form while
//     its neighbours stay at their previous estimate.
//
// Unknowns of target i are stacked as x_i = [rows of Z_i ; T_i] so that
// B_i(t) x_i = Z_i p_i(t) + T_i with B_i(t) = [I (x) p_i(t)^T, I].

#include <Eigen/Sparse>

#include <memory>
#include <vector>

#include "coalign/network.hpp"
#include "coalign/two_node.hpp"

namespace coalign {

/// Surface points of one snapshot, index-aligned with its edge lists.
template <int Dim>
struct ProjectionSlice {
  std::vector<Vec<Dim>> y_tt;
  std::vector<Vec<Dim>> y_ta;
};

template <int Dim>
using ProjectionSet = std::vector<ProjectionSlice<Dim>>;

/// sum over snapshots and directed edges of (range - ||estimated separation||)^2.
template <int Dim>
double multi_objective(const PoseSet<Dim>& poses, const NetworkDataset<Dim>& data);

/// g(R, T, y): squared distances between estimated separations and the
/// given surface points.
template <int Dim>
double composite_objective(const PoseSet<Dim>& poses, const ProjectionSet<Dim>& proj,
                           const NetworkDataset<Dim>& data);

/// (R_i p_i + T_i) - (R_j p_j + T_j)
template <int Dim>
Vec<Dim> edge_displacement(const Pose<Dim>& pose_i, const Vec<Dim>& p_i,
                           const Pose<Dim>& pose_j, const Vec<Dim>& p_j);

template <int Dim>
ProjectionSlice<Dim> project_edges(const PoseSet<Dim>& poses, const NetworkSnapshot<Dim>& snap);

template <int Dim>
ProjectionSet<Dim> project_all_edges(const PoseSet<Dim>& poses, const NetworkDataset<Dim>& data);

// ---------------------------------------------------------------------------
// Joint least squares

/// Q x = rhs with Q = sum_t E(t)^T E(t), rhs = sum_t E(t)^T y(t).
struct NormalEquations {
  int n_targets = 0;
  int block_size = 0;  ///< d (d + 1)
  Eigen::SparseMatrix<double> gram;
  Eigen::VectorXd rhs;

  Eigen::MatrixXd block(int i, int j) const;
  Eigen::VectorXd rhs_block(int i) const;
};

/// Q only; it depends on local positions and the graphs, not on the iterate.
template <int Dim>
Eigen::SparseMatrix<double> assemble_gram(const NetworkDataset<Dim>& data);

template <int Dim>
Eigen::VectorXd assemble_rhs(const ProjectionSet<Dim>& proj, const NetworkDataset<Dim>& data);

template <int Dim>
NormalEquations assemble_normal_equations(const ProjectionSet<Dim>& proj,
                                          const NetworkDataset<Dim>& data);

template <int Dim>
struct AffineEstimate {
  std::vector<Mat<Dim>> z;
  std::vector<Vec<Dim>> translation;
};

/// Factorization of Q, reused across iterations. Construction throws
/// IdentifiabilityError, naming the offending targets, when Q is singular or
/// its (estimated) condition number exceeds 1e12. Systems with fewer than 10
/// targets use a dense factorization and an exact condition number; larger
/// ones a sparse LDL^T whose pivot ratio bounds the condition number from
/// below.
template <int Dim>
class LeastSquaresMaster {
 public:
  static constexpr int kBlock = Dim * (Dim + 1);
  static constexpr int kDenseBelow = 10;
  static constexpr double kMaxCondition = 1e12;

  LeastSquaresMaster(const Eigen::SparseMatrix<double>& gram, int n_targets);
  ~LeastSquaresMaster();
  LeastSquaresMaster(LeastSquaresMaster&&) noexcept;
  LeastSquaresMaster& operator=(LeastSquaresMaster&&) noexcept;

  AffineEstimate<Dim> solve(const Eigen::VectorXd& rhs) const;
  Eigen::VectorXd solve_stacked(const Eigen::VectorXd& rhs) const;
  int n_targets() const { return n_targets_; }

  /// Centred second moment of target i's local positions, weighted as in the
  /// diagonal block Q_(i,i): C_i = M_i - m_i m_i^T / n_i.
  const Mat<Dim>& local_moment(int i) const;

  /// argmin over T of the quadratic for fixed rotations, i.e. the translation
  /// block of Q x = rhs with the Z part of x pinned to the rotations.
  std::vector<Vec<Dim>> refit_translations(const std::vector<Mat<Dim>>& rotations,
                                           const Eigen::VectorXd& rhs) const;

 private:
  struct Factorization;
  void prepare_refit(const Eigen::SparseMatrix<double>& gram);
  int n_targets_;
  std::unique_ptr<Factorization> fact_;
};

/// One-shot solve of the normal equations.
template <int Dim>
AffineEstimate<Dim> solve_unconstrained_ls(const NormalEquations& ne);

template <int Dim>
struct MultiResult {
  PoseSet<Dim> poses;
  std::vector<double> trace;  ///< g(R^k, T^k, y^k) for k = 0..iterations
  int iterations = 0;
  std::vector<bool> non_identifiable;  ///< Jacobi only: targets without any edge
};

/// How the affine least-squares estimate becomes a pose set.
enum class MasterRule {
  /// R_i = P_SO(Z_i C_i) with C_i = local_moment(i), then T refit for the
  /// fixed rotations. Reduces to the two-node Procrustes update when n = 1.
  /// If the result would raise g at the current projections, a Gauss-Seidel
  /// sweep of exact per-target refits is taken instead.
  kWeightedRefit,
  /// R_i = P_SO(Z_i), T_i taken from the affine solve unchanged.
  kPlainProjection,
};

/// Projections -> rhs -> least squares -> rotations (see MasterRule).
template <int Dim>
PoseSet<Dim> ppa_multi_iterate(const PoseSet<Dim>& poses, const NetworkDataset<Dim>& data,
                               const LeastSquaresMaster<Dim>& master,
                               MasterRule rule = MasterRule::kWeightedRefit);

template <int Dim>
MultiResult<Dim> ppa_multi_solve(const NetworkDataset<Dim>& data, const PoseSet<Dim>& init,
                                 const StoppingRule& stop = {},
                                 MasterRule rule = MasterRule::kWeightedRefit);

// ---------------------------------------------------------------------------
// Jacobi

/// A point target i should map p_local onto: y_ij + R_j p_j + T_j for its
/// own edges (i, j), R_j p_j + T_j - y_ji for edges (j, i) measured by a
/// neighbour, and y_ia for anchor edges.
template <int Dim>
struct JacobiPair {
  Vec<Dim> target;
  Vec<Dim> p_local;
};

/// Closed-form refit of one target from its own measurements. An empty pair
/// list keeps `current` and flags the fit degenerate.
template <int Dim>
RigidFit<Dim> jacobi_fit(std::span<const JacobiPair<Dim>> pairs, const Pose<Dim>& current);

/// Exact minimizer of every term of g containing (R_i, T_i), with every
/// other target fixed at `poses`. Pairs are taken per snapshot in the order
/// outgoing edges by neighbour, incoming edges by neighbour, anchor edges by
/// anchor.
template <int Dim>
RigidFit<Dim> jacobi_update(int i, const PoseSet<Dim>& poses, const ProjectionSet<Dim>& proj,
                            const NetworkDataset<Dim>& data);

/// All targets updated simultaneously from the same iterate.
template <int Dim>
PoseSet<Dim> jacobi_iterate(const PoseSet<Dim>& poses, const NetworkDataset<Dim>& data,
                            std::vector<bool>* non_identifiable = nullptr);

template <int Dim>
MultiResult<Dim> jacobi_solve(const NetworkDataset<Dim>& data, const PoseSet<Dim>& init,
                              const StoppingRule& stop = {});

template <int Dim>
PoseSet<Dim> random_poses(int n, std::mt19937_64& rng);

}  // namespace coalign
