#include "coalign/multi_node.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <variant>

#include "coalign/errors.hpp"

namespace coalign {

template <int Dim>
Vec<Dim> edge_displacement(const Pose<Dim>& pose_i, const Vec<Dim>& p_i,
                           const Pose<Dim>& pose_j, const Vec<Dim>& p_j) {
  return apply_pose(pose_i, p_i) - apply_pose(pose_j, p_j);
}

template <int Dim>
double multi_objective(const PoseSet<Dim>& poses, const NetworkDataset<Dim>& data) {
  double sum = 0.0;
  for (const auto& snap : data.snapshots) {
    for (const auto& e : snap.tt_edges) {
      const double res =
          e.range - edge_displacement(poses[e.i], snap.target_local[e.i], poses[e.j],
                                      snap.target_local[e.j])
                        .norm();
      sum += res * res;
    }
    for (const auto& e : snap.ta_edges) {
      const double res =
          e.range - (apply_pose(poses[e.i], snap.target_local[e.i]) - snap.anchor_global[e.a]).norm();
      sum += res * res;
    }
  }
  return sum;
}

template <int Dim>
double composite_objective(const PoseSet<Dim>& poses, const ProjectionSet<Dim>& proj,
                           const NetworkDataset<Dim>& data) {
  if (proj.size() != data.snapshots.size()) {
    throw UsageError("composite_objective: one projection slice per snapshot required");
  }
  double sum = 0.0;
  for (std::size_t s = 0; s < data.snapshots.size(); ++s) {
    const auto& snap = data.snapshots[s];
    for (std::size_t k = 0; k < snap.tt_edges.size(); ++k) {
      const auto& e = snap.tt_edges[k];
      sum += (edge_displacement(poses[e.i], snap.target_local[e.i], poses[e.j],
                                snap.target_local[e.j]) -
              proj[s].y_tt[k])
                 .squaredNorm();
    }
    for (std::size_t k = 0; k < snap.ta_edges.size(); ++k) {
      const auto& e = snap.ta_edges[k];
      sum += (apply_pose(poses[e.i], snap.target_local[e.i]) - proj[s].y_ta[k]).squaredNorm();
    }
  }
  return sum;
}

template <int Dim>
ProjectionSlice<Dim> project_edges(const PoseSet<Dim>& poses, const NetworkSnapshot<Dim>& snap) {
  if (poses.size() != snap.target_local.size()) {
    throw UsageError("project_edges: one pose per target required");
  }
  ProjectionSlice<Dim> slice;
  slice.y_tt.reserve(snap.tt_edges.size());
  slice.y_ta.reserve(snap.ta_edges.size());
  for (const auto& e : snap.tt_edges) {
    const SphereSurface<Dim> sphere{Vec<Dim>::Zero(), e.range};
    slice.y_tt.push_back(project_onto_sphere(
        sphere, edge_displacement(poses[e.i], snap.target_local[e.i], poses[e.j],
                                  snap.target_local[e.j])));
  }
  for (const auto& e : snap.ta_edges) {
    const SphereSurface<Dim> sphere{snap.anchor_global[e.a], e.range};
    slice.y_ta.push_back(
        project_onto_sphere(sphere, apply_pose(poses[e.i], snap.target_local[e.i])));
  }
  return slice;
}

template <int Dim>
ProjectionSet<Dim> project_all_edges(const PoseSet<Dim>& poses, const NetworkDataset<Dim>& data) {
  ProjectionSet<Dim> proj;
  proj.reserve(data.snapshots.size());
  for (const auto& snap : data.snapshots) proj.push_back(project_edges(poses, snap));
  return proj;
}

// ---------------------------------------------------------------------------

namespace {

template <int Dim>
using BlockRow = Eigen::Matrix<double, Dim, Dim*(Dim + 1)>;

template <int Dim>
using BlockMat = Eigen::Matrix<double, Dim*(Dim + 1), Dim*(Dim + 1)>;

/// B = [I (x) p^T, I], so B x = Z p + T for x = [rows of Z ; T].
template <int Dim>
BlockRow<Dim> kron_row(const Vec<Dim>& p) {
  BlockRow<Dim> b = BlockRow<Dim>::Zero();
  for (int r = 0; r < Dim; ++r) b.template block<1, Dim>(r, r * Dim) = p.transpose();
  b.template block<Dim, Dim>(0, Dim * Dim).setIdentity();
  return b;
}

}  // namespace

Eigen::MatrixXd NormalEquations::block(int i, int j) const {
  return Eigen::MatrixXd(gram).block(i * block_size, j * block_size, block_size, block_size);
}

Eigen::VectorXd NormalEquations::rhs_block(int i) const {
  return rhs.segment(i * block_size, block_size);
}

template <int Dim>
Eigen::SparseMatrix<double> assemble_gram(const NetworkDataset<Dim>& data) {
  constexpr int kBlock = Dim * (Dim + 1);
  std::map<std::pair<int, int>, BlockMat<Dim>> blocks;
  auto accumulate = [&](int i, int j, const BlockMat<Dim>& m) {
    auto [it, inserted] = blocks.try_emplace({i, j}, m);
    if (!inserted) it->second += m;
  };
  for (const auto& snap : data.snapshots) {
    for (const auto& e : snap.tt_edges) {
      const BlockRow<Dim> bi = kron_row<Dim>(snap.target_local[e.i]);
      const BlockRow<Dim> bj = kron_row<Dim>(snap.target_local[e.j]);
      accumulate(e.i, e.i, bi.transpose() * bi);
      accumulate(e.j, e.j, bj.transpose() * bj);
      accumulate(e.i, e.j, -(bi.transpose() * bj));
      accumulate(e.j, e.i, -(bj.transpose() * bi));
    }
    for (const auto& e : snap.ta_edges) {
      const BlockRow<Dim> bi = kron_row<Dim>(snap.target_local[e.i]);
      accumulate(e.i, e.i, bi.transpose() * bi);
    }
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(blocks.size() * kBlock * kBlock);
  for (const auto& [ij, m] : blocks) {
    for (int c = 0; c < kBlock; ++c)
      for (int r = 0; r < kBlock; ++r)
        if (m(r, c) != 0.0) triplets.emplace_back(ij.first * kBlock + r, ij.second * kBlock + c, m(r, c));
  }
  const int size = data.n_targets * kBlock;
  Eigen::SparseMatrix<double> gram(size, size);
  gram.setFromTriplets(triplets.begin(), triplets.end());
  return gram;
}

template <int Dim>
Eigen::VectorXd assemble_rhs(const ProjectionSet<Dim>& proj, const NetworkDataset<Dim>& data) {
  constexpr int kBlock = Dim * (Dim + 1);
  if (proj.size() != data.snapshots.size()) {
    throw UsageError("assemble_rhs: one projection slice per snapshot required");
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(data.n_targets * kBlock);
  for (std::size_t s = 0; s < data.snapshots.size(); ++s) {
    const auto& snap = data.snapshots[s];
    // y_hat_i = sum_j (y_ij - y_ji) + sum_a y_ia, then E^T y block = B_i^T y_hat_i.
    std::vector<Vec<Dim>> y_hat(data.n_targets, Vec<Dim>::Zero());
    for (std::size_t k = 0; k < snap.tt_edges.size(); ++k) {
      const auto& e = snap.tt_edges[k];
      y_hat[e.i] += proj[s].y_tt[k];
      y_hat[e.j] -= proj[s].y_tt[k];
    }
    for (std::size_t k = 0; k < snap.ta_edges.size(); ++k) {
      y_hat[snap.ta_edges[k].i] += proj[s].y_ta[k];
    }
    for (int i = 0; i < data.n_targets; ++i) {
      const Vec<Dim>& p = snap.target_local[i];
      auto seg = rhs.segment<kBlock>(i * kBlock);
      for (int r = 0; r < Dim; ++r) seg.template segment<Dim>(r * Dim) += y_hat[i](r) * p;
      seg.template tail<Dim>() += y_hat[i];
    }
  }
  return rhs;
}

template <int Dim>
NormalEquations assemble_normal_equations(const ProjectionSet<Dim>& proj,
                                          const NetworkDataset<Dim>& data) {
  NormalEquations ne;
  ne.n_targets = data.n_targets;
  ne.block_size = Dim * (Dim + 1);
  ne.gram = assemble_gram(data);
  ne.rhs = assemble_rhs(proj, data);
  return ne;
}

// ---------------------------------------------------------------------------

template <int Dim>
struct LeastSquaresMaster<Dim>::Factorization {
  std::variant<Eigen::LDLT<Eigen::MatrixXd>, Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>
      solver;
  Eigen::SparseMatrix<double> gram;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> translation_solver;
  std::vector<Mat<Dim>> moments;
};

namespace {

[[noreturn]] void throw_unidentifiable(std::vector<int> targets, const std::string& reason) {
  std::string names;
  for (int t : targets) names += (names.empty() ? "" : ", ") + std::to_string(t);
  throw IdentifiabilityError("targets not identifiable (" + reason + "): " + names,
                             std::move(targets));
}

}  // namespace

template <int Dim>
LeastSquaresMaster<Dim>::LeastSquaresMaster(const Eigen::SparseMatrix<double>& gram,
                                            int n_targets)
    : n_targets_(n_targets), fact_(std::make_unique<Factorization>()) {
  if (gram.rows() != n_targets * kBlock || gram.cols() != gram.rows()) {
    throw UsageError("LeastSquaresMaster: Gram matrix size does not match target count");
  }
  // Targets that never appear in any edge.
  std::vector<double> diag_norm(n_targets, 0.0);
  for (int c = 0; c < gram.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(gram, c); it; ++it)
      if (it.row() / kBlock == c / kBlock) diag_norm[c / kBlock] += it.value() * it.value();
  std::vector<int> isolated;
  for (int i = 0; i < n_targets; ++i)
    if (diag_norm[i] == 0.0) isolated.push_back(i);
  if (!isolated.empty()) throw_unidentifiable(std::move(isolated), "no measurements");

  if (n_targets < kDenseBelow) {
    const Eigen::MatrixXd dense(gram);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
    const auto& values = eig.eigenvalues();
    const double largest = values(values.size() - 1);
    if (!(values(0) > largest / kMaxCondition)) {
      std::vector<bool> hit(n_targets, false);
      for (int k = 0; k < values.size() && !(values(k) > largest / kMaxCondition); ++k) {
        const Eigen::VectorXd v = eig.eigenvectors().col(k);
        for (int i = 0; i < n_targets; ++i)
          if (v.segment(i * kBlock, kBlock).norm() > 1e-3) hit[i] = true;
      }
      std::vector<int> offending;
      for (int i = 0; i < n_targets; ++i)
        if (hit[i]) offending.push_back(i);
      throw_unidentifiable(std::move(offending), "normal equations ill-conditioned");
    }
    fact_->solver.template emplace<0>(dense);
  } else {
    auto& ldlt = fact_->solver.template emplace<1>();
    ldlt.compute(gram);
    if (ldlt.info() != Eigen::Success) {
      std::vector<int> all(n_targets);
      for (int i = 0; i < n_targets; ++i) all[i] = i;
      throw_unidentifiable(std::move(all), "factorization failed");
    }
    const Eigen::VectorXd d = ldlt.vectorD();
    const double largest = d.cwiseAbs().maxCoeff();
    const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> inverse =
        ldlt.permutationP().inverse();
    std::vector<bool> hit(n_targets, false);
    for (int k = 0; k < d.size(); ++k) {
      if (!(d(k) > largest / kMaxCondition)) hit[inverse.indices()(k) / kBlock] = true;
    }
    std::vector<int> offending;
    for (int i = 0; i < n_targets; ++i)
      if (hit[i]) offending.push_back(i);
    if (!offending.empty()) {
      throw_unidentifiable(std::move(offending), "normal equations ill-conditioned");
    }
  }
  prepare_refit(gram);
}

template <int Dim>
void LeastSquaresMaster<Dim>::prepare_refit(const Eigen::SparseMatrix<double>& gram) {
  fact_->gram = gram;
  fact_->moments.resize(n_targets_);
  std::vector<Eigen::Triplet<double>> tt;
  for (int c = 0; c < gram.outerSize(); ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(gram, c); it; ++it) {
      const int rr = static_cast<int>(it.row()) % kBlock;
      const int cc = c % kBlock;
      if (rr >= Dim * Dim && cc >= Dim * Dim) {
        tt.emplace_back(static_cast<int>(it.row()) / kBlock * Dim + rr - Dim * Dim,
                        c / kBlock * Dim + cc - Dim * Dim, it.value());
      }
    }
  }
  Eigen::SparseMatrix<double> q_tt(n_targets_ * Dim, n_targets_ * Dim);
  q_tt.setFromTriplets(tt.begin(), tt.end());
  fact_->translation_solver.compute(q_tt);
  if (fact_->translation_solver.info() != Eigen::Success) {
    std::vector<int> all(n_targets_);
    for (int i = 0; i < n_targets_; ++i) all[i] = i;
    throw_unidentifiable(std::move(all), "translation block singular");
  }
  // Diagonal block of target i: [I (x) M, I (x) m; I (x) m^T, n I].
  for (int i = 0; i < n_targets_; ++i) {
    const int o = i * kBlock;
    Mat<Dim> m2;
    Vec<Dim> m1;
    for (int a = 0; a < Dim; ++a) {
      for (int b = 0; b < Dim; ++b) m2(a, b) = gram.coeff(o + a, o + b);
      m1(a) = gram.coeff(o + a, o + Dim * Dim);
    }
    const double n = gram.coeff(o + Dim * Dim, o + Dim * Dim);
    fact_->moments[i] = m2 - m1 * m1.transpose() / n;
  }
}

template <int Dim>
const Mat<Dim>& LeastSquaresMaster<Dim>::local_moment(int i) const {
  return fact_->moments.at(i);
}

template <int Dim>
std::vector<Vec<Dim>> LeastSquaresMaster<Dim>::refit_translations(
    const std::vector<Mat<Dim>>& rotations, const Eigen::VectorXd& rhs) const {
  if (static_cast<int>(rotations.size()) != n_targets_) {
    throw UsageError("refit_translations: one rotation per target required");
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n_targets_ * kBlock);
  for (int i = 0; i < n_targets_; ++i)
    for (int r = 0; r < Dim; ++r)
      x.segment<Dim>(i * kBlock + r * Dim) = rotations[i].row(r).transpose();
  const Eigen::VectorXd residual = rhs - fact_->gram * x;
  Eigen::VectorXd b(n_targets_ * Dim);
  for (int i = 0; i < n_targets_; ++i)
    b.segment<Dim>(i * Dim) = residual.segment<Dim>(i * kBlock + Dim * Dim);
  const Eigen::VectorXd t = fact_->translation_solver.solve(b);
  std::vector<Vec<Dim>> out(n_targets_);
  for (int i = 0; i < n_targets_; ++i) out[i] = t.segment<Dim>(i * Dim);
  return out;
}

template <int Dim>
LeastSquaresMaster<Dim>::~LeastSquaresMaster() = default;
template <int Dim>
LeastSquaresMaster<Dim>::LeastSquaresMaster(LeastSquaresMaster&&) noexcept = default;
template <int Dim>
LeastSquaresMaster<Dim>& LeastSquaresMaster<Dim>::operator=(LeastSquaresMaster&&) noexcept =
    default;

template <int Dim>
Eigen::VectorXd LeastSquaresMaster<Dim>::solve_stacked(const Eigen::VectorXd& rhs) const {
  return std::visit([&](const auto& s) -> Eigen::VectorXd { return s.solve(rhs); },
                    fact_->solver);
}

template <int Dim>
AffineEstimate<Dim> LeastSquaresMaster<Dim>::solve(const Eigen::VectorXd& rhs) const {
  const Eigen::VectorXd x = solve_stacked(rhs);
  AffineEstimate<Dim> est;
  est.z.resize(n_targets_);
  est.translation.resize(n_targets_);
  for (int i = 0; i < n_targets_; ++i) {
    const auto xi = x.segment<kBlock>(i * kBlock);
    for (int r = 0; r < Dim; ++r) est.z[i].row(r) = xi.template segment<Dim>(r * Dim).transpose();
    est.translation[i] = xi.template tail<Dim>();
  }
  return est;
}

template <int Dim>
AffineEstimate<Dim> solve_unconstrained_ls(const NormalEquations& ne) {
  if (ne.block_size != Dim * (Dim + 1)) throw UsageError("normal equations have wrong block size");
  return LeastSquaresMaster<Dim>(ne.gram, ne.n_targets).solve(ne.rhs);
}

namespace {

template <int Dim>
PoseSet<Dim> gauss_seidel_sweep(PoseSet<Dim> poses, const ProjectionSet<Dim>& proj,
                                const NetworkDataset<Dim>& data);

}  // namespace

template <int Dim>
PoseSet<Dim> ppa_multi_iterate(const PoseSet<Dim>& poses, const NetworkDataset<Dim>& data,
                               const LeastSquaresMaster<Dim>& master, MasterRule rule) {
  const auto proj = project_all_edges(poses, data);
  const Eigen::VectorXd rhs = assemble_rhs(proj, data);
  const auto est = master.solve(rhs);
  PoseSet<Dim> next(poses.size());
  if (rule == MasterRule::kPlainProjection) {
    for (std::size_t i = 0; i < poses.size(); ++i) {
      next[i].rotation = project_onto_rotation_group<Dim>(est.z[i]);
      next[i].translation = est.translation[i];
    }
    return next;
  }
  std::vector<Mat<Dim>> rotations(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Mat<Dim> weighted = est.z[i] * master.local_moment(static_cast<int>(i));
    const Eigen::JacobiSVD<Mat<Dim>> svd(weighted);
    const auto& sv = svd.singularValues();
    const bool degenerate = !(sv(0) > 0.0) || !(sv(Dim - 2) > 1e-12 * sv(0));
    rotations[i] = degenerate ? poses[i].rotation : project_onto_rotation_group<Dim>(weighted);
  }
  const auto translations = master.refit_translations(rotations, rhs);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    next[i].rotation = rotations[i];
    next[i].translation = translations[i];
  }
  if (composite_objective(next, proj, data) <= composite_objective(poses, proj, data)) return next;
  return gauss_seidel_sweep(poses, proj, data);
}

namespace {

template <int Dim, typename Step>
MultiResult<Dim> iterate_until(const NetworkDataset<Dim>& data, const PoseSet<Dim>& init,
                               const StoppingRule& stop, Step&& step) {
  if (static_cast<int>(init.size()) != data.n_targets) {
    throw UsageError("initial pose count differs from target count");
  }
  MultiResult<Dim> result;
  result.poses = init;
  double current = composite_objective(result.poses, project_all_edges(result.poses, data), data);
  result.trace.push_back(current);
  while (result.iterations < stop.max_iterations && current > 0.0) {
    result.poses = step(result.poses);
    const double previous = current;
    current = composite_objective(result.poses, project_all_edges(result.poses, data), data);
    ++result.iterations;
    result.trace.push_back(current);
    if (stop.relative_tolerance > 0.0 &&
        std::abs(previous - current) <= stop.relative_tolerance * previous) {
      break;
    }
  }
  return result;
}

}  // namespace

template <int Dim>
MultiResult<Dim> ppa_multi_solve(const NetworkDataset<Dim>& data, const PoseSet<Dim>& init,
                                 const StoppingRule& stop, MasterRule rule) {
  const LeastSquaresMaster<Dim> master(assemble_gram(data), data.n_targets);
  return iterate_until<Dim>(data, init, stop, [&](const PoseSet<Dim>& poses) {
    return ppa_multi_iterate(poses, data, master, rule);
  });
}

// ---------------------------------------------------------------------------

template <int Dim>
RigidFit<Dim> jacobi_fit(std::span<const JacobiPair<Dim>> pairs, const Pose<Dim>& current) {
  if (pairs.empty()) return {current, true};
  std::vector<Vec<Dim>> y(pairs.size());
  std::vector<Vec<Dim>> p(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    y[k] = pairs[k].target;
    p[k] = pairs[k].p_local;
  }
  return rigid_fit<Dim>(y, p, current.rotation);
}

namespace {

/// Edge indices touching each target, per snapshot: outgoing target edges
/// sorted by neighbour, incoming ones sorted by neighbour, then anchor edges
/// sorted by anchor. This order is shared with the distributed solver.
struct Incidence {
  struct Slice {
    std::vector<int> out;
    std::vector<int> in;
    std::vector<int> anchor;
  };
  std::vector<std::vector<Slice>> slices;  ///< [target][snapshot]
};

template <int Dim>
Incidence build_incidence(const NetworkDataset<Dim>& data) {
  Incidence inc;
  inc.slices.assign(data.n_targets, std::vector<Incidence::Slice>(data.snapshots.size()));
  for (std::size_t s = 0; s < data.snapshots.size(); ++s) {
    const auto& snap = data.snapshots[s];
    for (std::size_t k = 0; k < snap.tt_edges.size(); ++k) {
      inc.slices[snap.tt_edges[k].i][s].out.push_back(static_cast<int>(k));
      inc.slices[snap.tt_edges[k].j][s].in.push_back(static_cast<int>(k));
    }
    for (std::size_t k = 0; k < snap.ta_edges.size(); ++k) {
      inc.slices[snap.ta_edges[k].i][s].anchor.push_back(static_cast<int>(k));
    }
    for (int i = 0; i < data.n_targets; ++i) {
      auto& sl = inc.slices[i][s];
      std::stable_sort(sl.out.begin(), sl.out.end(),
                       [&](int a, int b) { return snap.tt_edges[a].j < snap.tt_edges[b].j; });
      std::stable_sort(sl.in.begin(), sl.in.end(),
                       [&](int a, int b) { return snap.tt_edges[a].i < snap.tt_edges[b].i; });
      std::stable_sort(sl.anchor.begin(), sl.anchor.end(),
                       [&](int a, int b) { return snap.ta_edges[a].a < snap.ta_edges[b].a; });
    }
  }
  return inc;
}

/// Pairs of target i: y_ij + x_j for (i, j), x_j - y_ji for (j, i), y_ia for
/// anchors, where x_j = R_j p_j + T_j.
template <int Dim>
std::vector<JacobiPair<Dim>> node_pairs(int i, const PoseSet<Dim>& poses,
                                        const ProjectionSet<Dim>& proj,
                                        const NetworkDataset<Dim>& data, const Incidence& inc) {
  std::vector<JacobiPair<Dim>> pairs;
  for (std::size_t s = 0; s < data.snapshots.size(); ++s) {
    const auto& snap = data.snapshots[s];
    const auto& sl = inc.slices[i][s];
    const Vec<Dim>& p_i = snap.target_local[i];
    for (int k : sl.out) {
      const int j = snap.tt_edges[k].j;
      pairs.push_back({Vec<Dim>(proj[s].y_tt[k] + apply_pose(poses[j], snap.target_local[j])), p_i});
    }
    for (int k : sl.in) {
      const int j = snap.tt_edges[k].i;
      pairs.push_back({Vec<Dim>(apply_pose(poses[j], snap.target_local[j]) - proj[s].y_tt[k]), p_i});
    }
    for (int k : sl.anchor) pairs.push_back({proj[s].y_ta[k], p_i});
  }
  return pairs;
}

}  // namespace

namespace {

/// Exact minimization of g over each (R_i, T_i) in turn, later targets seeing
/// the already updated earlier ones. Never increases g at fixed y.
template <int Dim>
PoseSet<Dim> gauss_seidel_sweep(PoseSet<Dim> poses, const ProjectionSet<Dim>& proj,
                                const NetworkDataset<Dim>& data) {
  const Incidence inc = build_incidence(data);
  for (int i = 0; i < data.n_targets; ++i) {
    poses[i] = jacobi_fit<Dim>(node_pairs(i, poses, proj, data, inc), poses[i]).pose;
  }
  return poses;
}

}  // namespace

template <int Dim>
RigidFit<Dim> jacobi_update(int i, const PoseSet<Dim>& poses, const ProjectionSet<Dim>& proj,
                            const NetworkDataset<Dim>& data) {
  if (i < 0 || i >= data.n_targets) throw UsageError("jacobi_update: target index out of range");
  return jacobi_fit<Dim>(node_pairs(i, poses, proj, data, build_incidence(data)), poses[i]);
}

template <int Dim>
PoseSet<Dim> jacobi_iterate(const PoseSet<Dim>& poses, const NetworkDataset<Dim>& data,
                            std::vector<bool>* non_identifiable) {
  const auto proj = project_all_edges(poses, data);
  const Incidence inc = build_incidence(data);
  PoseSet<Dim> next(poses.size());
  if (non_identifiable) non_identifiable->assign(poses.size(), false);
  for (int i = 0; i < data.n_targets; ++i) {
    const auto pairs = node_pairs(i, poses, proj, data, inc);
    next[i] = jacobi_fit<Dim>(pairs, poses[i]).pose;
    if (non_identifiable && pairs.empty()) (*non_identifiable)[i] = true;
  }
  return next;
}

template <int Dim>
MultiResult<Dim> jacobi_solve(const NetworkDataset<Dim>& data, const PoseSet<Dim>& init,
                              const StoppingRule& stop) {
  std::vector<bool> flags;
  auto result = iterate_until<Dim>(data, init, stop, [&](const PoseSet<Dim>& poses) {
    return jacobi_iterate(poses, data, &flags);
  });
  if (flags.empty()) jacobi_iterate(init, data, &flags);
  result.non_identifiable = flags;
  return result;
}

template <int Dim>
PoseSet<Dim> random_poses(int n, std::mt19937_64& rng) {
  PoseSet<Dim> poses;
  poses.reserve(n);
  for (int i = 0; i < n; ++i) poses.push_back(random_pose<Dim>(rng));
  return poses;
}

#define COALIGN_INSTANTIATE(D)                                                                  \
  template class LeastSquaresMaster<D>;                                                         \
  template Vec<D> edge_displacement<D>(const Pose<D>&, const Vec<D>&, const Pose<D>&,           \
                                       const Vec<D>&);                                          \
  template double multi_objective<D>(const PoseSet<D>&, const NetworkDataset<D>&);              \
  template double composite_objective<D>(const PoseSet<D>&, const ProjectionSet<D>&,            \
                                         const NetworkDataset<D>&);                             \
  template ProjectionSlice<D> project_edges<D>(const PoseSet<D>&, const NetworkSnapshot<D>&);   \
  template ProjectionSet<D> project_all_edges<D>(const PoseSet<D>&, const NetworkDataset<D>&);  \
  template Eigen::SparseMatrix<double> assemble_gram<D>(const NetworkDataset<D>&);              \
  template Eigen::VectorXd assemble_rhs<D>(const ProjectionSet<D>&, const NetworkDataset<D>&);  \
  template NormalEquations assemble_normal_equations<D>(const ProjectionSet<D>&,                \
                                                        const NetworkDataset<D>&);              \
  template AffineEstimate<D> solve_unconstrained_ls<D>(const NormalEquations&);                 \
  template PoseSet<D> ppa_multi_iterate<D>(const PoseSet<D>&, const NetworkDataset<D>&,         \
                                           const LeastSquaresMaster<D>&, MasterRule);           \
  template MultiResult<D> ppa_multi_solve<D>(const NetworkDataset<D>&, const PoseSet<D>&,       \
                                             const StoppingRule&, MasterRule);                  \
  template RigidFit<D> jacobi_fit<D>(std::span<const JacobiPair<D>>, const Pose<D>&);           \
  template RigidFit<D> jacobi_update<D>(int, const PoseSet<D>&, const ProjectionSet<D>&,        \
                                        const NetworkDataset<D>&);                              \
  template PoseSet<D> jacobi_iterate<D>(const PoseSet<D>&, const NetworkDataset<D>&,            \
                                        std::vector<bool>*);                                    \
  template MultiResult<D> jacobi_solve<D>(const NetworkDataset<D>&, const PoseSet<D>&,          \
                                          const StoppingRule&);                                 \
  template PoseSet<D> random_poses<D>(int, std::mt19937_64&);

COALIGN_INSTANTIATE(2)
COALIGN_INSTANTIATE(3)

#undef COALIGN_INSTANTIATE

}  // namespace coalign
