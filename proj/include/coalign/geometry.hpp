#pragma once

// Dimension-generic vectors, rotations and poses, plus the two non-convex
// projections used by every solver: onto a spherical surface and onto SO(d).
//
// Dimension is a compile-time parameter; only Dim = 2 and Dim = 3 are
// instantiated.

#include <Eigen/Core>

#include <random>
#include <span>

namespace coalign {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;

template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;

template <int Dim>
struct Pose {
  Mat<Dim> rotation = Mat<Dim>::Identity();
  Vec<Dim> translation = Vec<Dim>::Zero();

  static Pose identity() { return Pose{}; }
};

/// { y : ||y - center|| = radius }
template <int Dim>
struct SphereSurface {
  Vec<Dim> center = Vec<Dim>::Zero();
  double radius = 0.0;
};

/// R * p + T.
template <int Dim>
Vec<Dim> apply_pose(const Pose<Dim>& pose, const Vec<Dim>& p);

/// Euclidean projection of y onto the sphere surface.
///
/// A zero radius collapses the surface to its center. When y coincides with
/// the center every surface point is equally close; the point
/// center + radius * e_0 is returned so results stay reproducible.
/// Throws UsageError on non-finite input or negative radius.
template <int Dim>
Vec<Dim> project_onto_sphere(const SphereSurface<Dim>& sphere, const Vec<Dim>& y);

/// Nearest rotation to omega in Frobenius norm: U * D * V^T from the SVD
/// omega = U * S * V^T, with D = diag(1, ..., 1, det(U V^T)).
///
/// When the two smallest singular values coincide and a sign flip is needed,
/// the minimizer is not unique and the result is whichever one the SVD routine
/// induces.
template <int Dim>
Mat<Dim> project_onto_rotation_group(const Mat<Dim>& omega);

/// R R^T = I and det R = 1, both within tol.
template <int Dim>
bool is_rotation(const Mat<Dim>& r, double tol = 1e-9);

/// Counter-clockwise planar rotation by theta radians.
Mat<2> rotation_2d(double theta);

/// Uniformly distributed rotation: a uniform angle in 2D, the QR-orthonormalized
/// Gaussian construction (with determinant fix) in 3D.
template <int Dim>
Mat<Dim> random_rotation(std::mt19937_64& rng);
template <>
Mat<2> random_rotation<2>(std::mt19937_64& rng);
template <>
Mat<3> random_rotation<3>(std::mt19937_64& rng);

/// Closed-form minimizer of sum_k w_k ||R p_k + T - y_k||^2 over R in SO(d), T.
template <int Dim>
struct RigidFit {
  Pose<Dim> pose;
  /// The correlation matrix has rank < d - 1, so the rotation is not
  /// identifiable; the fallback rotation was kept.
  bool degenerate = false;
};

/// Builds the fit from weighted first and second moments:
///   mean_y = sum w y / W,  mean_p = sum w p / W,
///   corr = sum w (y - mean_y)(p - mean_p)^T.
/// R = P_SO(corr), T = mean_y - R mean_p. `magnitude` sets the scale for the
/// rank test; pass sqrt(sum w ||y||^2 * sum w ||p||^2).
template <int Dim>
RigidFit<Dim> rigid_fit_from_moments(const Vec<Dim>& mean_y, const Vec<Dim>& mean_p,
                                     const Mat<Dim>& corr, double magnitude,
                                     const Mat<Dim>& fallback_rotation);

/// Unweighted point-pair version. Requires y.size() == p.size() > 0.
template <int Dim>
RigidFit<Dim> rigid_fit(std::span<const Vec<Dim>> y, std::span<const Vec<Dim>> p,
                        const Mat<Dim>& fallback_rotation);

/// Uniform rotation and translation with entries in U(-1, 1).
template <int Dim>
Pose<Dim> random_pose(std::mt19937_64& rng);

}  // namespace coalign
