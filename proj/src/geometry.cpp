#include "coalign/geometry.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>

#include "coalign/errors.hpp"

namespace coalign {

template <int Dim>
Vec<Dim> apply_pose(const Pose<Dim>& pose, const Vec<Dim>& p) {
  return pose.rotation * p + pose.translation;
}

template <int Dim>
Vec<Dim> project_onto_sphere(const SphereSurface<Dim>& sphere, const Vec<Dim>& y) {
  if (!y.allFinite() || !sphere.center.allFinite() || !std::isfinite(sphere.radius)) {
    throw UsageError("project_onto_sphere: non-finite input");
  }
  if (sphere.radius < 0.0) {
    throw UsageError("project_onto_sphere: negative radius");
  }
  if (sphere.radius == 0.0) {
    return sphere.center;
  }
  const Vec<Dim> offset = y - sphere.center;
  const double dist = offset.norm();
  if (dist == 0.0) {
    return sphere.center + sphere.radius * Vec<Dim>::Unit(0);
  }
  if (dist == sphere.radius) {
    return y;
  }
  return sphere.center + (sphere.radius / dist) * offset;
}

template <int Dim>
Mat<Dim> project_onto_rotation_group(const Mat<Dim>& omega) {
  if (!omega.allFinite()) {
    throw UsageError("project_onto_rotation_group: non-finite input");
  }
  const Eigen::JacobiSVD<Mat<Dim>> svd(omega, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat<Dim>& u = svd.matrixU();
  const Mat<Dim>& v = svd.matrixV();
  Vec<Dim> d = Vec<Dim>::Ones();
  if ((u * v.transpose()).determinant() < 0.0) {
    d(Dim - 1) = -1.0;
  }
  return u * d.asDiagonal() * v.transpose();
}

template <int Dim>
bool is_rotation(const Mat<Dim>& r, double tol) {
  if (!r.allFinite()) return false;
  return (r * r.transpose() - Mat<Dim>::Identity()).norm() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

Mat<2> rotation_2d(double theta) {
  Mat<2> r;
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

template <>
Mat<2> random_rotation<2>(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  return rotation_2d(angle(rng));
}

template <>
Mat<3> random_rotation<3>(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat<3> g;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) g(r, c) = gauss(rng);
  const Eigen::HouseholderQR<Mat<3>> qr(g);
  Mat<3> q = qr.householderQ();
  // Sign-normalize so Q is Haar distributed, then force det = +1.
  const Mat<3> upper = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < 3; ++c) {
    if (upper(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  if (q.determinant() < 0.0) q.col(2) = -q.col(2);
  return q;
}

template <int Dim>
Pose<Dim> random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Pose<Dim> pose;
  pose.rotation = random_rotation<Dim>(rng);
  for (int k = 0; k < Dim; ++k) pose.translation(k) = unit(rng);
  return pose;
}

template <int Dim>
RigidFit<Dim> rigid_fit_from_moments(const Vec<Dim>& mean_y, const Vec<Dim>& mean_p,
                                     const Mat<Dim>& corr, double magnitude,
                                     const Mat<Dim>& fallback_rotation) {
  RigidFit<Dim> fit;
  const Eigen::JacobiSVD<Mat<Dim>> svd(corr);
  const auto& sv = svd.singularValues();
  // Rotation is unique iff rank(corr) >= d - 1.
  const double tol = 1e-12 * magnitude;
  if (!(sv(0) > tol) || !(sv(Dim - 2) > tol)) {
    fit.degenerate = true;
    fit.pose.rotation = fallback_rotation;
  } else {
    fit.pose.rotation = project_onto_rotation_group<Dim>(corr);
  }
  fit.pose.translation = mean_y - fit.pose.rotation * mean_p;
  return fit;
}

template <int Dim>
RigidFit<Dim> rigid_fit(std::span<const Vec<Dim>> y, std::span<const Vec<Dim>> p,
                        const Mat<Dim>& fallback_rotation) {
  if (y.size() != p.size() || y.empty()) {
    throw UsageError("rigid_fit: point sets must be nonempty and equally sized");
  }
  const double n = static_cast<double>(y.size());
  Vec<Dim> mean_y = Vec<Dim>::Zero();
  Vec<Dim> mean_p = Vec<Dim>::Zero();
  double sq_y = 0.0;
  double sq_p = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    mean_y += y[k];
    mean_p += p[k];
    sq_y += y[k].squaredNorm();
    sq_p += p[k].squaredNorm();
  }
  mean_y /= n;
  mean_p /= n;
  Mat<Dim> corr = Mat<Dim>::Zero();
  for (std::size_t k = 0; k < y.size(); ++k) {
    corr += (y[k] - mean_y) * (p[k] - mean_p).transpose();
  }
  return rigid_fit_from_moments<Dim>(mean_y, mean_p, corr, std::sqrt(sq_y * sq_p),
                                     fallback_rotation);
}

#define COALIGN_INSTANTIATE(D)                                                         \
  template Vec<D> apply_pose<D>(const Pose<D>&, const Vec<D>&);                        \
  template Vec<D> project_onto_sphere<D>(const SphereSurface<D>&, const Vec<D>&);      \
  template Mat<D> project_onto_rotation_group<D>(const Mat<D>&);                       \
  template bool is_rotation<D>(const Mat<D>&, double);                                 \
  template Pose<D> random_pose<D>(std::mt19937_64&);                                   \
  template RigidFit<D> rigid_fit_from_moments<D>(const Vec<D>&, const Vec<D>&,         \
                                                 const Mat<D>&, double, const Mat<D>&); \
  template RigidFit<D> rigid_fit<D>(std::span<const Vec<D>>, std::span<const Vec<D>>,  \
                                    const Mat<D>&);

COALIGN_INSTANTIATE(2)
COALIGN_INSTANTIATE(3)

#undef COALIGN_INSTANTIATE

}  // namespace coalign
