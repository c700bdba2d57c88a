#pragma once

// Relative estimation errors, computed element by element without touching
// solver code.

#include <cmath>
#include <vector>

#include "coalign/geometry.hpp"

namespace coalign {

/// ||R_hat - R||_F / ||R||_F.
template <int Dim>
double rotation_error(const Mat<Dim>& estimate, const Mat<Dim>& truth) {
  double num = 0.0;
  double den = 0.0;
  for (int r = 0; r < Dim; ++r) {
    for (int c = 0; c < Dim; ++c) {
      const double d = estimate(r, c) - truth(r, c);
      num += d * d;
      den += truth(r, c) * truth(r, c);
    }
  }
  return std::sqrt(num / den);
}

/// ||T_hat - T|| / ||T||; the absolute error when T = 0.
template <int Dim>
double translation_error(const Vec<Dim>& estimate, const Vec<Dim>& truth) {
  double num = 0.0;
  double den = 0.0;
  for (int k = 0; k < Dim; ++k) {
    num += (estimate(k) - truth(k)) * (estimate(k) - truth(k));
    den += truth(k) * truth(k);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

struct PoseError {
  double rotation = 0.0;
  double translation = 0.0;
};

template <int Dim>
PoseError pose_error(const Pose<Dim>& estimate, const Pose<Dim>& truth) {
  return {rotation_error<Dim>(estimate.rotation, truth.rotation),
          translation_error<Dim>(estimate.translation, truth.translation)};
}

/// Distance between estimated and true global positions, averaged over
/// snapshots.
template <int Dim>
double mean_position_error(const Pose<Dim>& estimate, const Pose<Dim>& truth,
                           const std::vector<Vec<Dim>>& p_local) {
  if (p_local.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : p_local) {
    double sq = 0.0;
    for (int k = 0; k < Dim; ++k) {
      double e = truth.translation(k) - estimate.translation(k);
      for (int c = 0; c < Dim; ++c) e += (truth.rotation(k, c) - estimate.rotation(k, c)) * p(c);
      sq += e * e;
    }
    sum += std::sqrt(sq);
  }
  return sum / static_cast<double>(p_local.size());
}

}  // namespace coalign
