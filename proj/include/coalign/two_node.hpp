#pragma once

// Localizing one target node against one anchor node.
//
// The least-squares problem
//   minimize sum_t (r(t) - ||R p_l(t) + T - p_g(t)||)^2,  R in SO(d)
// is rewritten with auxiliary points y(t) constrained to the range spheres
// S(t) = { y : ||y - p_g(t)|| = r(t) }, and solved by block coordinate
// descent: project every R p_l(t) + T onto its sphere, then refit (R, T) in
// closed form (batch PPA). RPA performs a single projection per incoming
// record and keeps running moments instead of the whole history.

#include <deque>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coalign/geometry.hpp"

namespace coalign {

template <int Dim>
struct MeasurementRecord {
  int t = 1;
  Vec<Dim> p_local = Vec<Dim>::Zero();   ///< target position in its own frame
  Vec<Dim> p_anchor = Vec<Dim>::Zero();  ///< anchor position, global frame
  double range = 0.0;

  SphereSurface<Dim> sphere() const { return {p_anchor, range}; }
};

template <int Dim>
struct TwoNodeDataset {
  std::vector<MeasurementRecord<Dim>> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  /// Throws UsageError unless nonempty, ranges >= 0, entries finite and t
  /// strictly increasing.
  void validate() const;

  /// Set when the record count is below what a unique 3D solution needs (7).
  std::optional<std::string> solvability_warning() const;
};

/// sum_t (r(t) - ||R p_l(t) + T - p_g(t)||)^2
template <int Dim>
double objective(const Pose<Dim>& pose, const TwoNodeDataset<Dim>& data);

/// g = sum_t ||R p_l(t) + T - y(t)||^2 for given surface points.
template <int Dim>
double surface_objective(const Pose<Dim>& pose, std::span<const Vec<Dim>> surface_points,
                         const TwoNodeDataset<Dim>& data);

/// y(t) = P_S(t)(R p_l(t) + T), independently for every t.
template <int Dim>
std::vector<Vec<Dim>> ppa_project_step(const Pose<Dim>& pose, const TwoNodeDataset<Dim>& data);

/// Exact minimizer of sum_t ||R p_l(t) + T - y(t)||^2 over SO(d) x R^d.
/// When the correlation matrix is rank deficient `fallback_rotation` is kept
/// and the result is flagged degenerate.
template <int Dim>
RigidFit<Dim> ppa_master_update(std::span<const Vec<Dim>> surface_points,
                                const TwoNodeDataset<Dim>& data,
                                const Mat<Dim>& fallback_rotation = Mat<Dim>::Identity());

struct StoppingRule {
  int max_iterations = 1000;
  /// Stop once (g_prev - g) <= relative_tolerance * g_prev. Zero disables.
  double relative_tolerance = 1e-10;
};

template <int Dim>
struct PpaState {
  Pose<Dim> pose;
  std::vector<Vec<Dim>> surface_points;
  int iteration = 0;
  double objective = 0.0;
  bool degenerate = false;  ///< some master update hit a rank-deficient correlation
};

template <int Dim>
struct PpaResult {
  PpaState<Dim> state;
  /// g(q^k) for k = 0..iteration, where q^k pairs pose k with its projections.
  std::vector<double> trace;
};

/// Batch parallel projection algorithm.
template <int Dim>
PpaResult<Dim> ppa_solve(const TwoNodeDataset<Dim>& data, const Pose<Dim>& init,
                         const StoppingRule& stop = {});

/// Runs ppa_solve from `restarts` random poses and keeps the lowest objective.
template <int Dim>
PpaResult<Dim> ppa_solve_multistart(const TwoNodeDataset<Dim>& data, int restarts,
                                    std::mt19937_64& rng, const StoppingRule& stop = {});

// ---------------------------------------------------------------------------
// Recursive projection algorithm

template <int Dim>
struct RpaWindowEntry {
  Vec<Dim> surface_point;
  Vec<Dim> p_local;
  SphereSurface<Dim> sphere;
};

/// Running state of RPA. With discount 1 the moments are the plain averages
/// over every processed record:
///   mean_y = (1/t) sum y(k),  mean_p = (1/t) sum p_l(k),
///   corr = sum (y(k) - mean_y)(p_l(k) - mean_p)^T.
/// With discount a < 1 record k carries weight a^(t-k).
template <int Dim>
struct RpaState {
  Pose<Dim> pose;
  Vec<Dim> mean_y = Vec<Dim>::Zero();
  Vec<Dim> mean_p = Vec<Dim>::Zero();
  Mat<Dim> corr = Mat<Dim>::Zero();
  int t = 0;
  double discount = 1.0;
  /// Weighted sums of squared norms, scale for the rank test.
  double sum_sq_y = 0.0;
  double sum_sq_p = 0.0;
  /// Most recent records, newest last; holds at most the smoothing window.
  std::deque<RpaWindowEntry<Dim>> window;
  bool degenerate = false;  ///< last update kept the previous rotation

  /// Zero moments and the given initial pose. Throws UsageError unless
  /// discount is in (0, 1].
  static RpaState initial(const Pose<Dim>& init, double discount = 1.0);
};

/// One projection of the new record with the previous pose, moment update,
/// closed-form pose refit.
template <int Dim>
RpaState<Dim> rpa_step(RpaState<Dim> state, const MeasurementRecord<Dim>& rec);

/// rpa_step with smoothing over the last `window` records: their surface
/// points are re-projected with the previous pose and the resulting offsets
/// correct the moments before the refit. window = 1 is exactly rpa_step.
template <int Dim>
RpaState<Dim> rpa_smoothed_step(RpaState<Dim> state, const MeasurementRecord<Dim>& rec,
                                int window);

/// Streams every record through rpa_smoothed_step. When `trajectory` is given
/// the pose after each record is appended to it.
template <int Dim>
RpaState<Dim> rpa_run(const TwoNodeDataset<Dim>& data, const Pose<Dim>& init, int window = 1,
                      double discount = 1.0, std::vector<Pose<Dim>>* trajectory = nullptr);

// ---------------------------------------------------------------------------
// Projected gradient baseline

/// M = d/dR sum_t f_t(R, T). Terms whose residual point sits exactly on the
/// anchor contribute zero.
template <int Dim>
Mat<Dim> objective_rotation_gradient(const Pose<Dim>& pose, const TwoNodeDataset<Dim>& data);

/// Projection of M onto the tangent space of SO(d) at R: (M - R M^T R) / 2.
template <int Dim>
Mat<Dim> tangent_projection(const Mat<Dim>& rotation, const Mat<Dim>& gradient);

/// R' = P_SO(R - step * M_T(R)); T' refit in closed form against the
/// projections of R' p_l + T. Throws UsageError for step <= 0.
template <int Dim>
Pose<Dim> gd_baseline_step(const Pose<Dim>& pose, const TwoNodeDataset<Dim>& data, double step);

template <int Dim>
struct GdResult {
  Pose<Dim> pose;
  std::vector<double> trace;  ///< objective before the first and after every step
};

template <int Dim>
GdResult<Dim> gd_solve(const TwoNodeDataset<Dim>& data, const Pose<Dim>& init, double step,
                       int iterations);

}  // namespace coalign
