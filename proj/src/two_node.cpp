#include "coalign/two_node.hpp"

#include <cmath>
#include <limits>

#include "coalign/errors.hpp"

namespace coalign {

template <int Dim>
void TwoNodeDataset<Dim>::validate() const {
  if (records.empty()) throw UsageError("two-node dataset is empty");
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& rec = records[k];
    if (!rec.p_local.allFinite() || !rec.p_anchor.allFinite() || !std::isfinite(rec.range)) {
      throw UsageError("record " + std::to_string(k) + " has non-finite entries");
    }
    if (rec.range < 0.0) throw UsageError("record " + std::to_string(k) + " has negative range");
    if (k > 0 && rec.t <= records[k - 1].t) {
      throw UsageError("record " + std::to_string(k) + ": time index not strictly increasing");
    }
  }
}

template <int Dim>
std::optional<std::string> TwoNodeDataset<Dim>::solvability_warning() const {
  constexpr std::size_t kMinRecords3d = 7;
  if (Dim == 3 && records.size() < kMinRecords3d) {
    return "only " + std::to_string(records.size()) +
           " range measurements; at least 7 are needed for a unique 3D alignment";
  }
  return std::nullopt;
}

template <int Dim>
double objective(const Pose<Dim>& pose, const TwoNodeDataset<Dim>& data) {
  double sum = 0.0;
  for (const auto& rec : data.records) {
    const double res = rec.range - (apply_pose(pose, rec.p_local) - rec.p_anchor).norm();
    sum += res * res;
  }
  return sum;
}

template <int Dim>
double surface_objective(const Pose<Dim>& pose, std::span<const Vec<Dim>> surface_points,
                         const TwoNodeDataset<Dim>& data) {
  if (surface_points.size() != data.size()) {
    throw UsageError("surface_objective: one surface point per record required");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    sum += (apply_pose(pose, data.records[k].p_local) - surface_points[k]).squaredNorm();
  }
  return sum;
}

template <int Dim>
std::vector<Vec<Dim>> ppa_project_step(const Pose<Dim>& pose, const TwoNodeDataset<Dim>& data) {
  std::vector<Vec<Dim>> y(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& rec = data.records[k];
    y[k] = project_onto_sphere(rec.sphere(), apply_pose(pose, rec.p_local));
  }
  return y;
}

template <int Dim>
RigidFit<Dim> ppa_master_update(std::span<const Vec<Dim>> surface_points,
                                const TwoNodeDataset<Dim>& data,
                                const Mat<Dim>& fallback_rotation) {
  if (surface_points.size() != data.size() || data.empty()) {
    throw UsageError("ppa_master_update: one surface point per record required");
  }
  std::vector<Vec<Dim>> p(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) p[k] = data.records[k].p_local;
  return rigid_fit<Dim>(surface_points, p, fallback_rotation);
}

template <int Dim>
PpaResult<Dim> ppa_solve(const TwoNodeDataset<Dim>& data, const Pose<Dim>& init,
                         const StoppingRule& stop) {
  if (data.empty()) throw UsageError("ppa_solve: dataset is empty");
  PpaResult<Dim> result;
  auto& st = result.state;
  st.pose = init;
  st.surface_points = ppa_project_step(st.pose, data);
  st.objective = surface_objective<Dim>(st.pose, st.surface_points, data);
  result.trace.push_back(st.objective);

  while (st.iteration < stop.max_iterations && st.objective > 0.0) {
    const auto fit = ppa_master_update<Dim>(st.surface_points, data, st.pose.rotation);
    st.pose = fit.pose;
    st.degenerate = st.degenerate || fit.degenerate;
    st.surface_points = ppa_project_step(st.pose, data);
    const double previous = st.objective;
    st.objective = surface_objective<Dim>(st.pose, st.surface_points, data);
    ++st.iteration;
    result.trace.push_back(st.objective);
    if (stop.relative_tolerance > 0.0 &&
        previous - st.objective <= stop.relative_tolerance * previous) {
      break;
    }
  }
  return result;
}

template <int Dim>
PpaResult<Dim> ppa_solve_multistart(const TwoNodeDataset<Dim>& data, int restarts,
                                    std::mt19937_64& rng, const StoppingRule& stop) {
  if (restarts < 1) throw UsageError("ppa_solve_multistart: restarts must be >= 1");
  PpaResult<Dim> best;
  for (int r = 0; r < restarts; ++r) {
    auto run = ppa_solve(data, random_pose<Dim>(rng), stop);
    if (r == 0 || run.state.objective < best.state.objective) best = std::move(run);
  }
  return best;
}

// ---------------------------------------------------------------------------

template <int Dim>
RpaState<Dim> RpaState<Dim>::initial(const Pose<Dim>& init, double discount) {
  if (!(discount > 0.0 && discount <= 1.0)) {
    throw UsageError("RPA discount factor must lie in (0, 1]");
  }
  RpaState st;
  st.pose = init;
  st.discount = discount;
  return st;
}

namespace {

/// Weight of the newest record among all processed ones: 1/t, or
/// (1 - a)/(1 - a^t) with discount a.
double newest_weight(double discount, int t) {
  if (discount == 1.0) return 1.0 / t;
  return (1.0 - discount) / (1.0 - std::pow(discount, t));
}

/// Projects the new record with the current pose and folds it into the moments.
template <int Dim>
void absorb_record(RpaState<Dim>& st, const MeasurementRecord<Dim>& rec, int window) {
  const Vec<Dim> y = project_onto_sphere(rec.sphere(), apply_pose(st.pose, rec.p_local));
  st.t += 1;
  const double a = st.discount;
  const double w = newest_weight(a, st.t);
  const Vec<Dim> dy = y - st.mean_y;
  const Vec<Dim> dp = rec.p_local - st.mean_p;
  st.corr = a * st.corr + (1.0 - w) * dy * dp.transpose();
  st.mean_y += w * dy;
  st.mean_p += w * dp;
  st.sum_sq_y = a * st.sum_sq_y + y.squaredNorm();
  st.sum_sq_p = a * st.sum_sq_p + rec.p_local.squaredNorm();
  st.window.push_back({y, rec.p_local, rec.sphere()});
  while (st.window.size() > static_cast<std::size_t>(window)) st.window.pop_front();
}

template <int Dim>
void refit(RpaState<Dim>& st, const Vec<Dim>& mean_y, const Mat<Dim>& corr) {
  const auto fit = rigid_fit_from_moments<Dim>(mean_y, st.mean_p, corr,
                                               std::sqrt(st.sum_sq_y * st.sum_sq_p),
                                               st.pose.rotation);
  st.pose = fit.pose;
  st.degenerate = fit.degenerate;
}

}  // namespace

template <int Dim>
RpaState<Dim> rpa_step(RpaState<Dim> state, const MeasurementRecord<Dim>& rec) {
  absorb_record(state, rec, 1);
  refit(state, state.mean_y, state.corr);
  return state;
}

template <int Dim>
RpaState<Dim> rpa_smoothed_step(RpaState<Dim> state, const MeasurementRecord<Dim>& rec,
                                int window) {
  if (window < 1) throw UsageError("smoothing window must be >= 1");
  const Pose<Dim> previous = state.pose;
  absorb_record(state, rec, window);

  // Offsets of the re-projected window points; older records keep theirs.
  const double a = state.discount;
  const std::size_t count = state.window.size();
  std::vector<Vec<Dim>> offsets(count);
  std::vector<double> weights(count);
  Vec<Dim> weighted_sum = Vec<Dim>::Zero();
  for (std::size_t k = 0; k < count; ++k) {
    const auto& entry = state.window[k];
    const Vec<Dim> reprojected =
        project_onto_sphere(entry.sphere, apply_pose(previous, entry.p_local));
    offsets[k] = reprojected - entry.surface_point;
    weights[k] = std::pow(a, static_cast<double>(count - 1 - k));
    weighted_sum += weights[k] * offsets[k];
  }
  const Vec<Dim> mean_offset = newest_weight(a, state.t) * weighted_sum;
  Mat<Dim> corr = state.corr;
  for (std::size_t k = 0; k < count; ++k) {
    corr += weights[k] * (offsets[k] - mean_offset) *
            (state.window[k].p_local - state.mean_p).transpose();
  }
  refit(state, Vec<Dim>(state.mean_y + mean_offset), corr);
  return state;
}

template <int Dim>
RpaState<Dim> rpa_run(const TwoNodeDataset<Dim>& data, const Pose<Dim>& init, int window,
                      double discount, std::vector<Pose<Dim>>* trajectory) {
  auto state = RpaState<Dim>::initial(init, discount);
  for (const auto& rec : data.records) {
    state = window == 1 ? rpa_step(std::move(state), rec)
                        : rpa_smoothed_step(std::move(state), rec, window);
    if (trajectory) trajectory->push_back(state.pose);
  }
  return state;
}

// ---------------------------------------------------------------------------

template <int Dim>
Mat<Dim> objective_rotation_gradient(const Pose<Dim>& pose, const TwoNodeDataset<Dim>& data) {
  Mat<Dim> grad = Mat<Dim>::Zero();
  for (const auto& rec : data.records) {
    const Vec<Dim> u = apply_pose(pose, rec.p_local) - rec.p_anchor;
    const double dist = u.norm();
    if (dist == 0.0) continue;
    grad += (-2.0 * (rec.range - dist) / dist) * u * rec.p_local.transpose();
  }
  return grad;
}

template <int Dim>
Mat<Dim> tangent_projection(const Mat<Dim>& rotation, const Mat<Dim>& gradient) {
  return 0.5 * (gradient - rotation * gradient.transpose() * rotation);
}

template <int Dim>
Pose<Dim> gd_baseline_step(const Pose<Dim>& pose, const TwoNodeDataset<Dim>& data,
                           double step) {
  if (!(step > 0.0)) throw UsageError("gradient step size must be positive");
  const Mat<Dim> grad = objective_rotation_gradient(pose, data);
  Pose<Dim> next;
  next.rotation = project_onto_rotation_group<Dim>(
      pose.rotation - step * tangent_projection<Dim>(pose.rotation, grad));
  next.translation = pose.translation;
  const auto y = ppa_project_step(next, data);
  Vec<Dim> mean_y = Vec<Dim>::Zero();
  Vec<Dim> mean_p = Vec<Dim>::Zero();
  for (std::size_t k = 0; k < data.size(); ++k) {
    mean_y += y[k];
    mean_p += data.records[k].p_local;
  }
  const double n = static_cast<double>(data.size());
  next.translation = mean_y / n - next.rotation * (mean_p / n);
  return next;
}

template <int Dim>
GdResult<Dim> gd_solve(const TwoNodeDataset<Dim>& data, const Pose<Dim>& init, double step,
                       int iterations) {
  GdResult<Dim> result{init, {objective(init, data)}};
  for (int k = 0; k < iterations; ++k) {
    result.pose = gd_baseline_step(result.pose, data, step);
    result.trace.push_back(objective(result.pose, data));
  }
  return result;
}

#define COALIGN_INSTANTIATE(D)                                                              \
  template struct TwoNodeDataset<D>;                                                        \
  template struct RpaState<D>;                                                              \
  template double objective<D>(const Pose<D>&, const TwoNodeDataset<D>&);                   \
  template double surface_objective<D>(const Pose<D>&, std::span<const Vec<D>>,             \
                                       const TwoNodeDataset<D>&);                           \
  template std::vector<Vec<D>> ppa_project_step<D>(const Pose<D>&, const TwoNodeDataset<D>&); \
  template RigidFit<D> ppa_master_update<D>(std::span<const Vec<D>>,                        \
                                            const TwoNodeDataset<D>&, const Mat<D>&);       \
  template PpaResult<D> ppa_solve<D>(const TwoNodeDataset<D>&, const Pose<D>&,              \
                                     const StoppingRule&);                                  \
  template PpaResult<D> ppa_solve_multistart<D>(const TwoNodeDataset<D>&, int,              \
                                                std::mt19937_64&, const StoppingRule&);     \
  template RpaState<D> rpa_step<D>(RpaState<D>, const MeasurementRecord<D>&);               \
  template RpaState<D> rpa_smoothed_step<D>(RpaState<D>, const MeasurementRecord<D>&, int); \
  template RpaState<D> rpa_run<D>(const TwoNodeDataset<D>&, const Pose<D>&, int, double,    \
                                  std::vector<Pose<D>>*);                                   \
  template Mat<D> objective_rotation_gradient<D>(const Pose<D>&, const TwoNodeDataset<D>&); \
  template Mat<D> tangent_projection<D>(const Mat<D>&, const Mat<D>&);                      \
  template Pose<D> gd_baseline_step<D>(const Pose<D>&, const TwoNodeDataset<D>&, double);   \
  template GdResult<D> gd_solve<D>(const TwoNodeDataset<D>&, const Pose<D>&, double, int);

COALIGN_INSTANTIATE(2)
COALIGN_INSTANTIATE(3)

#undef COALIGN_INSTANTIATE

}  // namespace coalign
