#include "coalign/simulator.hpp"

#include <cmath>

#include "coalign/errors.hpp"

namespace coalign {

namespace {

enum Stream : std::uint64_t { kPoseStream = 1, kGeometryStream = 2, kNoiseStream = 3 };

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <int Dim>
Vec<Dim> uniform_in_box(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec<Dim> v;
  for (int k = 0; k < Dim; ++k) v(k) = u(rng);
  return v;
}

/// One random-walk step, resampled until it stays in both the wander box
/// around `home` and the area.
template <int Dim>
Vec<Dim> wander(std::mt19937_64& rng, const Vec<Dim>& current, const Vec<Dim>& home,
                const Scenario& sc) {
  std::uniform_real_distribution<double> u(-sc.step, sc.step);
  for (;;) {
    Vec<Dim> next = current;
    for (int k = 0; k < Dim; ++k) next(k) += u(rng);
    const bool inside = ((next - home).cwiseAbs().array() <= sc.wander_half_width).all() &&
                        (next.array() >= sc.area_lo).all() && (next.array() <= sc.area_hi).all();
    if (inside) return next;
  }
}

template <int Dim>
void check_dim(const Scenario& sc) {
  if (sc.dim != Dim) {
    throw UsageError("scenario dimension " + std::to_string(sc.dim) + " used as " +
                     std::to_string(Dim) + "D");
  }
}

double noisy_range(double distance, double sigma, std::mt19937_64& noise) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  return std::max(0.0, distance + sigma * gauss(noise));
}

}  // namespace

double sigma_from_snr(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return kMeanRange / std::pow(10.0, snr_db / 20.0);
}

void Scenario::validate() const {
  if (dim != 2 && dim != 3) throw UsageError("dimension must be 2 or 3");
  if (!(area_hi > area_lo)) throw UsageError("area upper bound must exceed lower bound");
  if (n_targets < 1) throw UsageError("need at least one target");
  if (tbar < 1) throw UsageError("tbar must be >= 1");
  if (std::isnan(snr_db) || !(snr_db > 0.0)) {
    throw UsageError("SNR must be positive dB (noise below the mean range); got " +
                     std::to_string(snr_db));
  }
  if (!(comm_radius > 0.0)) throw UsageError("communication radius must be positive");
  if (!(wander_half_width >= 0.0)) throw UsageError("wander half width must be >= 0");
  if (!(step > 0.0)) throw UsageError("random-walk step must be positive");
  for (const auto& a : anchors) {
    if (static_cast<int>(a.size()) != dim) throw UsageError("anchor dimension mismatch");
    for (double c : a)
      if (!(c >= area_lo && c <= area_hi)) throw UsageError("anchor outside the area");
  }
}

Scenario Scenario::two_node(double snr_db, int tbar, std::uint64_t seed) {
  Scenario sc;
  sc.snr_db = snr_db;
  sc.tbar = tbar;
  sc.seed = seed;
  return sc;
}

Scenario Scenario::corner_anchor_network() {
  Scenario sc;
  sc.n_targets = 110;
  sc.anchors = {{2, 2}, {2, 8}, {8, 2}, {8, 8}};
  sc.comm_radius = 1.0;
  sc.snr_db = 100.0;
  sc.tbar = 25;
  return sc;
}

std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

std::uint64_t trial_seed(std::uint64_t base, std::uint64_t trial) {
  return splitmix64(base ^ splitmix64(trial));
}

template <int Dim>
std::pair<TwoNodeDataset<Dim>, GroundTruth<Dim>> generate_two_node(const Scenario& sc) {
  check_dim<Dim>(sc);
  sc.validate();
  auto pose_rng = derive_rng(sc.seed, kPoseStream);
  auto geom = derive_rng(sc.seed, kGeometryStream);
  auto noise = derive_rng(sc.seed, kNoiseStream);
  const double sigma = sc.noise_sigma();

  GroundTruth<Dim> truth;
  truth.poses.push_back(random_pose<Dim>(pose_rng));
  const Pose<Dim>& pose = truth.poses.front();
  TwoNodeDataset<Dim> data;
  for (int t = 1; t <= sc.tbar; ++t) {
    const Vec<Dim> anchor = uniform_in_box<Dim>(geom, sc.area_lo, sc.area_hi);
    const Vec<Dim> target = uniform_in_box<Dim>(geom, sc.area_lo, sc.area_hi);
    MeasurementRecord<Dim> rec;
    rec.t = t;
    rec.p_anchor = anchor;
    rec.p_local = pose.rotation.transpose() * (target - pose.translation);
    rec.range = noisy_range((target - anchor).norm(), sigma, noise);
    data.records.push_back(rec);
    truth.target_global.push_back({target});
    truth.anchor_global.push_back({anchor});
  }
  return {std::move(data), std::move(truth)};
}

template <int Dim>
std::pair<NetworkDataset<Dim>, GroundTruth<Dim>> generate_network(const Scenario& sc) {
  check_dim<Dim>(sc);
  sc.validate();
  auto pose_rng = derive_rng(sc.seed, kPoseStream);
  auto geom = derive_rng(sc.seed, kGeometryStream);
  auto noise = derive_rng(sc.seed, kNoiseStream);
  const double sigma = sc.noise_sigma();
  const int n = sc.n_targets;
  const int r = static_cast<int>(sc.anchors.size());

  GroundTruth<Dim> truth;
  truth.poses = random_poses<Dim>(n, pose_rng);

  std::vector<Vec<Dim>> target_home(n);
  for (auto& p : target_home) p = uniform_in_box<Dim>(geom, sc.area_lo, sc.area_hi);
  std::vector<Vec<Dim>> anchor_home(r);
  for (int a = 0; a < r; ++a)
    for (int k = 0; k < Dim; ++k) anchor_home[a](k) = sc.anchors[a][k];

  std::vector<Vec<Dim>> targets = target_home;
  std::vector<Vec<Dim>> anchors = anchor_home;
  std::vector<TargetEdge> fixed_tt;
  std::vector<AnchorEdge> fixed_ta;

  NetworkDataset<Dim> data;
  data.n_targets = n;
  data.n_anchors = r;
  for (int t = 1; t <= sc.tbar; ++t) {
    if (t > 1) {
      for (int i = 0; i < n; ++i) targets[i] = wander<Dim>(geom, targets[i], target_home[i], sc);
      if (sc.anchors_move) {
        for (int a = 0; a < r; ++a) anchors[a] = wander<Dim>(geom, anchors[a], anchor_home[a], sc);
      }
    }
    truth.target_global.push_back(targets);
    truth.anchor_global.push_back(anchors);

    std::vector<TargetEdge> tt;
    std::vector<AnchorEdge> ta;
    if (sc.fixed_graph && t > 1) {
      tt = fixed_tt;
      ta = fixed_ta;
    } else {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (i != j && (targets[i] - targets[j]).norm() <= sc.comm_radius) tt.push_back({i, j, 0.0});
        }
        for (int a = 0; a < r; ++a) {
          if ((targets[i] - anchors[a]).norm() <= sc.comm_radius) ta.push_back({i, a, 0.0});
        }
      }
      if (t == 1) {
        fixed_tt = tt;
        fixed_ta = ta;
      }
    }
    for (auto& e : tt) e.range = noisy_range((targets[e.i] - targets[e.j]).norm(), sigma, noise);
    for (auto& e : ta) e.range = noisy_range((targets[e.i] - anchors[e.a]).norm(), sigma, noise);

    NetworkSnapshot<Dim> snap;
    snap.t = t;
    snap.target_local.resize(n);
    for (int i = 0; i < n; ++i) {
      snap.target_local[i] =
          truth.poses[i].rotation.transpose() * (targets[i] - truth.poses[i].translation);
    }
    snap.anchor_global = anchors;
    snap.tt_edges = std::move(tt);
    snap.ta_edges = std::move(ta);
    data.snapshots.push_back(std::move(snap));
  }
  return {std::move(data), std::move(truth)};
}

template <int Dim>
std::vector<double> true_ranges(const TwoNodeDataset<Dim>& data, const GroundTruth<Dim>& truth) {
  std::vector<double> ranges;
  ranges.reserve(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    const Vec<Dim> target = apply_pose(truth.poses.front(), data.records[k].p_local);
    ranges.push_back((target - truth.anchor_global[k].front()).norm());
  }
  return ranges;
}

std::vector<int> anchor_measurement_histogram(const std::vector<int>& counts) {
  std::vector<int> bins(6, 0);
  for (int c : counts) {
    if (c == 0) ++bins[0];
    else if (c <= 5) ++bins[1];
    else if (c <= 10) ++bins[2];
    else if (c <= 15) ++bins[3];
    else if (c <= 20) ++bins[4];
    else ++bins[5];
  }
  return bins;
}

template std::pair<TwoNodeDataset<2>, GroundTruth<2>> generate_two_node<2>(const Scenario&);
template std::pair<TwoNodeDataset<3>, GroundTruth<3>> generate_two_node<3>(const Scenario&);
template std::pair<NetworkDataset<2>, GroundTruth<2>> generate_network<2>(const Scenario&);
template std::pair<NetworkDataset<3>, GroundTruth<3>> generate_network<3>(const Scenario&);
template std::vector<double> true_ranges<2>(const TwoNodeDataset<2>&, const GroundTruth<2>&);
template std::vector<double> true_ranges<3>(const TwoNodeDataset<3>&, const GroundTruth<3>&);

}  // namespace coalign
