#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "coalign/errors.hpp"
#include "coalign/two_node.hpp"
#include "test_support.hpp"

namespace coalign {
namespace {

using testing::random_two_node;
using testing::rng_for;
using testing::uniform_vec;

/// Direct sum of squared range residuals.
template <int Dim>
double oracle_objective(const Pose<Dim>& pose, const TwoNodeDataset<Dim>& data) {
  double s = 0.0;
  for (const auto& r : data.records) {
    const double d = (pose.rotation * r.p_local + pose.translation - r.p_anchor).norm();
    s += (r.range - d) * (r.range - d);
  }
  return s;
}

TEST(TwoNodeObjective, MatchesDirectSum) {
  auto rng = rng_for(11);
  const auto truth = random_pose<3>(rng);
  const auto data = random_two_node<3>(rng, truth, 15, 0.3);
  const auto pose = random_pose<3>(rng);
  EXPECT_NEAR(objective(pose, data), oracle_objective(pose, data), 1e-10);
  // g at the projections of the pose equals f.
  const auto y = ppa_project_step(pose, data);
  EXPECT_NEAR(surface_objective<3>(pose, y, data), objective(pose, data), 1e-9);
}

TEST(TwoNodeObjective, ZeroAtTruthWithoutNoise) {
  auto rng = rng_for(12);
  const auto truth = random_pose<2>(rng);
  const auto data = random_two_node<2>(rng, truth, 10, 0.0);
  EXPECT_NEAR(objective(truth, data), 0.0, 1e-20);
}

TEST(TwoNodeDatasetCheck, ValidationErrors) {
  TwoNodeDataset<2> data;
  EXPECT_THROW(data.validate(), UsageError);
  MeasurementRecord<2> rec;
  rec.range = -1.0;
  data.records.push_back(rec);
  EXPECT_THROW(data.validate(), UsageError);
  data.records[0].range = 1.0;
  EXPECT_NO_THROW(data.validate());
  data.records.push_back(data.records[0]);
  EXPECT_THROW(data.validate(), UsageError);  // t not increasing
  data.records[1].t = 2;
  data.records[1].p_local(0) = std::nan("");
  EXPECT_THROW(data.validate(), UsageError);
}

TEST(TwoNodeDatasetCheck, SolvabilityWarningIn3d) {
  auto rng = rng_for(13);
  const auto d3 = random_two_node<3>(rng, random_pose<3>(rng), 6, 0.0);
  EXPECT_TRUE(d3.solvability_warning().has_value());
  const auto d3_ok = random_two_node<3>(rng, random_pose<3>(rng), 7, 0.0);
  EXPECT_FALSE(d3_ok.solvability_warning().has_value());
  const auto d2 = random_two_node<2>(rng, random_pose<2>(rng), 3, 0.0);
  EXPECT_FALSE(d2.solvability_warning().has_value());
}

TEST(PpaMasterUpdate, BeatsRandomCandidates) {
  auto rng = rng_for(14);
  for (int inst = 0; inst < 100; ++inst) {
    const auto data = random_two_node<3>(rng, random_pose<3>(rng), 12, 0.5);
    const auto y = ppa_project_step(random_pose<3>(rng), data);
    const auto fit = ppa_master_update<3>(y, data);
    const double best = surface_objective<3>(fit.pose, y, data);
    for (int c = 0; c < 1000; ++c) {
      Pose<3> cand{random_rotation<3>(rng), uniform_vec<3>(rng, -3, 3)};
      ASSERT_LE(best, surface_objective<3>(cand, y, data) + 1e-9);
    }
  }
}

TEST(PpaMasterUpdate, TranslationIsStationary) {
  auto rng = rng_for(15);
  const auto data = random_two_node<2>(rng, random_pose<2>(rng), 9, 0.2);
  const auto y = ppa_project_step(random_pose<2>(rng), data);
  const auto fit = ppa_master_update<2>(y, data);
  const double g0 = surface_objective<2>(fit.pose, y, data);
  for (int k = 0; k < 2; ++k) {
    for (double h : {1e-4, -1e-4}) {
      auto p = fit.pose;
      p.translation(k) += h;
      EXPECT_GT(surface_objective<2>(p, y, data), g0);
    }
  }
}

TEST(Ppa, ObjectiveNeverIncreases) {
  auto rng = rng_for(16);
  for (int run = 0; run < 20; ++run) {
    const auto data = random_two_node<2>(rng, random_pose<2>(rng), 20, 0.4);
    const auto res = ppa_solve(data, random_pose<2>(rng), {300, 0.0});
    ASSERT_EQ(res.trace.size(), 301u);
    for (std::size_t k = 1; k < res.trace.size(); ++k) {
      EXPECT_LE(res.trace[k], res.trace[k - 1] + 1e-12);
    }
    EXPECT_NEAR(res.trace.back(), objective(res.state.pose, data), 1e-9);
  }
}

TEST(Ppa, RecoversNoiselessPose) {
  auto rng = rng_for(17);
  int good = 0;
  for (int run = 0; run < 20; ++run) {
    const auto truth = random_pose<2>(rng);
    const auto data = random_two_node<2>(rng, truth, 10, 0.0);
    const auto res = ppa_solve_multistart(data, 5, rng, {5000, 1e-15});
    if ((res.state.pose.rotation - truth.rotation).norm() < 1e-3) ++good;
  }
  EXPECT_GE(good, 18);
}

TEST(Ppa, TruthIsFixedPointWithoutNoise) {
  auto rng = rng_for(20);
  const auto truth = random_pose<3>(rng);
  const auto data = random_two_node<3>(rng, truth, 12, 0.0);
  const auto res = ppa_solve(data, truth, {50, 0.0});
  for (double g : res.trace) EXPECT_LE(g, 1e-20);
  EXPECT_LE((res.state.pose.rotation - truth.rotation).norm(), 1e-12);
}

TEST(Ppa, StopsOnRelativeTolerance) {
  auto rng = rng_for(18);
  const auto data = random_two_node<2>(rng, random_pose<2>(rng), 20, 0.4);
  const auto res = ppa_solve(data, random_pose<2>(rng), {100000, 1e-6});
  EXPECT_LT(res.state.iteration, 100000);
  EXPECT_EQ(res.trace.size(), static_cast<std::size_t>(res.state.iteration) + 1);
}

TEST(Ppa, MultistartKeepsLowestObjective) {
  auto rng = rng_for(19);
  const auto data = random_two_node<2>(rng, random_pose<2>(rng), 20, 0.4);
  auto rng_a = rng_for(99);
  const auto best = ppa_solve_multistart(data, 6, rng_a, {200, 0.0});
  auto rng_b = rng_for(99);
  for (int r = 0; r < 6; ++r) {
    const auto single = ppa_solve(data, random_pose<2>(rng_b), {200, 0.0});
    EXPECT_LE(best.state.objective, single.state.objective);
  }
  EXPECT_THROW(ppa_solve_multistart(data, 0, rng_a), UsageError);
}

// -------------------------------------------------------------------------
// RPA

/// Batch recomputation of the RPA moments from the projections the stream
/// produced: weights a^(t-k), plain averages for a = 1.
template <int Dim>
void check_against_batch(const TwoNodeDataset<Dim>& data, const Pose<Dim>& init, double a) {
  auto state = RpaState<Dim>::initial(init, a);
  std::vector<Vec<Dim>> ys;
  for (std::size_t t = 1; t <= data.size(); ++t) {
    const auto& rec = data.records[t - 1];
    ys.push_back(project_onto_sphere(rec.sphere(), apply_pose(state.pose, rec.p_local)));
    state = rpa_step(state, rec);
    double wsum = 0.0;
    Vec<Dim> my = Vec<Dim>::Zero(), mp = Vec<Dim>::Zero();
    for (std::size_t k = 0; k < t; ++k) {
      const double w = std::pow(a, static_cast<double>(t - 1 - k));
      wsum += w;
      my += w * ys[k];
      mp += w * data.records[k].p_local;
    }
    my /= wsum;
    mp /= wsum;
    Mat<Dim> corr = Mat<Dim>::Zero();
    for (std::size_t k = 0; k < t; ++k) {
      const double w = std::pow(a, static_cast<double>(t - 1 - k));
      corr += w * (ys[k] - my) * (data.records[k].p_local - mp).transpose();
    }
    ASSERT_LE((state.mean_y - my).norm(), 1e-10) << "t=" << t;
    ASSERT_LE((state.mean_p - mp).norm(), 1e-10) << "t=" << t;
    ASSERT_LE((state.corr - corr).norm(), 1e-10 * std::max(1.0, corr.norm())) << "t=" << t;
  }
}

TEST(Rpa, RecursionMatchesBatchMoments) {
  auto rng = rng_for(21);
  for (int stream = 0; stream < 50; ++stream) {
    const auto data = random_two_node<2>(rng, random_pose<2>(rng), 200, 0.4);
    check_against_batch<2>(data, random_pose<2>(rng), 1.0);
  }
}

TEST(Rpa, DiscountedRecursionMatchesWeightedBatch) {
  auto rng = rng_for(22);
  for (int stream = 0; stream < 10; ++stream) {
    const auto data = random_two_node<3>(rng, random_pose<3>(rng), 100, 0.4);
    check_against_batch<3>(data, random_pose<3>(rng), 0.9);
  }
}

TEST(Rpa, PoseIsClosedFormFitOfMoments) {
  auto rng = rng_for(23);
  const auto data = random_two_node<2>(rng, random_pose<2>(rng), 30, 0.2);
  auto state = RpaState<2>::initial(random_pose<2>(rng));
  for (const auto& rec : data.records) state = rpa_step(state, rec);
  EXPECT_LE((state.pose.rotation - project_onto_rotation_group<2>(state.corr)).norm(), 1e-12);
  EXPECT_LE((state.pose.translation - (state.mean_y - state.pose.rotation * state.mean_p)).norm(),
            1e-12);
}

TEST(Rpa, WindowOneIsPlainStep) {
  auto rng = rng_for(24);
  const auto data = random_two_node<2>(rng, random_pose<2>(rng), 40, 0.3);
  const auto init = random_pose<2>(rng);
  auto a = RpaState<2>::initial(init);
  auto b = RpaState<2>::initial(init);
  for (const auto& rec : data.records) {
    a = rpa_step(a, rec);
    b = rpa_smoothed_step(b, rec, 1);
  }
  EXPECT_EQ(a.pose.rotation, b.pose.rotation);
  EXPECT_EQ(a.pose.translation, b.pose.translation);
}

TEST(Rpa, NoiselessTruthStaysPut) {
  auto rng = rng_for(27);
  const auto truth = random_pose<2>(rng);
  const auto data = random_two_node<2>(rng, truth, 30, 0.0);
  auto plain = RpaState<2>::initial(truth);
  auto smooth = RpaState<2>::initial(truth);
  for (const auto& rec : data.records) {
    plain = rpa_step(plain, rec);
    smooth = rpa_smoothed_step(smooth, rec, 5);
    if (plain.t >= 2) {
      EXPECT_LE((plain.pose.rotation - truth.rotation).norm(), 1e-9);
      EXPECT_LE((plain.pose.translation - truth.translation).norm(), 1e-9);
    }
    EXPECT_LE((smooth.pose.rotation - plain.pose.rotation).norm(), 1e-12);
    EXPECT_LE((smooth.pose.translation - plain.pose.translation).norm(), 1e-12);
  }
}

TEST(Rpa, SmoothingDoesNotHurtMedianError) {
  std::vector<double> err1, err5;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    auto rng = rng_for(1000 + seed);
    const auto truth = random_pose<2>(rng);
    const auto data = random_two_node<2>(rng, truth, 100, 0.41712);
    const auto init = random_pose<2>(rng);
    err1.push_back((rpa_run(data, init, 1).pose.rotation - truth.rotation).norm());
    err5.push_back((rpa_run(data, init, 5).pose.rotation - truth.rotation).norm());
  }
  std::nth_element(err1.begin(), err1.begin() + 100, err1.end());
  std::nth_element(err5.begin(), err5.begin() + 100, err5.end());
  EXPECT_LE(err5[100], err1[100]);
}

TEST(Rpa, SmoothedWindowConvergesWithoutNoise) {
  auto rng = rng_for(25);
  const auto truth = random_pose<2>(rng);
  const auto data = random_two_node<2>(rng, truth, 400, 0.0);
  // Start near the truth so the single-pass estimate stays in its basin.
  Pose<2> init{rotation_2d(0.2) * truth.rotation, truth.translation};
  const auto state = rpa_run(data, init, 5);
  EXPECT_LT((state.pose.rotation - truth.rotation).norm(), 0.05);
}

TEST(Rpa, TrajectoryHasOnePosePerRecord) {
  auto rng = rng_for(26);
  const auto data = random_two_node<2>(rng, random_pose<2>(rng), 17, 0.3);
  std::vector<Pose<2>> path;
  const auto st = rpa_run(data, random_pose<2>(rng), 3, 0.95, &path);
  ASSERT_EQ(path.size(), 17u);
  EXPECT_EQ(path.back().rotation, st.pose.rotation);
  EXPECT_EQ(st.t, 17);
  EXPECT_LE(st.window.size(), 3u);
}

TEST(Rpa, RejectsBadParameters) {
  EXPECT_THROW(RpaState<2>::initial(Pose<2>{}, 0.0), UsageError);
  EXPECT_THROW(RpaState<2>::initial(Pose<2>{}, 1.5), UsageError);
  MeasurementRecord<2> rec;
  rec.range = 1.0;
  EXPECT_THROW(rpa_smoothed_step(RpaState<2>::initial(Pose<2>{}), rec, 0), UsageError);
}

TEST(Rpa, DegenerateRecordsKeepRotation) {
  // One record gives a zero correlation matrix.
  MeasurementRecord<3> rec;
  rec.p_local = Vec<3>(1, 2, 3);
  rec.p_anchor = Vec<3>(4, 4, 4);
  rec.range = 2.0;
  Pose<3> init;
  init.rotation = project_onto_rotation_group<3>(Mat<3>::Random());
  const auto st = rpa_step(RpaState<3>::initial(init), rec);
  EXPECT_TRUE(st.degenerate);
  EXPECT_EQ(st.pose.rotation, init.rotation);
}

// -------------------------------------------------------------------------
// Gradient baseline

TEST(GdBaseline, GradientMatchesFiniteDifferences) {
  auto rng = rng_for(31);
  for (int inst = 0; inst < 20; ++inst) {
    const auto data = random_two_node<3>(rng, random_pose<3>(rng), 12, 0.3);
    const auto pose = random_pose<3>(rng);
    const Mat<3> grad = objective_rotation_gradient(pose, data);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        const double h = 1e-6;
        Pose<3> plus = pose, minus = pose;
        plus.rotation(r, c) += h;
        minus.rotation(r, c) -= h;
        const double fd = (oracle_objective(plus, data) - oracle_objective(minus, data)) / (2 * h);
        EXPECT_NEAR(grad(r, c), fd, 1e-5 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(GdBaseline, TangentProjectionIsInTangentSpace) {
  auto rng = rng_for(32);
  const Mat<3> r = random_rotation<3>(rng);
  Mat<3> m;
  for (int c = 0; c < 3; ++c) m.col(c) = uniform_vec<3>(rng, -1, 1);
  const Mat<3> x = tangent_projection<3>(r, m);
  const Mat<3> s = r.transpose() * x;
  EXPECT_LE((s + s.transpose()).norm(), 1e-12);
  // Projecting twice changes nothing.
  EXPECT_LE((tangent_projection<3>(r, x) - x).norm(), 1e-12);
}

TEST(GdBaseline, TangentProjectionKillsSymmetricPart) {
  auto rng = rng_for(34);
  const Mat<3> r = random_rotation<3>(rng);
  Mat<3> s;
  for (int c = 0; c < 3; ++c) s.col(c) = uniform_vec<3>(rng, -1, 1);
  s = (s + s.transpose()).eval();
  EXPECT_LE(tangent_projection<3>(r, r * s).norm(), 1e-12);
}

TEST(GdBaseline, SmallStepsDescend) {
  auto rng = rng_for(33);
  const auto truth = random_pose<2>(rng);
  const auto data = random_two_node<2>(rng, truth, 20, 0.0);
  const auto res = gd_solve(data, random_pose<2>(rng), 1e-3, 100);
  ASSERT_EQ(res.trace.size(), 101u);
  EXPECT_LT(res.trace.back(), res.trace.front());
  EXPECT_TRUE(is_rotation<2>(res.pose.rotation));
  EXPECT_THROW(gd_baseline_step(truth, data, 0.0), UsageError);
}

}  // namespace
}  // namespace coalign
