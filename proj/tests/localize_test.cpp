#include <gtest/gtest.h>

#include "coalign/errors.hpp"
#include "coalign/localize.hpp"
#include "coalign/metrics.hpp"
#include "coalign/simulator.hpp"
#include "test_support.hpp"

namespace coalign {
namespace {

using testing::random_network;
using testing::rng_for;

void isolate(NetworkDataset<2>& data, int target, bool keep_one_anchor_edge) {
  bool kept = false;
  for (auto& snap : data.snapshots) {
    std::erase_if(snap.tt_edges, [&](const TargetEdge& e) { return e.i == target || e.j == target; });
    std::erase_if(snap.ta_edges, [&](const AnchorEdge& e) {
      if (e.i != target) return false;
      if (keep_one_anchor_edge && !kept) return !(kept = true);
      return true;
    });
  }
}

TEST(TargetResiduals, ZeroAtNoiselessTruth) {
  auto rng = rng_for(71);
  PoseSet<2> truth;
  for (int i = 0; i < 5; ++i) truth.push_back(random_pose<2>(rng));
  auto data = random_network<2>(rng, truth, 3, 4, 0.0);
  for (double r : target_residuals(truth, data)) EXPECT_NEAR(r, 0.0, 1e-20);
  isolate(data, 2, false);
  const auto res = target_residuals(random_poses<2>(5, rng), data);
  EXPECT_EQ(res[2], 0.0);
  EXPECT_GT(res[0], 0.0);
}

TEST(TargetResiduals, AreMeanSquaredResiduals) {
  // Two targets, one edge pair and one anchor edge, a single snapshot.
  NetworkDataset<2> data;
  data.n_targets = 2;
  data.n_anchors = 1;
  NetworkSnapshot<2> snap;
  snap.target_local = {Vec<2>(0, 0), Vec<2>(0, 0)};
  snap.anchor_global = {Vec<2>(0, 0)};
  snap.tt_edges = {{0, 1, 3.0}, {1, 0, 1.0}};
  snap.ta_edges = {{0, 0, 0.0}};
  data.snapshots.push_back(snap);
  PoseSet<2> poses(2, Pose<2>::identity());
  poses[1].translation = Vec<2>(2, 0);
  const auto res = target_residuals(poses, data);
  // Residuals: edge (0,1) 1, edge (1,0) -1, anchor 0.
  EXPECT_DOUBLE_EQ(res[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(res[1], 1.0);
}

TEST(TargetSelectionCheck, DropsUnanchoredAndIllPosed) {
  auto rng = rng_for(72);
  PoseSet<2> truth;
  for (int i = 0; i < 6; ++i) truth.push_back(random_pose<2>(rng));
  auto data = random_network<2>(rng, truth, 3, 5, 0.1);
  isolate(data, 1, false);
  isolate(data, 4, true);
  const auto central = select_targets(data, true);
  EXPECT_EQ(central.unanchored, std::vector<int>{1});
  EXPECT_EQ(central.ill_posed, std::vector<int>{4});
  EXPECT_EQ(central.keep, (std::vector<bool>{true, false, true, true, false, true}));
  // Without the master check only connectivity matters.
  const auto local = select_targets(data, false);
  EXPECT_EQ(local.unanchored, std::vector<int>{1});
  EXPECT_TRUE(local.ill_posed.empty());
  EXPECT_TRUE(local.keep[4]);
}

TEST(Localize, SolvesKeptTargetsOnly) {
  auto rng = rng_for(73);
  PoseSet<2> truth;
  for (int i = 0; i < 6; ++i) truth.push_back(random_pose<2>(rng));
  auto data = random_network<2>(rng, truth, 3, 6, 0.0);
  isolate(data, 3, false);
  MultiOptions opt;
  opt.stop = {3000, 1e-14};
  opt.escape_rounds = 4;
  auto solve_rng = rng_for(74);
  const auto sol = localize_network(data, opt, solve_rng);
  EXPECT_EQ(sol.unanchored, std::vector<int>{3});
  EXPECT_FALSE(sol.solved[3]);
  EXPECT_EQ(sol.solved_index, (std::vector<int>{0, 1, 2, 4, 5}));
  EXPECT_EQ(sol.poses[3].rotation, Mat<2>::Identity());
  for (int i : sol.solved_index) {
    EXPECT_LT(rotation_error<2>(sol.poses[i].rotation, truth[i].rotation), 1e-4) << "target " << i;
  }
}

TEST(Escape, NeverRaisesObjective) {
  auto sc = Scenario::corner_anchor_network();
  sc.n_targets = 25;
  sc.comm_radius = 2.0;
  sc.snr_db = 20;
  sc.tbar = 5;
  const auto data = generate_network<2>(sc).first;
  const auto sel = select_targets(data, true);
  const auto sub = restrict_to_targets(data, sel.keep);
  for (auto method : {MultiMethod::kLeastSquares, MultiMethod::kJacobi}) {
    MultiOptions opt;
    opt.method = method;
    opt.stop = {300, 1e-9};
    auto rng = rng_for(75);
    const auto init = random_poses<2>(sub.n_targets, rng);
    auto rng_a = rng_for(76);
    const auto plain = multi_solve(sub, init, opt, rng_a);
    EXPECT_EQ(plain.escapes_tried, 0);
    opt.escape_rounds = 4;
    auto rng_b = rng_for(76);
    const auto escaped = multi_solve(sub, init, opt, rng_b);
    EXPECT_EQ(escaped.escapes_tried, 4);
    EXPECT_LE(escaped.escapes_accepted, 4);
    EXPECT_LE(escaped.best.trace.back(), plain.best.trace.back());
  }
}

TEST(Escape, DppaRoundsMatchJacobi) {
  auto sc = Scenario::corner_anchor_network();
  sc.n_targets = 20;
  sc.comm_radius = 2.0;
  sc.snr_db = 30;
  sc.tbar = 4;
  sc.fixed_graph = true;
  const auto data = generate_network<2>(sc).first;
  const auto sub = restrict_to_targets(data, select_targets(data, false).keep);
  MultiOptions opt;
  opt.method = MultiMethod::kDppa;
  opt.stop = {100, 1e-9};
  opt.escape_rounds = 2;
  auto rng = rng_for(77);
  const auto init = random_poses<2>(sub.n_targets, rng);
  auto rng_a = rng_for(78);
  const auto dppa = multi_solve(sub, init, opt, rng_a);
  opt.method = MultiMethod::kJacobi;
  auto rng_b = rng_for(78);
  const auto jac = multi_solve(sub, init, opt, rng_b);
  EXPECT_EQ(dppa.best.trace, jac.best.trace);
}

}  // namespace
}  // namespace coalign
