// Copyright 2026 The AGPose Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "agpose/errors.hpp"
#include "agpose/losses.hpp"
#include "agpose/synthdata.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace agpose::loss {
namespace {

using MatD = Matrix<double>;
using testing::check_gradients;
using testing::random_matrix;

double eval(Var<double> v) { return v.value()(0, 0); }

double brute_div(const MatD& p, double th1) {
  double total = 0.0;
  for (int i = 0; i < p.rows(); ++i) {
    for (int j = 0; j < p.rows(); ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) d2 += (p(i, c) - p(j, c)) * (p(i, c) - p(j, c));
      total += std::max(th1 - std::sqrt(d2), 0.0);
    }
  }
  return total;
}

double brute_chamfer(const MatD& kpt, const MatD& cloud) {
  double total = 0.0;
  for (int i = 0; i < kpt.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < cloud.rows(); ++j) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) d2 += (kpt(i, c) - cloud(j, c)) * (kpt(i, c) - cloud(j, c));
      best = std::min(best, std::sqrt(d2));
    }
    total += best;
  }
  return total / static_cast<double>(kpt.rows());
}

TEST(LossDiv, WorkedValues) {
  ad::Tape<double> tape;
  EXPECT_NEAR(eval(loss_div(tape.constant(MatD::Zero(2, 3)), 0.01)), 0.02, 1e-15);
  EXPECT_NEAR(eval(loss_div(tape.constant(MatD::Zero(3, 3)), 0.01)), 0.06, 1e-15);
  MatD spread(3, 3);
  spread << 0, 0, 0, 0.02, 0, 0, 0, 0.5, 0;
  EXPECT_EQ(eval(loss_div(tape.constant(spread), 0.01)), 0.0);
  EXPECT_THROW(loss_div(tape.constant(MatD::Zero(1, 3)), 0.01), ConfigError);
}

TEST(LossDiv, MatchesBruteForce) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> size(2, 64);
  for (int trial = 0; trial < 100; ++trial) {
    const MatD p = random_matrix(rng, size(rng), 3, 0.02);
    ad::Tape<double> tape;
    EXPECT_NEAR(eval(loss_div(tape.constant(p), 0.01)), brute_div(p, 0.01), 1e-9);
  }
}

TEST(LossChamfer, MatchesBruteForce) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> size(1, 64);
  for (int trial = 0; trial < 100; ++trial) {
    const MatD kpt = random_matrix(rng, size(rng), 3);
    const MatD cloud = random_matrix(rng, size(rng), 3);
    ad::Tape<double> tape;
    EXPECT_NEAR(eval(loss_ocd(tape.constant(kpt), cloud)), brute_chamfer(kpt, cloud), 1e-9);
    EXPECT_NEAR(eval(loss_ucd(tape.constant(kpt), cloud)), brute_chamfer(kpt, cloud), 1e-9);
  }
}

TEST(LossChamfer, WorkedValues) {
  ad::Tape<double> tape;
  MatD cloud(3, 3);
  cloud << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  EXPECT_EQ(eval(loss_ocd(tape.constant(cloud), cloud)), 0.0);
  MatD one(1, 3);
  one << 0.3, 0.4, -0.25;
  EXPECT_NEAR(eval(loss_ocd(tape.constant(one), cloud)), std::sqrt(0.09 + 0.16 + 0.0625), 1e-15);
  EXPECT_THROW(loss_ocd(tape.constant(one), MatD(0, 3)), EmptyFilterResult);
}

TEST(LossChamfer, UnfilteredNeverExceedsFiltered) {
  const auto obs = testing::observed(2, 4, 256);
  const auto kept = filter_outliers(obs.points, obs.model_points, obs.gt_pose, 0.1);
  geometry::Points filtered(static_cast<Eigen::Index>(kept.size()), 3);
  for (std::size_t i = 0; i < kept.size(); ++i) filtered.row(i) = obs.points.row(kept[i]);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const MatD kpt = (random_matrix(rng, 16, 3, 0.2).rowwise() + obs.gt_pose.t.transpose()).eval();
    ad::Tape<double> tape;
    const double ocd = eval(loss_ocd(tape.constant(kpt), MatD(filtered)));
    const double ucd = eval(loss_ucd(tape.constant(kpt), MatD(obs.points)));
    EXPECT_LE(ucd, ocd + 1e-15);
  }
  // Without outliers nothing is filtered and the two coincide.
  const auto clean = testing::observed(2, 4, 256, 0.0);
  const auto all = filter_outliers(clean.points, clean.model_points, clean.gt_pose, 0.1);
  EXPECT_EQ(all.size(), 256u);
}

TEST(FilterOutliers, ThresholdLimits) {
  const auto obs = testing::observed(0, 9, 200);
  const auto all = filter_outliers(obs.points, obs.model_points, obs.gt_pose,
                                   std::numeric_limits<double>::infinity());
  EXPECT_EQ(all.size(), 200u);
  EXPECT_THROW(filter_outliers(obs.points, obs.model_points, obs.gt_pose, 0.0), EmptyFilterResult);
}

TEST(FilterOutliers, AgreesWithExhaustiveNearestNeighbor) {
  const auto obs = testing::observed(1, 13, 200);
  const auto kept = filter_outliers(obs.points, obs.model_points, obs.gt_pose, 0.1);
  const geometry::Points nocs = geometry::to_nocs(obs.points, obs.gt_pose);
  std::size_t k = 0;
  for (int i = 0; i < nocs.rows(); ++i) {
    const double d = (obs.model_points.rowwise() - nocs.row(i)).rowwise().norm().minCoeff();
    const bool keep = d < 0.1;
    if (keep) {
      ASSERT_LT(k, kept.size());
      EXPECT_EQ(kept[k++], i);
    }
  }
  EXPECT_EQ(k, kept.size());
}

TEST(LossNocs, WorkedValuesAndSymmetry) {
  std::mt19937_64 rng(5);
  const geometry::Pose gt = testing::random_pose(rng);
  const MatD kpt = testing::random_points(rng, 10, 0.1).rowwise() + gt.t.transpose();
  const MatD target = nocs_targets(kpt, gt, false);
  ad::Tape<double> tape;
  EXPECT_NEAR(eval(loss_nocs(tape.constant(target), kpt, gt, false)), 0.0, 1e-15);
  EXPECT_NEAR(eval(loss_nocs(tape.constant((target.array() + 0.5).matrix()), kpt, gt, false)),
              0.125, 1e-12);
  // Linear branch: |d| - 0.5 for |d| >= 1.
  EXPECT_NEAR(eval(loss_nocs(tape.constant((target.array() - 2.0).matrix()), kpt, gt, false)),
              1.5, 1e-12);

  const MatD pred = random_matrix(rng, 10, 3, 0.3);
  const double base = eval(loss_nocs(tape.constant(pred), kpt, gt, true));
  for (double phi : {0.3, 1.7, -2.9}) {
    geometry::Pose spun = gt;
    spun.R = gt.R * geometry::rot_y(phi);
    EXPECT_NEAR(eval(loss_nocs(tape.constant(pred), kpt, spun, true)), base, 1e-6);
  }
}

TEST(LossPose, WorkedValuesAndSymmetry) {
  std::mt19937_64 rng(6);
  const geometry::Pose gt = testing::random_pose(rng);
  ad::Tape<double> tape;
  const auto R = tape.constant(gt.R);
  const auto t = tape.constant(gt.t.transpose());
  const auto s = tape.constant(gt.s.transpose());
  EXPECT_NEAR(eval(loss_pose(R, t, s, gt, false)), 0.0, 1e-12);
  const auto t_off = tape.constant((gt.t + geometry::Vec3(0.03, 0, 0)).transpose());
  EXPECT_NEAR(eval(loss_pose(R, t_off, s, gt, false)), 0.03, 1e-12);
  EXPECT_NEAR(eval(loss_pose(R, t_off, s, gt, false, PoseNorm::ElementwiseL1)), 0.03, 1e-12);

  const auto R_any = tape.constant(testing::random_rotation(rng));
  geometry::Pose spun = gt;
  spun.R = gt.R * geometry::rot_y(40.0 * M_PI / 180.0);
  EXPECT_NEAR(eval(loss_pose(R_any, t, s, gt, true)), eval(loss_pose(R_any, t, s, spun, true)), 1e-6);
  // Without the flag the rotation about y is penalized.
  EXPECT_GT(std::abs(eval(loss_pose(R_any, t, s, gt, false)) - eval(loss_pose(R_any, t, s, spun, false))),
            1e-3);
}

TEST(LossTotal, WeightedSum) {
  ad::Tape<double> tape;
  const auto one = tape.constant(MatD::Ones(1, 1));
  const auto zero = tape.constant(MatD::Zero(1, 1));
  EXPECT_NEAR(eval(loss_total(one, one, one, one, LossWeights{})), 7.3, 1e-12);
  EXPECT_EQ(eval(loss_total(zero, zero, zero, zero, LossWeights{})), 0.0);
  LossWeights no_div;
  no_div.div = 0.0;
  EXPECT_NEAR(eval(loss_total(one, one, one, one, no_div)), 2.3, 1e-12);
  LossWeights bad;
  bad.pose = -1.0;
  EXPECT_THROW(validate(bad), ConfigError);
}

// Gradient checks, h = 1e-5 in 64-bit.

TEST(LossGradients, Div) {
  std::mt19937_64 rng(7);
  double largest = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    MatD p;
    // Keep every pair away from the hinge.
    for (;;) {
      p = random_matrix(rng, 8, 3, 0.008);
      bool ok = true;
      for (int i = 0; i < 8 && ok; ++i) {
        for (int j = i + 1; j < 8 && ok; ++j) ok = std::abs((p.row(i) - p.row(j)).norm() - 0.01) > 1e-3;
      }
      if (ok) break;
    }
    const auto r = check_gradients([](auto&, auto& v) { return loss_div(v[0], 0.01); }, {p}, 1e-5);
    EXPECT_LE(r.max_rel_err, 1e-4);
    largest = std::max(largest, r.max_abs_grad);
  }
  EXPECT_GT(largest, 0.1);
}

TEST(LossGradients, Chamfer) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const MatD cloud = random_matrix(rng, 50, 3);
    const MatD kpt = random_matrix(rng, 10, 3);
    const auto r = check_gradients([&](auto&, auto& v) { return loss_ocd(v[0], cloud); }, {kpt}, 1e-5);
    EXPECT_LE(r.max_rel_err, 1e-4);
  }
}

TEST(LossGradients, Nocs) {
  std::mt19937_64 rng(9);
  const geometry::Pose gt = testing::random_pose(rng);
  const MatD kpt = testing::random_points(rng, 12, 0.1).rowwise() + gt.t.transpose();
  for (bool sym : {false, true}) {
    // Mix of quadratic and linear branches.
    const MatD pred = random_matrix(rng, 12, 3, 1.0);
    const auto r = check_gradients([&](auto&, auto& v) { return loss_nocs(v[0], kpt, gt, sym); },
                                   {pred}, 1e-5);
    EXPECT_LE(r.max_rel_err, 1e-4);
  }
}

TEST(LossGradients, Pose) {
  std::mt19937_64 rng(10);
  const geometry::Pose gt = testing::random_pose(rng);
  for (auto norm : {PoseNorm::Norm, PoseNorm::ElementwiseL1}) {
    for (bool sym : {false, true}) {
      const std::vector<MatD> in = {random_matrix(rng, 3, 3), random_matrix(rng, 1, 3),
                                    random_matrix(rng, 1, 3, 0.1)};
      const auto r = check_gradients(
          [&](auto&, auto& v) { return loss_pose(v[0], v[1], v[2], gt, sym, norm); }, in, 1e-5);
      EXPECT_LE(r.max_rel_err, 1e-4);
    }
  }
}

TEST(LossGradients, Total) {
  std::mt19937_64 rng(11);
  const geometry::Pose gt = testing::random_pose(rng);
  const MatD cloud = random_matrix(rng, 40, 3, 0.1);
  const MatD kpt_fixed = random_matrix(rng, 6, 3, 0.1);
  const std::vector<MatD> in = {random_matrix(rng, 6, 3, 0.1), random_matrix(rng, 6, 3, 0.5),
                                random_matrix(rng, 3, 3), random_matrix(rng, 1, 3),
                                random_matrix(rng, 1, 3, 0.1)};
  const auto r = check_gradients(
      [&](auto&, auto& v) {
        return loss_total(loss_ocd(v[0], cloud), loss_div(v[0], 0.01),
                          loss_nocs(v[1], kpt_fixed, gt, false),
                          loss_pose(v[2], v[3], v[4], gt, false), LossWeights{});
      },
      in, 1e-5);
  EXPECT_LE(r.max_rel_err, 1e-4);
}

TEST(LossNocs, TargetsAreDetachedFromKeypoints) {
  std::mt19937_64 rng(12);
  const geometry::Pose gt = testing::random_pose(rng);
  ad::Tape<double> tape;
  const auto kpt = tape.leaf(testing::random_points(rng, 5, 0.1));
  const auto pred = tape.leaf(random_matrix(rng, 5, 3));
  const auto l = loss_nocs(pred, kpt.value(), gt, true);
  tape.backward(l);
  EXPECT_EQ(tape.grad(kpt), MatD::Zero(5, 3));
  EXPECT_GT(tape.grad(pred).norm(), 0.0);
}

}  // namespace
}  // namespace agpose::loss
