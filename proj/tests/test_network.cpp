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

#include <algorithm>
#include <numeric>

#include "agpose/errors.hpp"
#include "agpose/network.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace agpose::net {
namespace {

using MatD = Matrix<double>;

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.n_kpt = 4;
  c.c = 16;
  c.c_attr = 8;
  c.heads = 2;
  c.attn_blocks = 1;
  c.ffn_hidden = 16;
  c.mlp_hidden = 16;
  c.encoder_k = 8;
  c.k_local = 8;
  return c;
}

Observation<double> tiny_observation(std::uint64_t seed = 3, int n = 64) {
  const auto obs = testing::observed(1, seed, n);
  return make_observation<double>(obs.points, obs.attrs());
}

struct Snapshot {
  MatD weights, p_kpt, f_obj, p_nocs, rotation, translation, size;
};

Snapshot run(const ModelState& state, const Observation<double>& obs) {
  Tape<double> tape;
  Graph<double> g(state, tape, false);
  auto out = g.forward(obs);
  Snapshot s;
  if (state.config().detector == Detector::Iakd) s.weights = out.keypoints.weights.value();
  s.p_kpt = out.keypoints.p_kpt.value();
  s.f_obj = out.f_obj.value();
  s.p_nocs = out.keypoints.p_nocs.value();
  s.rotation = out.pose.rotation.value();
  s.translation = out.pose.translation.value();
  s.size = out.pose.size.value();
  return s;
}

double max_diff(const MatD& a, const MatD& b) { return (a - b).cwiseAbs().maxCoeff(); }

TEST(Network, ValidateRejectsBadWidths) {
  NetworkConfig c = tiny_config();
  c.c_attr = c.c;
  EXPECT_THROW(validate(c), ConfigError);
  c = tiny_config();
  c.heads = 3;
  EXPECT_THROW(validate(c), ConfigError);
  c = tiny_config();
  c.n_kpt = 0;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_NO_THROW(validate(tiny_config()));
}

TEST(Network, ModeNamesRoundTrip) {
  for (auto m : {GafaMode::Full, GafaMode::None, GafaMode::NoLocal, GafaMode::NoGlobal,
                 GafaMode::VanillaAttention}) {
    EXPECT_EQ(gafa_from_string(to_string(m)), m);
  }
  for (auto d : {Detector::Iakd, Detector::Fps}) EXPECT_EQ(detector_from_string(to_string(d)), d);
  EXPECT_THROW(gafa_from_string("bogus"), ConfigError);
}

TEST(Network, InitIsDeterministicInSeed) {
  const auto a = ModelState::init(tiny_config(), 5);
  const auto b = ModelState::init(tiny_config(), 5);
  const auto c = ModelState::init(tiny_config(), 6);
  ASSERT_EQ(a.params().size(), b.params().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params()[i].value, b.params()[i].value) << a.params()[i].name;
    differs = differs || a.params()[i].value != c.params()[i].value;
  }
  EXPECT_TRUE(differs);
  EXPECT_NEAR(std::exp(a.param("iakd.log_tau")(0, 0)), 0.1, 1e-12);
}

TEST(Network, BlocksRoundTrip) {
  const auto a = ModelState::init(tiny_config(), 5);
  const auto b = ModelState::from_blocks(tiny_config(), a.to_blocks());
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].value, b.params()[i].value);
  NetworkConfig other = tiny_config();
  other.c = 32;
  other.c_attr = 16;
  EXPECT_THROW(ModelState::from_blocks(other, a.to_blocks()), CorruptDataset);
}

TEST(Network, ForwardIsDeterministic) {
  const auto state = ModelState::init(tiny_config(), 1);
  const auto obs = tiny_observation();
  const auto a = run(state, obs);
  const auto b = run(state, obs);
  EXPECT_EQ(a.rotation, b.rotation);
  EXPECT_EQ(a.translation, b.translation);
  EXPECT_EQ(a.p_nocs, b.p_nocs);
}

TEST(Network, HeatmapRowsAreDistributions) {
  NetworkConfig cfg = tiny_config();
  cfg.n_kpt = 12;
  const auto s = run(ModelState::init(cfg, 2), tiny_observation(4, 128));
  ASSERT_EQ(s.weights.rows(), 12);
  ASSERT_EQ(s.weights.cols(), 128);
  EXPECT_GE(s.weights.minCoeff(), 0.0);
  EXPECT_LT((s.weights.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Network, KeypointsLieInConvexHull) {
  NetworkConfig cfg = tiny_config();
  cfg.n_kpt = 16;
  const auto obs = tiny_observation(8, 128);
  const auto s = run(ModelState::init(cfg, 3), obs);
  // Support-function test: for every direction the keypoint projection must
  // not exceed the cloud's maximum projection.
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 2000; ++trial) {
    const geometry::Vec3 d = testing::random_rotation(rng).col(0);
    const double hull = (obs.points * d).maxCoeff();
    EXPECT_LE((s.p_kpt * d).maxCoeff(), hull + 1e-12);
  }
}

class Permutation : public ::testing::TestWithParam<GafaMode> {};

TEST_P(Permutation, PoseInvariantFeaturesEquivariant) {
  NetworkConfig cfg = tiny_config();
  cfg.gafa = GetParam();
  const auto state = ModelState::init(cfg, 4);
  const auto obs = tiny_observation(5, 96);
  std::vector<int> perm(96);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(9);
  std::shuffle(perm.begin(), perm.end(), rng);
  Observation<double> shuffled = obs;
  for (int i = 0; i < 96; ++i) {
    shuffled.points.row(i) = obs.points.row(perm[i]);
    shuffled.attrs.row(i) = obs.attrs.row(perm[i]);
  }
  const auto a = run(state, obs);
  const auto b = run(state, shuffled);
  for (int i = 0; i < 96; ++i) EXPECT_LT((b.f_obj.row(i) - a.f_obj.row(perm[i])).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(max_diff(a.p_kpt, b.p_kpt), 1e-10);
  EXPECT_LT(max_diff(a.rotation, b.rotation), 1e-10);
  EXPECT_LT(max_diff(a.translation, b.translation), 1e-10);
  EXPECT_LT(max_diff(a.size, b.size), 1e-10);
}

TEST_P(Permutation, TranslationCovariant) {
  NetworkConfig cfg = tiny_config();
  cfg.gafa = GetParam();
  const auto state = ModelState::init(cfg, 4);
  const auto obs = tiny_observation(6, 96);
  Observation<double> moved = obs;
  const Eigen::RowVector3d shift(0.3, -0.2, 0.45);
  moved.points.rowwise() += shift;
  const auto a = run(state, obs);
  const auto b = run(state, moved);
  EXPECT_LT(max_diff(b.p_kpt.rowwise() - shift, a.p_kpt), 1e-10);
  EXPECT_LT(max_diff(b.translation.rowwise() - shift, a.translation), 1e-10);
  EXPECT_LT(max_diff(a.rotation, b.rotation), 1e-9);
  EXPECT_LT(max_diff(a.size, b.size), 1e-9);
  EXPECT_LT(max_diff(a.p_nocs, b.p_nocs), 1e-9);
}

INSTANTIATE_TEST_SUITE_P(Modes, Permutation,
                         ::testing::Values(GafaMode::Full, GafaMode::None, GafaMode::NoLocal,
                                           GafaMode::NoGlobal, GafaMode::VanillaAttention),
                         [](const auto& info) {
                           auto s = to_string(info.param);
                           std::replace(s.begin(), s.end(), '_', 'X');
                           return s;
                         });

TEST(Network, FpsDetectorIsPermutationCovariantInSelection) {
  NetworkConfig cfg = tiny_config();
  cfg.detector = Detector::Fps;
  const auto obs = tiny_observation(7, 64);
  const auto s = run(ModelState::init(cfg, 1), obs);
  for (int i = 0; i < s.p_kpt.rows(); ++i) {
    bool found = false;
    for (int j = 0; j < obs.points.rows(); ++j) found = found || s.p_kpt.row(i) == obs.points.row(j);
    EXPECT_TRUE(found);
  }
}

TEST(Network, RotationIsOrthonormal) {
  const auto s = run(ModelState::init(tiny_config(), 8), tiny_observation());
  EXPECT_LT(max_diff(s.rotation.transpose() * s.rotation, MatD::Identity(3, 3)), 1e-9);
  EXPECT_NEAR(Eigen::Matrix3d(s.rotation).determinant(), 1.0, 1e-9);
}

TEST(Gafa, RelativeEmbeddingsIgnoreJointTranslation) {
  const auto state = ModelState::init(tiny_config(), 9);
  const auto obs = tiny_observation(10, 64);
  std::mt19937_64 rng(2);
  const MatD kpt = testing::random_points(rng, 4, 0.1).rowwise() + obs.points.colwise().mean();
  const Eigen::RowVector3d shift(-1.0, 0.5, 2.0);
  MatD alpha[2], beta[2];
  for (int pass = 0; pass < 2; ++pass) {
    Tape<double> tape;
    Graph<double> g(state, tape, false);
    MatD p = obs.points;
    MatD k = kpt;
    if (pass == 1) {
      p.rowwise() += shift;
      k.rowwise() += shift;
    }
    const auto p_obj = tape.constant(p);
    const auto p_kpt = tape.constant(k);
    Observation<double> o = obs;
    o.points = p;
    const auto f_obj = g.encode_features(o);
    const auto q = tape.constant(MatD::Ones(4, 16));
    Var<double> a, b;
    g.gafa_local(p_kpt, q, p_obj, f_obj, 8, &a);
    g.gafa_global(p_kpt, q, &b);
    alpha[pass] = a.value();
    beta[pass] = b.value();
  }
  ASSERT_EQ(alpha[0].rows(), 4 * 8);
  ASSERT_EQ(beta[0].rows(), 4 * 4);
  EXPECT_LT(max_diff(alpha[0], alpha[1]), 1e-10);
  EXPECT_LT(max_diff(beta[0], beta[1]), 1e-10);
}

class KeypointSweep : public ::testing::TestWithParam<int> {};

TEST_P(KeypointSweep, OutputShapes) {
  NetworkConfig cfg = tiny_config();
  cfg.n_kpt = GetParam();
  const auto obs = testing::observed(0, 3, 256);
  const auto state = ModelState::init(cfg, 1);
  Tape<float> tape;
  Graph<float> g(state, tape, false);
  const auto out = g.forward(make_observation<float>(obs.points, obs.attrs()));
  EXPECT_EQ(out.keypoints.p_kpt.rows(), GetParam());
  EXPECT_EQ(out.keypoints.p_nocs.rows(), GetParam());
  EXPECT_EQ(out.keypoints.q_ins.rows(), GetParam());
  EXPECT_EQ(out.keypoints.q_ins.cols(), 16);
  EXPECT_EQ(out.keypoints.weights.cols(), 256);
  EXPECT_EQ(out.pose.rotation.rows(), 3);
  EXPECT_TRUE(out.pose.to_pose().R.allFinite());
}

INSTANTIATE_TEST_SUITE_P(Counts, KeypointSweep, ::testing::Values(16, 32, 64, 96, 128));

TEST(Network, ReplacementMlpsMatchParameterCounts) {
  NetworkConfig base;  // full-size widths
  const auto iakd = ModelState::init(base, 0);
  NetworkConfig fps_cfg = base;
  fps_cfg.detector = Detector::Fps;
  const auto fps = ModelState::init(fps_cfg, 0);
  const double slack = 2.0 * base.c + 1.0;
  EXPECT_LE(std::abs(double(iakd.parameter_count("iakd.")) - double(fps.parameter_count("fps."))),
            slack);

  const auto gafa = [&](GafaMode m) {
    NetworkConfig c = base;
    c.gafa = m;
    return ModelState::init(c, 0).parameter_count("gafa.");
  };
  const double full = double(gafa(GafaMode::Full));
  EXPECT_LE(std::abs(full - double(gafa(GafaMode::None))), slack);
  EXPECT_LE(std::abs(full - double(gafa(GafaMode::NoLocal))), slack);
  EXPECT_LE(std::abs(full - double(gafa(GafaMode::NoGlobal))), slack);
}

// Full forward pass in 64-bit against central differences on every
// parameter, through a fixed random contraction of all outputs.
class ForwardGradient : public ::testing::TestWithParam<GafaMode> {};

double contracted(const ModelState& state, const Observation<double>& obs, bool training,
                  Gradients* grads) {
  Tape<double> tape;
  Graph<double> g(state, tape, training);
  auto out = g.forward(obs);
  std::mt19937_64 rng(77);
  auto w = [&](Var<double> v) {
    return ad::sum_all(ad::mul(v, tape.constant(testing::random_matrix(rng, v.rows(), v.cols()))));
  };
  const auto loss = ad::add(ad::add(w(out.pose.rotation), w(ad::scale(out.pose.translation, 10.0))),
                            ad::add(w(ad::scale(out.pose.size, 10.0)), w(out.keypoints.p_nocs)));
  if (grads) {
    tape.backward(loss);
    g.accumulate_gradients(*grads, 1.0);
  }
  return loss.value()(0, 0);
}

TEST_P(ForwardGradient, MatchesCentralDifferences) {
  NetworkConfig cfg = tiny_config();
  cfg.gafa = GetParam();
  auto state = ModelState::init(cfg, 11);
  const auto obs = tiny_observation(12, 64);
  auto grads = Gradients::zeros_like(state);
  contracted(state, obs, true, &grads);

  const double h = 1e-4;
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t p = 0; p < state.params().size(); ++p) {
    auto& value = state.params()[p].value;
    MatD numeric(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double orig = value.data()[i];
      value.data()[i] = orig + h;
      const double up = contracted(state, obs, false, nullptr);
      value.data()[i] = orig - h;
      const double down = contracted(state, obs, false, nullptr);
      value.data()[i] = orig;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const MatD& analytic = grads.values[p];
    const auto& name = state.params()[p].name;
    // A key bias shifts every score of a softmax row equally: exactly zero.
    if (name.ends_with(".k.b") || name.ends_with(".vk.b") || name.ends_with(".sk.b")) {
      EXPECT_LT(analytic.norm(), 1e-9) << name;
      EXPECT_LT(numeric.norm(), 1e-7) << name;
      continue;
    }
    const double err = (analytic - numeric).norm() / std::max({analytic.norm(), numeric.norm(), 1e-8});
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
    EXPECT_GT(analytic.norm(), 1e-8) << name;
  }
  EXPECT_LE(worst, 1e-4) << worst_name;
}

INSTANTIATE_TEST_SUITE_P(Modes, ForwardGradient,
                         ::testing::Values(GafaMode::Full, GafaMode::None,
                                           GafaMode::VanillaAttention),
                         [](const auto& info) {
                           auto s = to_string(info.param);
                           std::replace(s.begin(), s.end(), '_', 'X');
                           return s;
                         });

TEST(Knn, MatchesBruteForceWithIndexTieBreak) {
  MatD ref(5, 3);
  ref << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, 0, 2, 0.5, 0, 0;
  const MatD q = MatD::Zero(1, 3);
  const auto idx = knn_indices<double>(q, ref, 4);
  EXPECT_EQ(idx, (std::vector<int>{4, 0, 1, 2}));

  std::mt19937_64 rng(1);
  const MatD pts = testing::random_points(rng, 80);
  const MatD qs = testing::random_points(rng, 10);
  const auto got = knn_indices<double>(qs, pts, 6);
  for (int i = 0; i < 10; ++i) {
    std::vector<int> order(80);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return (pts.row(a) - qs.row(i)).squaredNorm() < (pts.row(b) - qs.row(i)).squaredNorm();
    });
    for (int j = 0; j < 6; ++j) EXPECT_EQ(got[i * 6 + j], order[j]);
  }
}

}  // namespace
}  // namespace agpose::net
