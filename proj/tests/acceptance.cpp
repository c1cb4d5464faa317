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

// Acceptance gate: one PASS/FAIL line per criterion.
//
//   acceptance --fast       criteria 1-4
//   acceptance --training   criteria 5-7 (trains on the default dataset)

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "agpose/errors.hpp"
#include "agpose/geometry.hpp"
#include "agpose/harness.hpp"
#include "agpose/losses.hpp"
#include "agpose/network.hpp"
#include "agpose/synthdata.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace {

using namespace agpose;
using geometry::Mat3;
using geometry::Points;
using geometry::Pose;
using geometry::Vec3;
using MatD = ad::Matrix<double>;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;
std::FILE* log_file = nullptr;

void emit(const char* fmt, ...) {
  std::va_list args;
  va_start(args, fmt);
  std::va_list copy;
  va_copy(copy, args);
  std::vprintf(fmt, args);
  std::fflush(stdout);
  if (log_file) {
    std::vfprintf(log_file, fmt, copy);
    std::fflush(log_file);
  }
  va_end(copy);
  va_end(args);
}

void report(int id, const std::string& title, Verdict& v) {
  emit("criterion %d %-28s %s %s\n", id, title.c_str(), v.pass ? "PASS" : "FAIL",
       v.detail.str().c_str());
  if (!v.pass) ++failures;
}

// ---------------------------------------------------------------------------
// 1. geometry

void criterion_geometry() {
  const auto t0 = Clock::now();
  Verdict v;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> scale(0.2, 3.0);

  double umeyama_err = 0.0;
  for (int n : {3, 10, 100}) {
    for (int trial = 0; trial < 1000; ++trial) {
      const Points src = testing::random_points(rng, n);
      const Mat3 R = testing::random_rotation(rng);
      const double c = scale(rng);
      const Vec3 t = testing::random_points(rng, 1, 2.0).row(0).transpose();
      const Points dst = ((c * src * R.transpose()).rowwise() + t.transpose()).eval();
      const auto fit = geometry::umeyama_fit(src, dst);
      umeyama_err = std::max({umeyama_err, (fit.R - R).cwiseAbs().maxCoeff(),
                              (fit.t - t).cwiseAbs().maxCoeff(), std::abs(fit.scale - c)});
    }
  }
  v.require(umeyama_err <= 1e-6, "umeyama");

  double canon_err = 0.0;
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  for (int trial = 0; trial < 1000; ++trial) {
    const Mat3 R = testing::random_rotation(rng);
    const Mat3 a = geometry::canonicalize_y_symmetric(R);
    const Mat3 b = geometry::canonicalize_y_symmetric(R * geometry::rot_y(angle(rng)));
    canon_err = std::max(canon_err, (a - b).cwiseAbs().maxCoeff());
  }
  v.require(canon_err <= 1e-9, "canonicalization");

  double nocs_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Pose pose = testing::random_pose(rng);
    const Points n = testing::random_points(rng, 50, 0.5);
    nocs_err = std::max(nocs_err,
                        (geometry::to_nocs(geometry::from_nocs(n, pose), pose) - n).cwiseAbs().maxCoeff());
  }
  v.require(nocs_err <= 1e-6, "nocs round trip");

  geometry::Box3D a;
  geometry::Box3D b;
  b.pose.t = Vec3(0.5, 0.0, 0.0);
  const double iou = geometry::iou3d(a, b);
  const auto mc = testing::monte_carlo_iou(a, b, 1'000'000, 5);
  v.require(std::abs(iou - 1.0 / 3.0) <= 1e-3, "iou 1/3");
  v.require(std::abs(iou - mc.iou) <= 3.0 * mc.se, "iou vs monte carlo");

  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime");
  v.detail << "umeyama=" << umeyama_err << " canon=" << canon_err << " nocs=" << nocs_err
           << " iou=" << iou << " mc=" << mc.iou << "+-" << mc.se << " seconds=" << secs;
  report(1, "geometry exactness", v);
}

// ---------------------------------------------------------------------------
// 2. loss oracles and gradients

double brute_div(const MatD& p, double th1) {
  double total = 0.0;
  for (int i = 0; i < p.rows(); ++i)
    for (int j = 0; j < p.rows(); ++j)
      if (i != j) total += std::max(th1 - (p.row(i) - p.row(j)).norm(), 0.0);
  return total;
}

double brute_chamfer(const MatD& kpt, const MatD& cloud) {
  double total = 0.0;
  for (int i = 0; i < kpt.rows(); ++i) {
    double best = 1e300;
    for (int j = 0; j < cloud.rows(); ++j) best = std::min(best, (kpt.row(i) - cloud.row(j)).norm());
    total += best;
  }
  return total / static_cast<double>(kpt.rows());
}

net::NetworkConfig tiny_network() {
  net::NetworkConfig c;
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

// Scalar objective over the whole forward pass: a fixed random contraction of
// every output plus the pose and chamfer losses. The NOCS loss is left out
// because its target is detached from the keypoints by contract, which a
// finite difference cannot see.
//
// `pattern`, when given, receives the exact-zero mask of every tape node,
// which changes exactly when a ReLU switches.
double network_objective(const net::ModelState& state, const synth::ObservedInstance& obs,
                         const MatD& filtered, net::Gradients* grads,
                         std::vector<bool>* pattern = nullptr) {
  ad::Tape<double> tape;
  net::Graph<double> g(state, tape, grads != nullptr);
  auto out = g.forward(net::make_observation<double>(obs.points, obs.attrs()));
  auto& kp = out.keypoints;
  std::mt19937_64 rng(77);
  const auto w = [&](ad::Var<double> v) {
    return ad::sum_all(ad::mul(v, tape.constant(testing::random_matrix(rng, v.rows(), v.cols()))));
  };
  auto total = ad::add(w(kp.p_nocs), w(ad::scale(kp.p_kpt, 10.0)));
  total = ad::add(total, w(out.pose.rotation));
  total = ad::add(total, loss::loss_ocd(kp.p_kpt, filtered));
  total = ad::add(total, loss::loss_pose(out.pose.rotation, out.pose.translation, out.pose.size,
                                         obs.gt_pose, obs.symmetric));
  if (grads) {
    tape.backward(total);
    g.accumulate_gradients(*grads, 1.0);
  }
  if (pattern) {
    pattern->clear();
    for (std::size_t id = 0; id < tape.size(); ++id) {
      const auto& m = tape.value(ad::Var<double>{&tape, static_cast<int>(id)});
      for (Eigen::Index k = 0; k < m.size(); ++k) pattern->push_back(m.data()[k] == 0.0);
    }
  }
  return total.value()(0, 0);
}

double kH = 1e-4;  // network finite-difference step

void criterion_losses() {
  const auto t0 = Clock::now();
  Verdict v;
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> size(2, 64);

  double oracle_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ad::Tape<double> tape;
    const MatD kpt = testing::random_matrix(rng, size(rng), 3, 0.02);
    const MatD cloud = testing::random_matrix(rng, size(rng), 3, 0.1);
    const auto k = tape.constant(kpt);
    oracle_err = std::max({oracle_err,
                           std::abs(loss::loss_div(k, 0.01).value()(0, 0) - brute_div(kpt, 0.01)),
                           std::abs(loss::loss_ocd(k, cloud).value()(0, 0) - brute_chamfer(kpt, cloud)),
                           std::abs(loss::loss_ucd(k, cloud).value()(0, 0) - brute_chamfer(kpt, cloud))});
  }
  v.require(oracle_err <= 1e-9, "brute force");

  // Loss gradients, h = 1e-5.
  double loss_fd = 0.0;
  const Pose gt = testing::random_pose(rng);
  for (int trial = 0; trial < 10; ++trial) {
    MatD p;
    for (;;) {
      p = testing::random_matrix(rng, 8, 3, 0.008);
      bool ok = true;
      for (int i = 0; i < 8; ++i)
        for (int j = i + 1; j < 8; ++j) ok = ok && std::abs((p.row(i) - p.row(j)).norm() - 0.01) > 1e-3;
      if (ok) break;
    }
    const MatD cloud = testing::random_matrix(rng, 40, 3, 0.05);
    const MatD kpt = testing::random_matrix(rng, 8, 3, 0.1);
    loss_fd = std::max(loss_fd, testing::check_gradients(
                                    [](auto&, auto& x) { return loss::loss_div(x[0], 0.01); }, {p}, 1e-5)
                                    .max_rel_err);
    loss_fd = std::max(loss_fd, testing::check_gradients(
                                    [&](auto&, auto& x) { return loss::loss_ocd(x[0], cloud); }, {kpt}, 1e-5)
                                    .max_rel_err);
    for (bool sym : {false, true}) {
      loss_fd = std::max(
          loss_fd, testing::check_gradients(
                       [&](auto&, auto& x) { return loss::loss_nocs(x[0], kpt, gt, sym); },
                       {testing::random_matrix(rng, 8, 3, 1.0)}, 1e-5)
                       .max_rel_err);
      loss_fd = std::max(
          loss_fd,
          testing::check_gradients(
              [&](auto&, auto& x) { return loss::loss_pose(x[0], x[1], x[2], gt, sym); },
              {testing::random_matrix(rng, 3, 3), testing::random_matrix(rng, 1, 3),
               testing::random_matrix(rng, 1, 3, 0.1)},
              1e-5)
              .max_rel_err);
    }
  }
  v.require(loss_fd <= 1e-4, "loss gradients");

  // Full forward pass plus losses, N = 64, N_kpt = 4, C = 16, h = 1e-4,
  // per parameter tensor. Key biases have an exactly zero gradient and are
  // checked for that instead.
  double net_fd = 0.0;
  std::string worst;
  double zero_grad = 0.0;
  std::size_t dead = 0, kinks = 0, entries = 0;
  for (auto mode : {net::GafaMode::Full, net::GafaMode::None, net::GafaMode::VanillaAttention}) {
    net::NetworkConfig cfg = tiny_network();
    cfg.gafa = mode;
    auto state = net::ModelState::init(cfg, 31);
    const auto obs = testing::observed(2, 17, 64);
    const auto kept = loss::filter_outliers(obs.points, obs.model_points, obs.gt_pose, 0.1);
    MatD filtered(static_cast<Eigen::Index>(kept.size()), 3);
    for (std::size_t i = 0; i < kept.size(); ++i) filtered.row(i) = obs.points.row(kept[i]);
    auto grads = net::Gradients::zeros_like(state);
    network_objective(state, obs, filtered, &grads);
    for (std::size_t p = 0; p < state.params().size(); ++p) {
      auto& value = state.params()[p].value;
      MatD numeric(value.rows(), value.cols());
      std::vector<char> smooth(static_cast<std::size_t>(value.size()), 1);
      for (Eigen::Index i = 0; i < value.size(); ++i) {
        const double orig = value.data()[i];
        std::vector<bool> at_up, at_down;
        value.data()[i] = orig + kH;
        const double up = network_objective(state, obs, filtered, nullptr, &at_up);
        value.data()[i] = orig - kH;
        const double down = network_objective(state, obs, filtered, nullptr, &at_down);
        value.data()[i] = orig;
        numeric.data()[i] = (up - down) / (2 * kH);
        // A ReLU switching inside [-h, h] makes the difference quotient
        // meaningless for this entry.
        if (at_up != at_down) {
          smooth[static_cast<std::size_t>(i)] = 0;
          ++kinks;
        }
        ++entries;
      }
      const MatD& analytic = grads.values[p];
      const auto& name = state.params()[p].name;
      if (name.ends_with("k.b")) {
        zero_grad = std::max(zero_grad, analytic.norm());
        continue;
      }
      if (analytic.norm() == 0.0) ++dead;
      MatD a = analytic;
      MatD n = numeric;
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (!smooth[static_cast<std::size_t>(i)]) a.data()[i] = n.data()[i] = 0.0;
      }
      const double err = (a - n).norm() / std::max({a.norm(), n.norm(), 1e-8});
      if (err > net_fd) {
        net_fd = err;
        worst = name;
      }
    }
  }
  v.require(net_fd <= 1e-4, "network gradients");
  v.require(zero_grad <= 1e-9, "key-bias gradients");
  v.require(dead == 0, "parameter groups without gradient");
  v.require(kinks * 20 <= entries, "too many kink crossings");

  const double secs = seconds_since(t0);
  v.require(secs < 300.0, "runtime");
  v.detail << "oracle=" << oracle_err << " loss_fd=" << loss_fd << " net_fd=" << net_fd << " (" << worst << ") kink_entries=" << kinks << "/" << entries
           << " seconds=" << secs;
  report(2, "loss oracles and gradients", v);
}

// ---------------------------------------------------------------------------
// 3. structural invariants

struct Forward {
  MatD weights, p_kpt, f_obj, p_nocs, rotation, translation, size, alpha, beta;
};

Forward forward(const net::ModelState& state, const net::Observation<double>& obs) {
  ad::Tape<double> tape;
  net::Graph<double> g(state, tape, false);
  auto out = g.forward(obs);
  Forward f;
  f.weights = out.keypoints.weights.value();
  f.p_kpt = out.keypoints.p_kpt.value();
  f.f_obj = out.f_obj.value();
  f.p_nocs = out.keypoints.p_nocs.value();
  f.rotation = out.pose.rotation.value();
  f.translation = out.pose.translation.value();
  f.size = out.pose.size.value();
  // Relative embeddings at the detected keypoints.
  ad::Var<double> a, b;
  const auto q = tape.constant(MatD::Ones(f.p_kpt.rows(), state.config().c));
  g.gafa_local(out.keypoints.p_kpt, q, out.p_obj, out.f_obj, state.config().k_local, &a);
  g.gafa_global(out.keypoints.p_kpt, q, &b);
  f.alpha = a.value();
  f.beta = b.value();
  return f;
}

double max_abs(const MatD& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

void criterion_invariants() {
  const auto t0 = Clock::now();
  Verdict v;
  net::NetworkConfig cfg = harness::TrainConfig::desk_network();
  double row_sum = 0.0, hull = 0.0, perm = 0.0, trans = 0.0, embed = 0.0;
  std::mt19937_64 rng(303);
  for (int trial = 0; trial < 20; ++trial) {
    const auto state = net::ModelState::init(cfg, 40 + trial);
    const auto rec = testing::observed(trial % 3, 500 + trial, 256);
    const auto obs = net::make_observation<double>(rec.points, rec.attrs());
    const auto base = forward(state, obs);

    row_sum = std::max(row_sum, max_abs(base.weights.rowwise().sum().array() - 1.0));
    for (int d = 0; d < 200; ++d) {
      const Vec3 dir = testing::random_rotation(rng).col(0);
      hull = std::max(hull, (base.p_kpt * dir).maxCoeff() - (obs.points * dir).maxCoeff());
    }

    std::vector<int> order(256);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto shuffled = obs;
    for (int i = 0; i < 256; ++i) {
      shuffled.points.row(i) = obs.points.row(order[i]);
      shuffled.attrs.row(i) = obs.attrs.row(order[i]);
    }
    const auto p = forward(state, shuffled);
    for (int i = 0; i < 256; ++i) perm = std::max(perm, max_abs(p.f_obj.row(i) - base.f_obj.row(order[i])));
    perm = std::max({perm, max_abs(p.p_kpt - base.p_kpt), max_abs(p.rotation - base.rotation),
                     max_abs(p.translation - base.translation), max_abs(p.size - base.size)});

    auto moved = obs;
    const Eigen::RowVector3d shift = testing::random_points(rng, 1, 0.5).row(0);
    moved.points.rowwise() += shift;
    const auto m = forward(state, moved);
    trans = std::max({trans, max_abs(m.p_kpt.rowwise() - shift - base.p_kpt),
                      max_abs(m.translation.rowwise() - shift - base.translation),
                      max_abs(m.rotation - base.rotation), max_abs(m.size - base.size),
                      max_abs(m.p_nocs - base.p_nocs)});
    embed = std::max({embed, max_abs(m.alpha - base.alpha), max_abs(m.beta - base.beta)});
  }
  v.require(row_sum <= 1e-9, "softmax rows");
  v.require(hull <= 1e-9, "convex hull");
  v.require(perm <= 1e-8, "permutation");
  v.require(trans <= 1e-8, "translation");
  v.require(embed <= 1e-8, "alpha/beta");
  const double secs = seconds_since(t0);
  v.require(secs < 120.0, "runtime");
  v.detail << "row_sum=" << row_sum << " hull=" << hull << " perm=" << perm << " trans=" << trans
           << " alpha_beta=" << embed << " seconds=" << secs;
  report(3, "structural invariants", v);
}

// ---------------------------------------------------------------------------
// 4. outlier filter

void criterion_filter() {
  const auto t0 = Clock::now();
  Verdict v;
  const auto cats = synth::default_categories();
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> diag(0.1, 0.4);
  std::size_t outliers = 0, outliers_removed = 0, surface = 0, surface_kept = 0;
  for (int i = 0; i < 200; ++i) {
    const auto model = synth::sample_instance(cats[static_cast<std::size_t>(i % 3)], 9000 + i);
    const auto pose = synth::sample_pose(model, diag(rng), 7000 + i);
    synth::RenderOptions opt;
    opt.noise_sigma = 0.002;
    opt.outlier_min_offset = 0.05;
    const auto obs = synth::render_observation(model, pose, opt, 5000 + i);
    const auto kept = loss::filter_outliers(obs.points, obs.model_points, obs.gt_pose, 0.1);
    std::vector<char> keep(static_cast<std::size_t>(obs.size()), 0);
    for (int k : kept) keep[static_cast<std::size_t>(k)] = 1;
    for (std::size_t k = 0; k < keep.size(); ++k) {
      if (obs.outlier_mask[k]) {
        ++outliers;
        outliers_removed += keep[k] ? 0 : 1;
      } else {
        ++surface;
        surface_kept += keep[k];
      }
    }
  }
  const double removed = double(outliers_removed) / double(outliers);
  const double retained = double(surface_kept) / double(surface);
  v.require(outliers > 0 && outliers_removed == outliers, "all outliers removed");
  v.require(retained >= 0.99, "surface retention");
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime");
  v.detail << "outliers_removed=" << removed << " (" << outliers_removed << "/" << outliers
           << ") surface_kept=" << retained << " seconds=" << secs;
  report(4, "outlier filter", v);
}

// ---------------------------------------------------------------------------
// 5-7. training

struct TrainedRun {
  harness::MetricsReport report;
  double seconds = 0.0;
  int steps = 0;
};

TrainedRun train_and_eval(const synth::Dataset& ds, const harness::TrainConfig& cfg,
                          const std::string& label) {
  TrainedRun r;
  const auto result = harness::train(ds, cfg);
  r.seconds = result.seconds;
  r.steps = harness::effective_steps(cfg, ds.indices(synth::Split::Train).size());
  r.report = harness::evaluate(result.model, ds, cfg);
  emit("  run %-16s seed=%llu steps=%d seconds=%.0f 10deg5cm=%.4f median_rot=%.2f median_trans=%.4f\n",
              label.c_str(), static_cast<unsigned long long>(cfg.seed), r.steps, r.seconds,
              r.report.mean.deg10_5cm, r.report.mean.median_rot_deg, r.report.mean.median_trans);
  std::fflush(stdout);
  return r;
}

void criteria_training(const harness::TrainConfig& base) {
  const auto t0 = Clock::now();
  const auto ds = synth::build_dataset_in_memory(synth::DatasetConfig{});

  // Every ablation row that the trends need, three seeds each. The full
  // configuration at seed 0 doubles as the end-to-end run.
  std::map<std::string, harness::TrainConfig> rows;
  rows["full"] = base;
  for (const auto& [label, c] : harness::ablation_configs("fps_vs_iakd", base))
    if (label == "FPS") rows["fps"] = c;
  for (const auto& [label, c] : harness::ablation_configs("losses", base)) {
    if (label == "L_div") rows["div_only"] = c;
    if (label == "None") rows["no_reg"] = c;
  }
  for (const auto& [label, c] : harness::ablation_configs("gafa", base))
    if (label == "w/o GAFA") rows["no_gafa"] = c;

  std::map<std::string, double> mean_10_5;
  TrainedRun main_run;
  for (const char* name : {"full", "fps", "div_only", "no_reg", "no_gafa"}) {
    double sum = 0.0;
    for (std::uint64_t seed : {0, 1, 2}) {
      auto c = rows.at(name);
      c.seed = seed;
      const auto run = train_and_eval(ds, c, name);
      sum += run.report.mean.deg10_5cm;
      if (std::string(name) == "full" && seed == 0) {
        main_run = run;
        Verdict v5;
        const auto& m = run.report.mean;
        v5.require(m.median_rot_deg <= 15.0, "median rotation");
        v5.require(m.median_trans <= 0.02, "median translation");
        v5.require(m.deg10_5cm >= 0.6, "10deg5cm");
        v5.require(run.steps <= 15000, "step budget");
        v5.require(run.seconds <= 4 * 3600.0, "time budget");
        v5.detail << "median_rot_deg=" << m.median_rot_deg << " median_trans_m=" << m.median_trans
                  << " 10deg5cm=" << m.deg10_5cm << " steps=" << run.steps
                  << " seconds=" << run.seconds;
        report(5, "end-to-end training", v5);

        Verdict v7;
        const double low = run.report.nocs_errors.mass(0.0, 0.1);
        const double high = run.report.nocs_errors.mass(0.15, 0.5);
        v7.require(low > high, "histogram mass");
        v7.detail << "mass[0,0.1]=" << low << " mass[0.15,0.5]=" << high
                  << " samples=" << run.report.nocs_errors.total();
        report(7, "nocs error histogram", v7);
      }
    }
    mean_10_5[name] = sum / 3.0;
  }

  Verdict v6;
  const auto& m = mean_10_5;
  v6.require(m.at("full") >= m.at("fps"), "IAKD >= FPS");
  v6.require(m.at("full") >= m.at("div_only"), "full >= L_div only");
  v6.require(m.at("div_only") >= m.at("no_reg"), "L_div only >= none");
  v6.require(m.at("full") >= m.at("no_gafa"), "GAFA >= w/o GAFA");
  v6.detail << "full=" << m.at("full") << " fps=" << m.at("fps") << " div_only=" << m.at("div_only")
            << " none=" << m.at("no_reg") << " no_gafa=" << m.at("no_gafa")
            << " total_seconds=" << seconds_since(t0);
  report(6, "ablation trends", v6);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance gate"};
  bool fast = false;
  bool training = false;
  app.add_option("--fd-step", kH, "finite-difference step for the network check");
  std::vector<std::string> overrides;
  app.add_flag("--fast", fast, "criteria 1-4");
  app.add_flag("--training", training, "criteria 5-7");
  app.add_option("--set", overrides, "training config override key=value");
  std::string log_path;
  app.add_option("--log", log_path, "also write the report to this file");
  CLI11_PARSE(app, argc, argv);
  if (!log_path.empty()) log_file = std::fopen(log_path.c_str(), "w");
  if (!fast && !training) fast = training = true;

  try {
    if (fast) {
      criterion_geometry();
      criterion_losses();
      criterion_invariants();
      criterion_filter();
    }
    if (training) {
      harness::TrainConfig base;
      for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw agpose::ConfigError("--set expects key=value");
        harness::apply(base, o.substr(0, eq), o.substr(eq + 1));
      }
      harness::validate(base);
      criteria_training(base);
    }
  } catch (const std::exception& e) {
    emit("acceptance aborted: %s\n", e.what());
    return 1;
  }
  emit("acceptance: %s (%d failing)\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
