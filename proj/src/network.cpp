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

#include "agpose/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "agpose/errors.hpp"

namespace agpose::net {

std::string to_string(Detector d) { return d == Detector::Iakd ? "iakd" : "fps"; }

std::string to_string(GafaMode m) {
  switch (m) {
    case GafaMode::Full:
      return "full";
    case GafaMode::None:
      return "none";
    case GafaMode::NoLocal:
      return "no_local";
    case GafaMode::NoGlobal:
      return "no_global";
    case GafaMode::VanillaAttention:
      return "vanilla_attn";
  }
  return "unknown";
}

Detector detector_from_string(const std::string& s) {
  if (s == "iakd") return Detector::Iakd;
  if (s == "fps") return Detector::Fps;
  throw ConfigError("unknown detector '" + s + "' (expected iakd|fps)");
}

GafaMode gafa_from_string(const std::string& s) {
  for (auto m : {GafaMode::Full, GafaMode::None, GafaMode::NoLocal, GafaMode::NoGlobal,
                 GafaMode::VanillaAttention}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown gafa mode '" + s + "'");
}

void validate(const NetworkConfig& c) {
  if (c.n_kpt < 2) throw ConfigError("n_kpt must be >= 2");
  if (c.c_attr <= 0 || c.c_point() < 2) throw ConfigError("c must exceed c_attr by at least 2");
  if (c.heads <= 0 || c.c % c.heads != 0) throw ConfigError("c must be divisible by heads");
  if (c.attn_blocks < 1 || c.ffn_hidden < 1 || c.mlp_hidden < 1) {
    throw ConfigError("layer widths must be positive");
  }
  if (c.encoder_k < 1 || c.k_local < 1) throw ConfigError("neighborhood sizes must be positive");
  if (!(c.temperature_init > 0.0)) throw ConfigError("temperature_init must be positive");
}

// ---------------------------------------------------------------------------
// ModelState

namespace {

class Initializer {
 public:
  Initializer(std::uint64_t seed) : rng_(seed) {}

  Matrix<double> uniform(Eigen::Index rows, Eigen::Index cols, double bound) {
    std::uniform_real_distribution<double> d(-bound, bound);
    Matrix<double> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng_);
    return m;
  }

  Matrix<double> normal(Eigen::Index rows, Eigen::Index cols, double stddev) {
    std::normal_distribution<double> d(0.0, stddev);
    Matrix<double> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng_);
    return m;
  }

 private:
  std::mt19937_64 rng_;
};

std::size_t linear_params(std::size_t in, std::size_t out) { return in * out + out; }

// Hidden width so that a c -> h -> c MLP has about `target` parameters.
int matched_hidden(std::size_t c, std::size_t target) {
  const double h = (static_cast<double>(target) - static_cast<double>(c)) /
                   (2.0 * static_cast<double>(c) + 1.0);
  return std::max(1, static_cast<int>(std::lround(h)));
}

std::size_t iakd_params(const NetworkConfig& c) {
  const std::size_t C = static_cast<std::size_t>(c.c);
  const std::size_t per_block = 4 * linear_params(C, C) + 4 * C +
                                linear_params(C, static_cast<std::size_t>(c.ffn_hidden)) +
                                linear_params(static_cast<std::size_t>(c.ffn_hidden), C);
  return static_cast<std::size_t>(c.n_kpt) * C + 1 + per_block * static_cast<std::size_t>(c.attn_blocks);
}

std::size_t local_params(const NetworkConfig& c) {
  const std::size_t C = static_cast<std::size_t>(c.c);
  return linear_params(3, C) + linear_params(C, C) + linear_params(2 * C, C) +
         linear_params(C, C) + 2 * linear_params(C, C);
}

std::size_t global_params(const NetworkConfig& c) {
  const std::size_t C = static_cast<std::size_t>(c.c);
  return linear_params(3, C) + linear_params(C, C) + linear_params(3 * C, C) + linear_params(C, C);
}

}  // namespace

void ModelState::add(const std::string& name, Matrix<double> value) {
  index_[name] = params_.size();
  params_.push_back({name, std::move(value)});
}

ModelState ModelState::init(const NetworkConfig& config, std::uint64_t seed) {
  validate(config);
  ModelState s;
  s.config_ = config;
  Initializer init(seed);
  const int C = config.c;
  const int H = config.mlp_hidden;

  const auto lin = [&](const std::string& name, int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    s.add(name + ".W", init.uniform(in, out, bound));
    s.add(name + ".b", init.uniform(1, out, bound));
  };
  const auto mlp2 = [&](const std::string& name, int in, int hidden, int out) {
    lin(name + ".0", in, hidden);
    lin(name + ".1", hidden, out);
  };
  const auto norm = [&](const std::string& name) {
    s.add(name + ".g", Matrix<double>::Ones(1, C));
    s.add(name + ".b", Matrix<double>::Zero(1, C));
  };

  const int d = config.c_point() / 2 > 0 ? config.c_point() / 2 : 1;
  mlp2("enc.pt", 3, d, d);
  lin("enc.agg0", 2 * d, d);
  lin("enc.agg1", 2 * d, config.c_point());
  mlp2("enc.attr", config.attr_in, config.c_attr, config.c_attr);

  if (config.detector == Detector::Iakd) {
    s.add("iakd.query", init.normal(config.n_kpt, C, config.query_init_std));
    s.add("iakd.log_tau", Matrix<double>::Constant(1, 1, std::log(config.temperature_init)));
    for (int b = 0; b < config.attn_blocks; ++b) {
      const std::string p = "iakd.b" + std::to_string(b);
      for (const char* m : {".q", ".k", ".v", ".o"}) lin(p + m, C, C);
      norm(p + ".ln1");
      mlp2(p + ".ffn", C, config.ffn_hidden, C);
      norm(p + ".ln2");
    }
  } else {
    mlp2("fps.mlp", C, matched_hidden(C, iakd_params(config)), C);
  }

  const auto local = [&] {
    mlp2("gafa.alpha", 3, C, C);
    mlp2("gafa.score", 2 * C, C, C);
    mlp2("gafa.lupdate", C, C, C);
  };
  const auto global = [&] {
    mlp2("gafa.beta", 3, C, C);
    mlp2("gafa.global", 3 * C, C, C);
  };
  switch (config.gafa) {
    case GafaMode::Full:
      local();
      global();
      break;
    case GafaMode::None:
      mlp2("gafa.mlp", C, matched_hidden(C, local_params(config) + global_params(config)), C);
      break;
    case GafaMode::NoLocal:
      mlp2("gafa.local_mlp", C, matched_hidden(C, local_params(config)), C);
      global();
      break;
    case GafaMode::NoGlobal:
      local();
      mlp2("gafa.global_mlp", C, matched_hidden(C, global_params(config)), C);
      break;
    case GafaMode::VanillaAttention:
      for (const char* m : {"gafa.vq", "gafa.vk", "gafa.vv", "gafa.sq", "gafa.sk", "gafa.sv"}) {
        lin(m, C, C);
      }
      mlp2("gafa.lupdate", C, C, C);
      mlp2("gafa.global", 2 * C, C, C);
      break;
  }

  mlp2("head.nocs", C, H, 3);
  mlp2("head.mix", 6 + 2 * C, H, C);
  mlp2("head.R", C, H, 6);
  mlp2("head.t", C, H, 3);
  mlp2("head.s", C, H, 3);
  return s;
}

const Matrix<double>& ModelState::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return params_[it->second].value;
}

Matrix<double>& ModelState::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return params_[it->second].value;
}

std::size_t ModelState::parameter_count() const { return parameter_count(""); }

std::size_t ModelState::parameter_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) n += static_cast<std::size_t>(p.value.size());
  }
  return n;
}

bool ModelState::all_finite() const {
  return std::all_of(params_.begin(), params_.end(),
                     [](const Param& p) { return p.value.allFinite(); });
}

io::BlockSet ModelState::to_blocks() const {
  io::BlockSet set;
  for (const auto& p : params_) set.add_matrix(p.name, p.value);
  return set;
}

ModelState ModelState::from_blocks(const NetworkConfig& config, const io::BlockSet& blocks) {
  ModelState s = init(config, 0);
  for (auto& p : s.params_) {
    Matrix<double> v = blocks.matrix_f64(p.name);
    if (v.rows() != p.value.rows() || v.cols() != p.value.cols()) {
      throw CorruptDataset("checkpoint parameter '" + p.name + "' has the wrong shape");
    }
    p.value = std::move(v);
  }
  return s;
}

Gradients Gradients::zeros_like(const ModelState& state) {
  Gradients g;
  for (const auto& p : state.params()) {
    g.values.push_back(Matrix<double>::Zero(p.value.rows(), p.value.cols()));
  }
  return g;
}

void Gradients::scale(double s) {
  for (auto& v : values) v *= s;
}

double Gradients::squared_norm() const {
  double n = 0.0;
  for (const auto& v : values) n += v.squaredNorm();
  return n;
}

// ---------------------------------------------------------------------------
// Neighborhood helpers

template <typename T>
std::vector<int> knn_indices(const Matrix<T>& queries, const Matrix<T>& reference, int k) {
  const auto n_ref = static_cast<int>(reference.rows());
  if (k > n_ref || k < 1) throw ConfigError("knn: k must lie in [1, N]");
  std::vector<int> out(static_cast<std::size_t>(queries.rows()) * static_cast<std::size_t>(k));
  std::vector<int> order(static_cast<std::size_t>(n_ref));
  Eigen::Matrix<T, Eigen::Dynamic, 1> dist(n_ref);
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    dist = (reference.rowwise() - queries.row(q)).rowwise().squaredNorm();
    std::iota(order.begin(), order.end(), 0);
    const auto closer = [&](int a, int b) {
      return dist(a) < dist(b) || (dist(a) == dist(b) && a < b);
    };
    if (k < n_ref) std::nth_element(order.begin(), order.begin() + k, order.end(), closer);
    std::sort(order.begin(), order.begin() + k, closer);
    std::copy(order.begin(), order.begin() + k, out.begin() + q * k);
  }
  return out;
}

template std::vector<int> knn_indices<float>(const Matrix<float>&, const Matrix<float>&, int);
template std::vector<int> knn_indices<double>(const Matrix<double>&, const Matrix<double>&, int);

std::vector<int> farthest_point_sampling(const geometry::Points& points, int n) {
  const auto count = static_cast<int>(points.rows());
  if (n < 1 || n > count) throw ConfigError("fps: n must lie in [1, N]");
  const Eigen::RowVector3d centroid = points.colwise().mean();
  const Eigen::VectorXd to_center = (points.rowwise() - centroid).rowwise().squaredNorm();
  int current = 0;
  for (int i = 1; i < count; ++i) {
    if (to_center(i) < to_center(current)) current = i;
  }
  std::vector<int> selected{current};
  Eigen::VectorXd min_dist = (points.rowwise() - points.row(current)).rowwise().squaredNorm();
  std::vector<bool> taken(static_cast<std::size_t>(count), false);
  taken[static_cast<std::size_t>(current)] = true;
  while (static_cast<int>(selected.size()) < n) {
    int best = -1;
    for (int i = 0; i < count; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      if (best < 0 || min_dist(i) > min_dist(best)) best = i;
    }
    selected.push_back(best);
    taken[static_cast<std::size_t>(best)] = true;
    min_dist = min_dist.cwiseMin((points.rowwise() - points.row(best)).rowwise().squaredNorm());
  }
  return selected;
}

// ---------------------------------------------------------------------------
// Graph

template <typename T>
geometry::Pose PosePrediction<T>::to_pose() const {
  geometry::Pose p;
  p.R = rotation.value().template cast<double>();
  p.t = translation.value().row(0).transpose().template cast<double>();
  // Sizes are clamped positive so that the pose stays a valid box.
  p.s = size.value().row(0).transpose().template cast<double>().cwiseMax(1e-4);
  return p;
}

template <typename T>
Observation<T> make_observation(
    const geometry::Points& points,
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& attrs) {
  return {points.cast<T>(), attrs.cast<T>(), {}};
}

template <typename T>
Graph<T>::Graph(const ModelState& state, Tape<T>& tape, bool training)
    : state_(state), tape_(tape), training_(training) {}

template <typename T>
Var<T> Graph<T>::param(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Matrix<T> v = state_.param(name).template cast<T>();
  const Var<T> var = training_ ? tape_.leaf(std::move(v)) : tape_.constant(std::move(v));
  bound_.emplace(name, var);
  return var;
}

template <typename T>
Var<T> Graph<T>::linear(Var<T> x, const std::string& name) {
  return ad::add_row(ad::matmul(x, param(name + ".W")), param(name + ".b"));
}

template <typename T>
Var<T> Graph<T>::mlp(Var<T> x, const std::string& name, int layers) {
  for (int i = 0; i < layers; ++i) {
    x = linear(x, name + "." + std::to_string(i));
    if (i + 1 < layers) x = ad::relu(x);
  }
  return x;
}

template <typename T>
Var<T> Graph<T>::norm_affine(Var<T> x, const std::string& name) {
  return ad::add_row(ad::mul_row(ad::layer_norm_rows(x), param(name + ".g")), param(name + ".b"));
}

template <typename T>
Var<T> Graph<T>::encode_features(const Observation<T>& obs) {
  const auto& cfg = config();
  const auto n = static_cast<int>(obs.points.rows());
  const int k = std::min(cfg.encoder_k, n);
  const Eigen::Matrix<T, 1, 3> mean = obs.points.colwise().mean();
  const Matrix<T> centered =
      (obs.points.rowwise() - mean) * static_cast<T>(cfg.coord_scale);
  const std::vector<int> knn =
      obs.neighbors.size() == static_cast<std::size_t>(n) * static_cast<std::size_t>(k)
          ? obs.neighbors
          : knn_indices<T>(obs.points, obs.points, k);

  Var<T> h = ad::relu(mlp(tape_.constant(centered), "enc.pt", 2));
  Var<T> g = ad::segment_max(ad::gather_rows(h, knn), k);
  h = ad::relu(linear(ad::concat_cols({h, ad::sub(g, h)}), "enc.agg0"));
  g = ad::segment_max(ad::gather_rows(h, knn), k);
  const Var<T> point_branch = linear(ad::concat_cols({h, ad::sub(g, h)}), "enc.agg1");
  const Var<T> attr_branch = mlp(tape_.constant(obs.attrs), "enc.attr", 2);
  return ad::concat_cols({attr_branch, point_branch});
}

template <typename T>
Var<T> Graph<T>::attention_block(Var<T> x, Var<T> f, int block) {
  const auto& cfg = config();
  const std::string p = "iakd.b" + std::to_string(block);
  const Var<T> q = linear(x, p + ".q");
  const Var<T> k = linear(f, p + ".k");
  const Var<T> v = linear(f, p + ".v");
  const int dh = cfg.c / cfg.heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Var<T>> heads;
  for (int h = 0; h < cfg.heads; ++h) {
    const Var<T> att = ad::softmax_rows(
        ad::scale(ad::matmul_nt(ad::slice_cols(q, h * dh, dh), ad::slice_cols(k, h * dh, dh)),
                  inv_sqrt));
    heads.push_back(ad::matmul(att, ad::slice_cols(v, h * dh, dh)));
  }
  const Var<T> attended = linear(ad::concat_cols(std::span<const Var<T>>(heads)), p + ".o");
  x = norm_affine(ad::add(x, attended), p + ".ln1");
  return norm_affine(ad::add(x, mlp(x, p + ".ffn", 2)), p + ".ln2");
}

template <typename T>
KeypointSet<T> Graph<T>::iakd_forward(Var<T> f_obj, Var<T> p_obj) {
  const auto& cfg = config();
  Var<T> x = param("iakd.query");
  for (int b = 0; b < cfg.attn_blocks; ++b) x = attention_block(x, f_obj, b);
  KeypointSet<T> kp;
  kp.q_ins = x;
  kp.heatmap = ad::matmul_nt(ad::l2_normalize_rows(x), ad::l2_normalize_rows(f_obj));
  const Var<T> inv_tau = ad::exp(ad::scale(param("iakd.log_tau"), T(-1)));
  kp.weights = ad::softmax_rows(ad::scale_by(kp.heatmap, inv_tau));
  kp.p_kpt = ad::matmul(kp.weights, p_obj);
  kp.f_kpt = ad::matmul(kp.weights, f_obj);
  return kp;
}

template <typename T>
KeypointSet<T> Graph<T>::fps_forward(Var<T> f_obj, Var<T> p_obj) {
  const auto& cfg = config();
  KeypointSet<T> kp;
  kp.fps_index = farthest_point_sampling(p_obj.value().template cast<double>(),
                                         std::min<int>(cfg.n_kpt, static_cast<int>(p_obj.rows())));
  kp.p_kpt = ad::gather_rows(p_obj, kp.fps_index);
  kp.f_kpt = ad::gather_rows(f_obj, kp.fps_index);
  kp.q_ins = mlp(kp.f_kpt, "fps.mlp", 2);
  return kp;
}

namespace {
std::vector<int> repeat_each(int n, int times) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(times));
  for (int i = 0; i < n; ++i) out.insert(out.end(), static_cast<std::size_t>(times), i);
  return out;
}

std::vector<int> tile(int n, int times) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(times));
  for (int t = 0; t < times; ++t) {
    for (int i = 0; i < n; ++i) out.push_back(i);
  }
  return out;
}
}  // namespace

template <typename T>
Var<T> Graph<T>::gafa_local(Var<T> p_kpt, Var<T> q_ins, Var<T> p_obj, Var<T> f_obj, int k,
                            Var<T>* alpha_out) {
  const auto& cfg = config();
  const int n_kpt = static_cast<int>(p_kpt.rows());
  k = std::min<int>(k, static_cast<int>(p_obj.rows()));
  const std::vector<int> idx = knn_indices<T>(p_kpt.value(), p_obj.value(), k);
  const std::vector<int> rep = repeat_each(n_kpt, k);
  const Var<T> f_knn = ad::gather_rows(f_obj, idx);

  if (cfg.gafa == GafaMode::VanillaAttention) {
    const Var<T> q = ad::gather_rows(linear(q_ins, "gafa.vq"), rep);
    const Var<T> scores = ad::reshape(ad::row_dot(q, linear(f_knn, "gafa.vk")), n_kpt, k);
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(cfg.c));
    const Var<T> agg = ad::segment_weighted_sum(ad::softmax_rows(ad::scale(scores, inv_sqrt)),
                                                linear(f_knn, "gafa.vv"));
    return mlp(ad::add(agg, q_ins), "gafa.lupdate", 2);
  }

  const Var<T> rel = ad::scale(
      ad::sub(ad::gather_rows(p_kpt, rep), ad::gather_rows(p_obj, idx)),
      static_cast<T>(cfg.coord_scale));
  const Var<T> alpha = mlp(rel, "gafa.alpha", 2);
  if (alpha_out) *alpha_out = alpha;
  const Var<T> f_local = ad::segment_mean(alpha, k);
  const Var<T> score = mlp(ad::concat_cols({q_ins, f_local}), "gafa.score", 2);
  const Var<T> sim = ad::reshape(
      ad::row_dot(ad::gather_rows(ad::l2_normalize_rows(score), rep), ad::l2_normalize_rows(f_knn)),
      n_kpt, k);
  const Var<T> agg = ad::segment_weighted_sum(ad::softmax_rows(sim), f_knn);
  return mlp(ad::add(agg, q_ins), "gafa.lupdate", 2);
}

template <typename T>
Var<T> Graph<T>::gafa_global(Var<T> p_kpt, Var<T> q_ins, Var<T>* beta_out) {
  const auto& cfg = config();
  const int n_kpt = static_cast<int>(p_kpt.rows());

  if (cfg.gafa == GafaMode::VanillaAttention) {
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(cfg.c));
    const Var<T> att = ad::softmax_rows(ad::scale(
        ad::matmul_nt(linear(q_ins, "gafa.sq"), linear(q_ins, "gafa.sk")), inv_sqrt));
    const Var<T> mixed = ad::matmul(att, linear(q_ins, "gafa.sv"));
    return mlp(ad::concat_cols({q_ins, mixed}), "gafa.global", 2);
  }

  const Var<T> rel = ad::scale(ad::sub(ad::gather_rows(p_kpt, repeat_each(n_kpt, n_kpt)),
                                       ad::gather_rows(p_kpt, tile(n_kpt, n_kpt))),
                               static_cast<T>(cfg.coord_scale));
  const Var<T> beta = mlp(rel, "gafa.beta", 2);
  if (beta_out) *beta_out = beta;
  const Var<T> f_global = ad::segment_mean(beta, n_kpt);
  const Var<T> q_global =
      ad::gather_rows(ad::mean_rows(q_ins), std::vector<int>(static_cast<std::size_t>(n_kpt), 0));
  return mlp(ad::concat_cols({q_ins, q_global, f_global}), "gafa.global", 2);
}

template <typename T>
PosePrediction<T> Graph<T>::pose_head(KeypointSet<T>& kpts, Var<T> p_obj) {
  const auto& cfg = config();
  const T cs = static_cast<T>(cfg.coord_scale);
  kpts.p_nocs = mlp(kpts.q_ins, "head.nocs", 2);

  const Matrix<T> mean = p_obj.value().colwise().mean();
  const Var<T> centered = ad::scale(ad::add_row(kpts.p_kpt, tape_.constant(-mean)), cs);
  const Var<T> f_pose = ad::concat_cols({centered, kpts.f_kpt, kpts.p_nocs, kpts.q_ins});
  const Var<T> pooled = ad::mean_rows(ad::relu(mlp(f_pose, "head.mix", 2)));

  PosePrediction<T> out;
  out.rot6d = mlp(pooled, "head.R", 2);
  out.t_residual = ad::scale(mlp(pooled, "head.t", 2), T(1) / cs);
  out.size = ad::scale(mlp(pooled, "head.s", 2), T(1) / cs);
  out.translation = ad::add(out.t_residual, tape_.constant(mean));

  // Gram–Schmidt on the two predicted columns.
  const Var<T> b1 = ad::l2_normalize_rows(ad::slice_cols(out.rot6d, 0, 3));
  const Var<T> a2 = ad::slice_cols(out.rot6d, 3, 3);
  const Var<T> b2 = ad::l2_normalize_rows(ad::sub(a2, ad::mul_col(b1, ad::row_dot(b1, a2))));
  const Var<T> b3 = ad::cross_rows(b1, b2);
  out.rotation = ad::transpose(ad::concat_rows({b1, b2, b3}));
  return out;
}

template <typename T>
typename Graph<T>::Output Graph<T>::forward(const Observation<T>& obs) {
  const auto& cfg = config();
  Output out;
  out.p_obj = tape_.constant(obs.points);
  out.f_obj = encode_features(obs);
  out.keypoints = cfg.detector == Detector::Iakd ? iakd_forward(out.f_obj, out.p_obj)
                                                 : fps_forward(out.f_obj, out.p_obj);
  auto& kp = out.keypoints;
  switch (cfg.gafa) {
    case GafaMode::Full:
    case GafaMode::VanillaAttention:
      kp.q_ins = gafa_local(kp.p_kpt, kp.q_ins, out.p_obj, out.f_obj, cfg.k_local);
      kp.q_ins = gafa_global(kp.p_kpt, kp.q_ins);
      break;
    case GafaMode::None:
      kp.q_ins = mlp(kp.q_ins, "gafa.mlp", 2);
      break;
    case GafaMode::NoLocal:
      kp.q_ins = mlp(kp.q_ins, "gafa.local_mlp", 2);
      kp.q_ins = gafa_global(kp.p_kpt, kp.q_ins);
      break;
    case GafaMode::NoGlobal:
      kp.q_ins = gafa_local(kp.p_kpt, kp.q_ins, out.p_obj, out.f_obj, cfg.k_local);
      kp.q_ins = mlp(kp.q_ins, "gafa.global_mlp", 2);
      break;
  }
  out.pose = pose_head(kp, out.p_obj);
  return out;
}

template <typename T>
void Graph<T>::accumulate_gradients(Gradients& grads, double weight) const {
  const auto& params = state_.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = bound_.find(params[i].name);
    if (it == bound_.end()) continue;
    grads.values[i] += tape_.grad(it->second).template cast<double>() * weight;
  }
}

template class Graph<float>;
template class Graph<double>;
template struct PosePrediction<float>;
template struct PosePrediction<double>;
template Observation<float> make_observation<float>(
    const geometry::Points&, const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>&);
template Observation<double> make_observation<double>(
    const geometry::Points&, const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>&);

}  // namespace agpose::net
