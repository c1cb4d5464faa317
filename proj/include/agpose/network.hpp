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

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agpose/autodiff.hpp"
#include "agpose/blockio.hpp"
#include "agpose/geometry.hpp"

namespace agpose::net {

using ad::Matrix;
using ad::Tape;
using ad::Var;

enum class Detector { Iakd, Fps };
enum class GafaMode { Full, None, NoLocal, NoGlobal, VanillaAttention };

std::string to_string(Detector d);
std::string to_string(GafaMode m);
Detector detector_from_string(const std::string& s);
GafaMode gafa_from_string(const std::string& s);

struct NetworkConfig {
  int n_kpt = 96;
  int c = 256;           ///< feature width C = c_attr + c_point
  int c_attr = 128;      ///< appearance branch width
  int attr_in = 128;     ///< input attribute channels
  int heads = 4;
  int attn_blocks = 4;
  int ffn_hidden = 512;
  int encoder_k = 16;
  int k_local = 16;
  int mlp_hidden = 256;
  double temperature_init = 0.1;
  double query_init_std = 0.02;
  /// Multiplies centered or relative coordinates before they enter an MLP
  /// and divides the translation/size outputs, so layers see O(1) values.
  double coord_scale = 10.0;
  Detector detector = Detector::Iakd;
  GafaMode gafa = GafaMode::Full;

  int c_point() const { return c - c_attr; }
};

/// Throws ConfigError on inconsistent widths.
void validate(const NetworkConfig& config);

/// All learnable parameters, stored in 64-bit in creation order.
class ModelState {
 public:
  struct Param {
    std::string name;
    Matrix<double> value;
  };

  static ModelState init(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& params() { return params_; }
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const Matrix<double>& param(const std::string& name) const;
  Matrix<double>& param(const std::string& name);
  std::size_t parameter_count() const;
  /// Sum of parameter counts over names starting with `prefix`.
  std::size_t parameter_count(const std::string& prefix) const;
  bool all_finite() const;

  long step = 0;

  io::BlockSet to_blocks() const;
  static ModelState from_blocks(const NetworkConfig& config, const io::BlockSet& blocks);

 private:
  void add(const std::string& name, Matrix<double> value);

  NetworkConfig config_;
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

/// Gradient buffer aligned with ModelState::params().
struct Gradients {
  std::vector<Matrix<double>> values;

  static Gradients zeros_like(const ModelState& state);
  void scale(double s);
  double squared_norm() const;
};

/// Indices of the k nearest reference rows for every query row. Ties are
/// broken by the lower reference index. Output is row-major n_query×k.
template <typename T>
std::vector<int> knn_indices(const Matrix<T>& queries, const Matrix<T>& reference, int k);

/// Farthest point sampling seeded with the point nearest to the centroid.
std::vector<int> farthest_point_sampling(const geometry::Points& points, int n);

template <typename T>
struct KeypointSet {
  Var<T> heatmap;   ///< N_kpt×N cosine similarities before temperature (IAKD only)
  Var<T> weights;   ///< softmax(H / tau) (IAKD only)
  Var<T> p_kpt;     ///< N_kpt×3 camera space
  Var<T> f_kpt;     ///< N_kpt×C
  Var<T> q_ins;     ///< N_kpt×C
  Var<T> p_nocs;    ///< N_kpt×3 (set by pose_head)
  std::vector<int> fps_index;  ///< selected rows (FPS only)
};

template <typename T>
struct PosePrediction {
  Var<T> rot6d;       ///< 1×6
  Var<T> rotation;    ///< 3×3
  Var<T> t_residual;  ///< 1×3
  Var<T> translation; ///< 1×3, mean(P_obj) + t_residual
  Var<T> size;        ///< 1×3

  geometry::Pose to_pose() const;
};

/// Network inputs for one object.
template <typename T>
struct Observation {
  Matrix<T> points;  ///< N×3
  Matrix<T> attrs;   ///< N×attr_in
  // Optional precomputed encoder neighborhoods (N×encoder_k, flat). Valid
  // under any similarity transform of the points.
  std::vector<int> neighbors;
};

/// Binds a ModelState to a tape and builds the forward graph. In training
/// mode parameters become gradient leaves; otherwise they are constants.
template <typename T>
class Graph {
 public:
  Graph(const ModelState& state, Tape<T>& tape, bool training);

  Var<T> encode_features(const Observation<T>& obs);
  KeypointSet<T> iakd_forward(Var<T> f_obj, Var<T> p_obj);
  KeypointSet<T> fps_forward(Var<T> f_obj, Var<T> p_obj);
  /// Returns the updated Q_ins. `alpha_out`, when given, receives the
  /// relative positional embeddings (N_kpt·K)×C.
  Var<T> gafa_local(Var<T> p_kpt, Var<T> q_ins, Var<T> p_obj, Var<T> f_obj, int k,
                    Var<T>* alpha_out = nullptr);
  Var<T> gafa_global(Var<T> p_kpt, Var<T> q_ins, Var<T>* beta_out = nullptr);
  PosePrediction<T> pose_head(KeypointSet<T>& kpts, Var<T> p_obj);

  struct Output {
    Var<T> f_obj;
    Var<T> p_obj;
    KeypointSet<T> keypoints;
    PosePrediction<T> pose;
  };
  Output forward(const Observation<T>& obs);

  /// Adds this tape's parameter gradients, times `weight`, into `grads`.
  void accumulate_gradients(Gradients& grads, double weight) const;

  Tape<T>& tape() { return tape_; }
  const NetworkConfig& config() const { return state_.config(); }

 private:
  Var<T> param(const std::string& name);
  Var<T> linear(Var<T> x, const std::string& name);
  /// Linear layers name.0 ... name.{n-1} with ReLU between them.
  Var<T> mlp(Var<T> x, const std::string& name, int layers);
  Var<T> norm_affine(Var<T> x, const std::string& name);
  Var<T> attention_block(Var<T> x, Var<T> f, int block);

  const ModelState& state_;
  Tape<T>& tape_;
  bool training_;
  std::map<std::string, Var<T>> bound_;
};

template <typename T>
Observation<T> make_observation(const geometry::Points& points,
                                const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                                    Eigen::RowMajor>& attrs);

}  // namespace agpose::net
