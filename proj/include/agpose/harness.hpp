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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "agpose/geometry.hpp"
#include "agpose/losses.hpp"
#include "agpose/network.hpp"
#include "agpose/synthdata.hpp"

namespace agpose::harness {

enum class Recovery { Regression, Umeyama };

std::string to_string(Recovery r);
Recovery recovery_from_string(const std::string& s);

struct TrainConfig {
  int steps = 10000;
  int epochs = 0;  // when > 0 and steps == 0, steps = epochs * batches per epoch
  int batch_size = 8;
  double lr_min = 2e-5;
  double lr_max = 5e-4;
  int cycle_length = 0;  // full triangle in steps; 0 means one triangle over the run
  std::uint64_t seed = 0;
  int num_points = 256;
  double grad_clip = 0.0;  // global norm, 0 disables
  net::NetworkConfig network = desk_network();
  loss::LossWeights weights;
  loss::Chamfer chamfer = loss::Chamfer::Object;
  loss::PoseNorm pose_norm = loss::PoseNorm::Norm;
  bool augment = true;
  synth::AugmentOptions augment_options;
  std::vector<std::string> symmetric_categories;  // empty: use the dataset flags
  Recovery recovery = Recovery::Regression;
  int log_every = 100;
  int eval_every = 0;

  static net::NetworkConfig desk_network();
};

void validate(const TrainConfig& c);

// key=value text used for config files, checkpoints and echoed run configs.
io::KeyValueText to_text(const TrainConfig& c);
// Applies every entry; unknown keys or malformed values throw ConfigError.
void apply(TrainConfig& c, const io::KeyValueText& kv);
void apply(TrainConfig& c, const std::string& key, const std::string& value);

int effective_steps(const TrainConfig& c, std::size_t train_records);
int effective_cycle(const TrainConfig& c, int steps);

// Triangular cyclical schedule whose amplitude halves every cycle.
double lr_at(int step, double lr_min, double lr_max, int cycle_length);

struct StepLog {
  int step = 0;
  double lr = 0.0;
  double ocd = 0.0;
  double div = 0.0;
  double nocs = 0.0;
  double pose = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

std::string format(const StepLog& s);

class Histogram {
 public:
  Histogram(double lo = 0.0, double hi = 0.5, int bins = 50);

  // Values at or above hi land in the last bin, negatives in the first.
  void add(double x);
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::vector<double> edges() const;
  std::uint64_t total() const;
  // Fraction of samples whose bin lies inside [a, b].
  double mass(double a, double b) const;

 private:
  double lo_;
  double hi_;
  std::vector<std::uint64_t> counts_;
};

struct InstanceResult {
  std::size_t record = 0;
  std::int32_t category = 0;
  std::int32_t instance_id = 0;
  bool symmetric = false;
  geometry::Pose pred;
  geometry::PoseMetrics metrics;
};

struct MetricsRow {
  std::string name;
  std::size_t count = 0;
  double mean_iou = 0.0;
  double iou50 = 0.0;
  double iou75 = 0.0;
  double deg5_2cm = 0.0;
  double deg5_5cm = 0.0;
  double deg10_2cm = 0.0;
  double deg10_5cm = 0.0;
  double median_rot_deg = 0.0;
  double median_trans = 0.0;
};

MetricsRow summarize(const std::string& name, const std::vector<InstanceResult>& results);

struct MetricsReport {
  std::vector<MetricsRow> categories;
  MetricsRow mean;  // precisions averaged over categories, medians pooled
  Histogram nocs_errors;
  std::vector<InstanceResult> instances;
  std::map<std::string, std::string> metadata;

  std::string to_text() const;
  std::string to_csv() const;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_log;
  std::function<void(int step, const MetricsReport&)> on_eval;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  int checkpoint_every = 0;
};

struct TrainResult {
  net::ModelState model;
  std::vector<StepLog> log;
  double seconds = 0.0;
};

TrainResult train(const synth::Dataset& dataset, const TrainConfig& config,
                  const TrainHooks& hooks = {});

// Network input for a record: the first num_points rows (records are stored
// shuffled) with cached encoder neighborhoods.
net::Observation<float> make_input(const synth::ObservedInstance& obs, const TrainConfig& config);

struct Prediction {
  geometry::Pose pose;
  geometry::Points p_kpt;
  geometry::Points p_nocs;
};

Prediction predict(const net::ModelState& model, const synth::ObservedInstance& obs,
                   const TrainConfig& config);

// Per-record predictions can be injected to bypass the network.
using Predictor = std::function<Prediction(std::size_t record)>;

MetricsReport evaluate(const net::ModelState& model, const synth::Dataset& dataset,
                       const TrainConfig& config);
MetricsReport evaluate_predictions(const synth::Dataset& dataset, const TrainConfig& config,
                                   const Predictor& predictor);

bool is_symmetric(const synth::Dataset& dataset, const TrainConfig& config, std::int32_t category);

void save_checkpoint(const std::filesystem::path& dir, const net::ModelState& model,
                     const TrainConfig& config);
// Returns the model and fills config from the stored config.txt.
net::ModelState load_checkpoint(const std::filesystem::path& dir, TrainConfig& config);

struct FpsKeypoints {
  std::vector<int> index;
  geometry::Points points;
  Eigen::MatrixXd features;
};

FpsKeypoints fps_keypoints(const geometry::Points& p_obj, const Eigen::MatrixXd& f_obj, int n);

struct AblationRow {
  std::string label;
  TrainConfig config;
  std::vector<MetricsReport> runs;  // one per seed
  MetricsRow mean;                  // of the per-run mean rows
};

struct AblationTable {
  std::string suite;
  std::vector<AblationRow> rows;

  std::string to_text() const;
  std::string to_markdown() const;
};

std::vector<std::string> ablation_suites();
// Row labels and configurations of a suite, derived from base.
std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const std::string& suite,
                                                                  const TrainConfig& base);

AblationTable run_ablation(const std::string& suite, const TrainConfig& base,
                           const synth::Dataset& dataset, const std::vector<std::uint64_t>& seeds,
                           const std::function<void(const std::string&)>& progress = {});

MetricsRow average_rows(const std::string& name, const std::vector<MetricsRow>& rows);

}  // namespace agpose::harness
