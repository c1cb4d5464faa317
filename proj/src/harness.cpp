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

#include "agpose/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "agpose/errors.hpp"
#include "agpose/parallel.hpp"

namespace agpose::harness {

using geometry::Points;
using geometry::Pose;

std::string to_string(Recovery r) { return r == Recovery::Regression ? "regression" : "umeyama"; }

Recovery recovery_from_string(const std::string& s) {
  if (s == "regression") return Recovery::Regression;
  if (s == "umeyama") return Recovery::Umeyama;
  throw ConfigError("unknown recovery mode '" + s + "' (expected regression|umeyama)");
}

net::NetworkConfig TrainConfig::desk_network() {
  net::NetworkConfig n;
  n.n_kpt = 32;
  n.c = 64;
  n.c_attr = 32;
  n.heads = 4;
  n.attn_blocks = 2;
  n.ffn_hidden = 128;
  n.mlp_hidden = 64;
  return n;
}

void validate(const TrainConfig& c) {
  if (c.steps < 0 || c.epochs < 0 || (c.steps == 0 && c.epochs == 0)) {
    throw ConfigError("either steps or epochs must be positive");
  }
  if (c.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(c.lr_min > 0.0 && c.lr_min < c.lr_max)) throw ConfigError("need 0 < lr_min < lr_max");
  if (c.cycle_length < 0) throw ConfigError("cycle_length must be non-negative");
  if (c.num_points < c.network.n_kpt && c.network.detector == net::Detector::Fps) {
    throw ConfigError("num_points must be at least n_kpt for the FPS detector");
  }
  if (c.num_points < 2) throw ConfigError("num_points must be at least 2");
  if (c.grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative");
  net::validate(c.network);
  loss::validate(c.weights);
}

// ---------------------------------------------------------------------------
// Config text

namespace {

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects an unsigned integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("'" + key + "' expects a boolean, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define INT_FIELD(name, member)                                                            \
  Field {                                                                                  \
    name, [](const TrainConfig& c) { return std::to_string(c.member); },                   \
        [](TrainConfig& c, const std::string& v) { c.member = parse_int(name, v); }        \
  }
#define DOUBLE_FIELD(name, member)                                                         \
  Field {                                                                                  \
    name, [](const TrainConfig& c) { return fmt(c.member); },                              \
        [](TrainConfig& c, const std::string& v) { c.member = parse_double(name, v); }     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      INT_FIELD("steps", steps),
      INT_FIELD("epochs", epochs),
      INT_FIELD("batch_size", batch_size),
      DOUBLE_FIELD("lr_min", lr_min),
      DOUBLE_FIELD("lr_max", lr_max),
      INT_FIELD("cycle_length", cycle_length),
      Field{"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
            [](TrainConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
      INT_FIELD("num_points", num_points),
      DOUBLE_FIELD("grad_clip", grad_clip),
      INT_FIELD("n_kpt", network.n_kpt),
      INT_FIELD("k", network.k_local),
      INT_FIELD("c", network.c),
      INT_FIELD("c_attr", network.c_attr),
      INT_FIELD("heads", network.heads),
      INT_FIELD("attn_blocks", network.attn_blocks),
      INT_FIELD("ffn_hidden", network.ffn_hidden),
      INT_FIELD("mlp_hidden", network.mlp_hidden),
      INT_FIELD("encoder_k", network.encoder_k),
      DOUBLE_FIELD("temperature_init", network.temperature_init),
      DOUBLE_FIELD("coord_scale", network.coord_scale),
      Field{"detector", [](const TrainConfig& c) { return net::to_string(c.network.detector); },
            [](TrainConfig& c, const std::string& v) { c.network.detector = net::detector_from_string(v); }},
      Field{"gafa", [](const TrainConfig& c) { return net::to_string(c.network.gafa); },
            [](TrainConfig& c, const std::string& v) { c.network.gafa = net::gafa_from_string(v); }},
      DOUBLE_FIELD("w_ocd", weights.ocd),
      DOUBLE_FIELD("w_div", weights.div),
      DOUBLE_FIELD("w_nocs", weights.nocs),
      DOUBLE_FIELD("w_pose", weights.pose),
      DOUBLE_FIELD("th1", weights.th1),
      DOUBLE_FIELD("th2", weights.th2),
      Field{"chamfer",
            [](const TrainConfig& c) {
              return std::string(c.chamfer == loss::Chamfer::Object ? "object" : "unfiltered");
            },
            [](TrainConfig& c, const std::string& v) {
              if (v == "object") {
                c.chamfer = loss::Chamfer::Object;
              } else if (v == "unfiltered") {
                c.chamfer = loss::Chamfer::Unfiltered;
              } else {
                throw ConfigError("chamfer expects object|unfiltered, got '" + v + "'");
              }
            }},
      Field{"pose_norm",
            [](const TrainConfig& c) {
              return std::string(c.pose_norm == loss::PoseNorm::Norm ? "norm" : "l1");
            },
            [](TrainConfig& c, const std::string& v) {
              if (v == "norm") {
                c.pose_norm = loss::PoseNorm::Norm;
              } else if (v == "l1") {
                c.pose_norm = loss::PoseNorm::ElementwiseL1;
              } else {
                throw ConfigError("pose_norm expects norm|l1, got '" + v + "'");
              }
            }},
      Field{"augment", [](const TrainConfig& c) { return std::string(c.augment ? "1" : "0"); },
            [](TrainConfig& c, const std::string& v) { c.augment = parse_bool("augment", v); }},
      DOUBLE_FIELD("aug_translation", augment_options.max_translation),
      DOUBLE_FIELD("aug_scale_min", augment_options.scale_min),
      DOUBLE_FIELD("aug_scale_max", augment_options.scale_max),
      DOUBLE_FIELD("aug_rotation_deg", augment_options.max_rotation_deg),
      Field{"symmetric",
            [](const TrainConfig& c) {
              std::string out;
              for (const auto& s : c.symmetric_categories) out += (out.empty() ? "" : ",") + s;
              return out;
            },
            [](TrainConfig& c, const std::string& v) { c.symmetric_categories = split_list(v); }},
      Field{"recovery", [](const TrainConfig& c) { return to_string(c.recovery); },
            [](TrainConfig& c, const std::string& v) { c.recovery = recovery_from_string(v); }},
      INT_FIELD("log_every", log_every),
      INT_FIELD("eval_every", eval_every),
  };
  return f;
}

#undef INT_FIELD
#undef DOUBLE_FIELD

}  // namespace

io::KeyValueText to_text(const TrainConfig& c) {
  io::KeyValueText kv;
  for (const auto& f : fields()) kv.set(f.key, f.get(c));
  return kv;
}

void apply(TrainConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(c, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply(TrainConfig& c, const io::KeyValueText& kv) {
  for (const auto& [k, v] : kv.entries()) apply(c, k, v);
}

// ---------------------------------------------------------------------------
// Schedule

int effective_steps(const TrainConfig& c, std::size_t train_records) {
  if (c.steps > 0) return c.steps;
  const auto per_epoch =
      (train_records + static_cast<std::size_t>(c.batch_size) - 1) / static_cast<std::size_t>(c.batch_size);
  return c.epochs * static_cast<int>(std::max<std::size_t>(per_epoch, 1));
}

int effective_cycle(const TrainConfig& c, int steps) {
  if (c.cycle_length > 0) return c.cycle_length;
  return std::max(2, steps);
}

double lr_at(int step, double lr_min, double lr_max, int cycle_length) {
  const double half = static_cast<double>(cycle_length) / 2.0;
  const int cycle = step / cycle_length;
  const double x = std::abs(static_cast<double>(step) / half - 2.0 * cycle - 1.0);
  return lr_min + (lr_max - lr_min) * std::max(0.0, 1.0 - x) / std::pow(2.0, cycle);
}

std::string format(const StepLog& s) {
  std::ostringstream os;
  os << std::setprecision(6) << "step=" << s.step << " lr=" << s.lr << " loss_ocd=" << s.ocd
     << " loss_div=" << s.div << " loss_nocs=" << s.nocs << " loss_pose=" << s.pose
     << " loss_total=" << s.total << " grad_norm=" << s.grad_norm;
  return os.str();
}

// ---------------------------------------------------------------------------
// Histogram and metrics

Histogram::Histogram(double lo, double hi, int bins)
    : lo_(lo), hi_(hi), counts_(static_cast<std::size_t>(bins), 0) {}

void Histogram::add(double x) {
  const double w = (hi_ - lo_) / static_cast<double>(counts_.size());
  auto bin = static_cast<long>(std::floor((x - lo_) / w));
  bin = std::clamp<long>(bin, 0, static_cast<long>(counts_.size()) - 1);
  ++counts_[static_cast<std::size_t>(bin)];
}

std::vector<double> Histogram::edges() const {
  std::vector<double> e(counts_.size() + 1);
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = lo_ + (hi_ - lo_) * static_cast<double>(i) / static_cast<double>(counts_.size());
  }
  return e;
}

std::uint64_t Histogram::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

double Histogram::mass(double a, double b) const {
  const auto e = edges();
  std::uint64_t in = 0;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (e[i] >= a - 1e-12 && e[i + 1] <= b + 1e-12) in += counts_[i];
  }
  const auto t = total();
  return t == 0 ? 0.0 : static_cast<double>(in) / static_cast<double>(t);
}

namespace {
double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace

MetricsRow summarize(const std::string& name, const std::vector<InstanceResult>& results) {
  MetricsRow row;
  row.name = name;
  row.count = results.size();
  if (results.empty()) return row;
  std::vector<double> rot;
  std::vector<double> trans;
  for (const auto& r : results) {
    const auto& m = r.metrics;
    row.mean_iou += m.iou;
    row.iou50 += m.iou50;
    row.iou75 += m.iou75;
    row.deg5_2cm += m.deg5_2cm;
    row.deg5_5cm += m.deg5_5cm;
    row.deg10_2cm += m.deg10_2cm;
    row.deg10_5cm += m.deg10_5cm;
    rot.push_back(m.rot_err_deg);
    trans.push_back(m.trans_err);
  }
  const double n = static_cast<double>(results.size());
  for (double* v : {&row.mean_iou, &row.iou50, &row.iou75, &row.deg5_2cm, &row.deg5_5cm,
                    &row.deg10_2cm, &row.deg10_5cm}) {
    *v /= n;
  }
  row.median_rot_deg = median(rot);
  row.median_trans = median(trans);
  return row;
}

MetricsRow average_rows(const std::string& name, const std::vector<MetricsRow>& rows) {
  MetricsRow out;
  out.name = name;
  if (rows.empty()) return out;
  for (const auto& r : rows) {
    out.count += r.count;
    out.mean_iou += r.mean_iou;
    out.iou50 += r.iou50;
    out.iou75 += r.iou75;
    out.deg5_2cm += r.deg5_2cm;
    out.deg5_5cm += r.deg5_5cm;
    out.deg10_2cm += r.deg10_2cm;
    out.deg10_5cm += r.deg10_5cm;
    out.median_rot_deg += r.median_rot_deg;
    out.median_trans += r.median_trans;
  }
  const double n = static_cast<double>(rows.size());
  for (double* v : {&out.mean_iou, &out.iou50, &out.iou75, &out.deg5_2cm, &out.deg5_5cm,
                    &out.deg10_2cm, &out.deg10_5cm, &out.median_rot_deg, &out.median_trans}) {
    *v /= n;
  }
  return out;
}

namespace {
void write_row(std::ostream& os, const MetricsRow& r) {
  os << std::fixed << std::setprecision(4) << "row=" << r.name << " count=" << r.count
     << " mean_iou=" << r.mean_iou << " iou50=" << r.iou50 << " iou75=" << r.iou75
     << " 5deg2cm=" << r.deg5_2cm << " 5deg5cm=" << r.deg5_5cm << " 10deg2cm=" << r.deg10_2cm
     << " 10deg5cm=" << r.deg10_5cm << " median_rot_deg=" << r.median_rot_deg
     << " median_trans_m=" << r.median_trans << "\n";
}
}  // namespace

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : metadata) os << "meta." << k << "=" << v << "\n";
  for (const auto& r : categories) write_row(os, r);
  write_row(os, mean);
  const auto e = nocs_errors.edges();
  os << "nocs_hist.total=" << nocs_errors.total() << "\n";
  for (std::size_t i = 0; i < nocs_errors.counts().size(); ++i) {
    os << std::setprecision(3) << "nocs_hist.bin=" << e[i] << "," << e[i + 1]
       << " count=" << nocs_errors.counts()[i] << "\n";
  }
  return os.str();
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "record,category,instance_id,symmetric,iou,rot_err_deg,trans_err_m,iou50,iou75,"
        "5deg2cm,5deg5cm,10deg2cm,10deg5cm\n";
  os << std::setprecision(8);
  for (const auto& r : instances) {
    const auto& m = r.metrics;
    os << r.record << "," << r.category << "," << r.instance_id << "," << r.symmetric << ","
       << m.iou << "," << m.rot_err_deg << "," << m.trans_err << "," << m.iou50 << ","
       << m.iou75 << "," << m.deg5_2cm << "," << m.deg5_5cm << "," << m.deg10_2cm << ","
       << m.deg10_5cm << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Training

bool is_symmetric(const synth::Dataset& dataset, const TrainConfig& config, std::int32_t category) {
  if (config.symmetric_categories.empty()) return dataset.category_symmetric(category);
  const auto& name = dataset.config().categories.at(static_cast<std::size_t>(category)).name;
  return std::find(config.symmetric_categories.begin(), config.symmetric_categories.end(), name) !=
         config.symmetric_categories.end();
}

namespace {

synth::ObservedInstance head_rows(const synth::ObservedInstance& obs, int n) {
  const auto rows = std::min<Eigen::Index>(n, obs.size());
  synth::ObservedInstance out;
  out.points = obs.points.topRows(rows);
  out.attr_base = obs.attr_base.topRows(rows);
  out.gt_pose = obs.gt_pose;
  out.model_extent = obs.model_extent;
  out.outlier_mask.assign(obs.outlier_mask.begin(), obs.outlier_mask.begin() + rows);
  out.category = obs.category;
  out.symmetric = obs.symmetric;
  out.instance_id = obs.instance_id;
  return out;
}

std::vector<int> encoder_neighbors(const Points& points, const net::NetworkConfig& net) {
  const int k = std::min<int>(net.encoder_k, static_cast<int>(points.rows()));
  return net::knn_indices<float>(points.cast<float>(), points.cast<float>(), k);
}

struct Prepared {
  synth::ObservedInstance obs;  // first num_points rows, no model points
  std::vector<int> kept;        // rows surviving the outlier filter
  std::vector<int> neighbors;
  bool symmetric = false;
};

struct Adam {
  std::vector<net::Matrix<double>> m;
  std::vector<net::Matrix<double>> v;
  int t = 0;

  void step(net::ModelState& state, const net::Gradients& g, double lr) {
    constexpr double b1 = 0.9;
    constexpr double b2 = 0.999;
    constexpr double eps = 1e-8;
    auto& params = state.params();
    if (m.empty()) {
      for (const auto& p : params) {
        m.push_back(net::Matrix<double>::Zero(p.value.rows(), p.value.cols()));
        v.push_back(net::Matrix<double>::Zero(p.value.rows(), p.value.cols()));
      }
    }
    ++t;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g.values[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g.values[i].cwiseAbs2();
      params[i].value.array() -=
          lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
    }
  }
};

}  // namespace

net::Observation<float> make_input(const synth::ObservedInstance& obs, const TrainConfig& config) {
  const synth::ObservedInstance head = head_rows(obs, config.num_points);
  net::Observation<float> in{head.points.cast<float>(), head.attrs(), {}};
  in.neighbors = encoder_neighbors(head.points, config.network);
  return in;
}

TrainResult train(const synth::Dataset& dataset, const TrainConfig& config, const TrainHooks& hooks) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  const auto train_idx = dataset.indices(synth::Split::Train);
  if (train_idx.empty()) throw ConfigError("dataset has no training records");
  const int steps = effective_steps(config, train_idx.size());
  const int cycle = effective_cycle(config, steps);

  std::vector<Prepared> prepared(train_idx.size());
  parallel_for(train_idx.size(), [&](std::size_t i) {
    const auto& rec = dataset.record(train_idx[i]);
    Prepared& p = prepared[i];
    p.obs = head_rows(rec, config.num_points);
    p.kept = loss::filter_outliers(p.obs.points, rec.model_points, rec.gt_pose, config.weights.th2);
    p.neighbors = encoder_neighbors(p.obs.points, config.network);
    p.symmetric = is_symmetric(dataset, config, rec.category);
  });

  TrainResult result;
  result.model = net::ModelState::init(config.network, derive_seed(config.seed, 1));
  net::ModelState& state = result.model;
  Adam adam;

  std::mt19937_64 order_rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<net::Gradients> slot_grads(batch);
  std::vector<StepLog> slot_logs(batch);

  for (int step = 0; step < steps; ++step) {
    std::vector<std::size_t> picks(batch);
    for (auto& p : picks) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      p = order[cursor++];
    }

    parallel_for(batch, [&](std::size_t b) {
      const Prepared& rec = prepared[picks[b]];
      const synth::ObservedInstance obs =
          config.augment
              ? synth::augment(rec.obs, derive_seed(config.seed, 3, static_cast<std::uint64_t>(step), b),
                               config.augment_options)
              : rec.obs;
      net::Observation<float> in{obs.points.cast<float>(), obs.attrs(), rec.neighbors};

      ad::Tape<float> tape;
      net::Graph<float> graph(state, tape, true);
      auto out = graph.forward(in);
      const auto& kp = out.keypoints;

      Points cloud;
      if (config.chamfer == loss::Chamfer::Object) {
        cloud.resize(static_cast<Eigen::Index>(rec.kept.size()), 3);
        for (std::size_t i = 0; i < rec.kept.size(); ++i) {
          cloud.row(static_cast<Eigen::Index>(i)) = obs.points.row(rec.kept[i]);
        }
      } else {
        cloud = obs.points;
      }
      const auto l_ocd = loss::loss_chamfer<float>(kp.p_kpt, cloud.cast<float>());
      const auto l_div = loss::loss_div<float>(kp.p_kpt, static_cast<float>(config.weights.th1));
      const auto l_nocs = loss::loss_nocs<float>(kp.p_nocs, kp.p_kpt.value(), obs.gt_pose, rec.symmetric);
      const auto l_pose = loss::loss_pose<float>(out.pose.rotation, out.pose.translation,
                                                 out.pose.size, obs.gt_pose, rec.symmetric,
                                                 config.pose_norm);
      const auto total = loss::loss_total<float>(l_ocd, l_div, l_nocs, l_pose, config.weights);
      tape.backward(total);

      auto& g = slot_grads[b];
      g = net::Gradients::zeros_like(state);
      graph.accumulate_gradients(g, 1.0 / static_cast<double>(batch));
      auto& log = slot_logs[b];
      log.ocd = l_ocd.value()(0, 0);
      log.div = l_div.value()(0, 0);
      log.nocs = l_nocs.value()(0, 0);
      log.pose = l_pose.value()(0, 0);
      log.total = total.value()(0, 0);
    });

    StepLog log;
    log.step = step;
    log.lr = lr_at(step, config.lr_min, config.lr_max, cycle);
    net::Gradients grads = std::move(slot_grads[0]);
    for (std::size_t b = 1; b < batch; ++b) {
      for (std::size_t i = 0; i < grads.values.size(); ++i) grads.values[i] += slot_grads[b].values[i];
    }
    for (const auto& s : slot_logs) {
      log.ocd += s.ocd / static_cast<double>(batch);
      log.div += s.div / static_cast<double>(batch);
      log.nocs += s.nocs / static_cast<double>(batch);
      log.pose += s.pose / static_cast<double>(batch);
      log.total += s.total / static_cast<double>(batch);
    }
    log.grad_norm = std::sqrt(grads.squared_norm());
    if (!std::isfinite(log.total) || !std::isfinite(log.grad_norm)) {
      throw NanLoss(step, "non-finite loss or gradient at step " + std::to_string(step));
    }
    if (config.grad_clip > 0.0 && log.grad_norm > config.grad_clip) {
      grads.scale(config.grad_clip / log.grad_norm);
    }
    adam.step(state, grads, log.lr);
    state.step = step + 1;

    const bool last = step + 1 == steps;
    if (config.log_every > 0 && (step % config.log_every == 0 || last)) {
      result.log.push_back(log);
      if (hooks.on_log) hooks.on_log(log);
    }
    if (config.eval_every > 0 && hooks.on_eval && ((step + 1) % config.eval_every == 0 || last)) {
      hooks.on_eval(step + 1, evaluate(state, dataset, config));
    }
    if (!hooks.checkpoint_dir.empty() &&
        (last || (hooks.checkpoint_every > 0 && (step + 1) % hooks.checkpoint_every == 0))) {
      save_checkpoint(hooks.checkpoint_dir, state, config);
    }
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

Prediction predict(const net::ModelState& model, const synth::ObservedInstance& obs,
                   const TrainConfig& config) {
  const auto in = make_input(obs, config);
  ad::Tape<float> tape;
  net::Graph<float> graph(model, tape, false);
  const auto out = graph.forward(in);
  Prediction p;
  p.pose = out.pose.to_pose();
  p.p_kpt = out.keypoints.p_kpt.value().cast<double>();
  p.p_nocs = out.keypoints.p_nocs.value().cast<double>();
  if (config.recovery == Recovery::Umeyama) {
    const double s_norm = p.pose.s.norm();
    const auto fit = geometry::umeyama_fit(p.p_nocs * s_norm, p.p_kpt);
    p.pose.R = fit.R;
    p.pose.t = fit.t;
    p.pose.s = p.pose.s * fit.scale;
  }
  return p;
}

MetricsReport evaluate_predictions(const synth::Dataset& dataset, const TrainConfig& config,
                                   const Predictor& predictor) {
  const auto test_idx = dataset.indices(synth::Split::Test);
  std::vector<InstanceResult> results(test_idx.size());
  std::vector<Eigen::VectorXd> errors(test_idx.size());
  parallel_for(test_idx.size(), [&](std::size_t i) {
    const auto& rec = dataset.record(test_idx[i]);
    const bool sym = is_symmetric(dataset, config, rec.category);
    const Prediction p = predictor(test_idx[i]);
    InstanceResult& r = results[i];
    r.record = test_idx[i];
    r.category = rec.category;
    r.instance_id = rec.instance_id;
    r.symmetric = sym;
    r.pred = p.pose;
    r.metrics = geometry::evaluate_pose(p.pose, rec.gt_pose, sym);
    if (p.p_kpt.rows() > 0) {
      errors[i] = (p.p_nocs - loss::nocs_targets(p.p_kpt, rec.gt_pose, sym)).rowwise().norm();
    }
  });

  MetricsReport report;
  const auto& cats = dataset.config().categories;
  for (std::size_t c = 0; c < cats.size(); ++c) {
    std::vector<InstanceResult> sub;
    for (const auto& r : results) {
      if (r.category == static_cast<std::int32_t>(c)) sub.push_back(r);
    }
    if (!sub.empty()) report.categories.push_back(summarize(cats[c].name, sub));
  }
  report.mean = average_rows("mean", report.categories);
  const MetricsRow pooled = summarize("all", results);
  report.mean.count = pooled.count;
  report.mean.median_rot_deg = pooled.median_rot_deg;
  report.mean.median_trans = pooled.median_trans;
  for (const auto& e : errors) {
    for (Eigen::Index k = 0; k < e.size(); ++k) report.nocs_errors.add(e(k));
  }
  report.instances = std::move(results);
  report.metadata["recovery"] = to_string(config.recovery);
  report.metadata["test_records"] = std::to_string(test_idx.size());
  return report;
}

MetricsReport evaluate(const net::ModelState& model, const synth::Dataset& dataset,
                       const TrainConfig& config) {
  return evaluate_predictions(dataset, config, [&](std::size_t i) {
    return predict(model, dataset.record(i), config);
  });
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& dir, const net::ModelState& model,
                     const TrainConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  io::BlockSet blocks = model.to_blocks();
  blocks.add_matrix("step", net::Matrix<double>::Constant(1, 1, static_cast<double>(model.step)));
  io::write_file(dir / "model.bin", blocks.serialize());
  io::write_file(dir / "config.txt", to_text(config).serialize());
}

net::ModelState load_checkpoint(const std::filesystem::path& dir, TrainConfig& config) {
  apply(config, io::KeyValueText::parse(io::read_file(dir / "config.txt")));
  const auto blocks = io::BlockSet::parse(io::read_file(dir / "model.bin"));
  net::ModelState model = net::ModelState::from_blocks(config.network, blocks);
  if (blocks.has("step")) model.step = static_cast<long>(blocks.matrix_f64("step")(0, 0));
  return model;
}

// ---------------------------------------------------------------------------
// FPS baseline and ablations

FpsKeypoints fps_keypoints(const Points& p_obj, const Eigen::MatrixXd& f_obj, int n) {
  FpsKeypoints out;
  out.index = net::farthest_point_sampling(p_obj, n);
  out.points.resize(n, 3);
  out.features.resize(n, f_obj.cols());
  for (int i = 0; i < n; ++i) {
    out.points.row(i) = p_obj.row(out.index[static_cast<std::size_t>(i)]);
    out.features.row(i) = f_obj.row(out.index[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::vector<std::string> ablation_suites() {
  return {"fps_vs_iakd", "kpt_count", "k_local", "losses", "gafa"};
}

std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const std::string& suite,
                                                                  const TrainConfig& base) {
  std::vector<std::pair<std::string, TrainConfig>> rows;
  const auto with = [&](const std::string& label, const std::function<void(TrainConfig&)>& f) {
    TrainConfig c = base;
    f(c);
    rows.emplace_back(label, c);
  };
  if (suite == "fps_vs_iakd") {
    with("FPS", [](TrainConfig& c) { c.network.detector = net::Detector::Fps; });
    with("IAKD", [](TrainConfig& c) { c.network.detector = net::Detector::Iakd; });
  } else if (suite == "kpt_count") {
    for (int n : {16, 32, 64, 96, 128}) {
      with(std::to_string(n), [n](TrainConfig& c) { c.network.n_kpt = n; });
    }
  } else if (suite == "k_local") {
    for (int k : {8, 16, 24, 32}) {
      with(std::to_string(k), [k](TrainConfig& c) { c.network.k_local = k; });
    }
  } else if (suite == "losses") {
    with("L_div+L_ocd", [](TrainConfig& c) { c.chamfer = loss::Chamfer::Object; });
    with("L_div+L_ucd", [](TrainConfig& c) { c.chamfer = loss::Chamfer::Unfiltered; });
    with("L_div", [](TrainConfig& c) { c.weights.ocd = 0.0; });
    with("L_ocd", [](TrainConfig& c) { c.weights.div = 0.0; });
    with("None", [](TrainConfig& c) {
      c.weights.ocd = 0.0;
      c.weights.div = 0.0;
    });
  } else if (suite == "gafa") {
    with("Full", [](TrainConfig& c) { c.network.gafa = net::GafaMode::Full; });
    with("w/o GAFA", [](TrainConfig& c) { c.network.gafa = net::GafaMode::None; });
    with("w/o Local", [](TrainConfig& c) { c.network.gafa = net::GafaMode::NoLocal; });
    with("w/o Global", [](TrainConfig& c) { c.network.gafa = net::GafaMode::NoGlobal; });
    with("w/ vanilla attn", [](TrainConfig& c) { c.network.gafa = net::GafaMode::VanillaAttention; });
  } else {
    throw ConfigError("unknown ablation suite '" + suite + "'");
  }
  return rows;
}

AblationTable run_ablation(const std::string& suite, const TrainConfig& base,
                           const synth::Dataset& dataset, const std::vector<std::uint64_t>& seeds,
                           const std::function<void(const std::string&)>& progress) {
  AblationTable table;
  table.suite = suite;
  for (auto& [label, config] : ablation_configs(suite, base)) {
    AblationRow row;
    row.label = label;
    row.config = config;
    std::vector<MetricsRow> means;
    for (std::uint64_t seed : seeds) {
      TrainConfig c = config;
      c.seed = seed;
      const auto trained = train(dataset, c);
      row.runs.push_back(evaluate(trained.model, dataset, c));
      means.push_back(row.runs.back().mean);
      if (progress) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(4) << "suite=" << suite << " row=" << label
           << " seed=" << seed << " seconds=" << trained.seconds
           << " 10deg5cm=" << means.back().deg10_5cm;
        progress(os.str());
      }
    }
    row.mean = average_rows(label, means);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string AblationTable::to_text() const {
  std::ostringstream os;
  os << "suite=" << suite << "\n";
  for (const auto& r : rows) write_row(os, r.mean);
  return os.str();
}

std::string AblationTable::to_markdown() const {
  std::ostringstream os;
  os << "| " << suite << " | IoU50 | IoU75 | 5°2cm | 5°5cm | 10°2cm | 10°5cm |\n";
  os << "|---|---|---|---|---|---|---|\n";
  os << std::fixed << std::setprecision(1);
  for (const auto& r : rows) {
    const auto& m = r.mean;
    os << "| " << r.label << " | " << 100 * m.iou50 << " | " << 100 * m.iou75 << " | "
       << 100 * m.deg5_2cm << " | " << 100 * m.deg5_5cm << " | " << 100 * m.deg10_2cm << " | "
       << 100 * m.deg10_5cm << " |\n";
  }
  return os.str();
}

}  // namespace agpose::harness
