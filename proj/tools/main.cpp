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

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "agpose/blockio.hpp"
#include "agpose/errors.hpp"
#include "agpose/harness.hpp"
#include "agpose/synthdata.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using namespace agpose;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) { io::write_file(path, text); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

io::KeyValueText load_config_file(const std::string& path) {
  if (path.empty()) return {};
  return io::KeyValueText::parse(io::read_file(path));
}

// ---------------------------------------------------------------------------
// generate

struct GenerateFlags {
  std::string out;
  std::string config;
  std::uint64_t seed = 0;
  std::string categories;
  int train_instances = -1;
  int test_instances = -1;
  int views = -1;
  int num_points = -1;
};

void apply_dataset_key(synth::DatasetConfig& c, const std::string& key, const std::string& v) {
  if (key == "seed") {
    c.seed = std::stoull(v);
  } else if (key == "categories") {
    const auto all = synth::default_categories();
    c.categories.clear();
    if (!v.empty() && std::all_of(v.begin(), v.end(), ::isdigit)) {
      const auto n = static_cast<std::size_t>(std::stoul(v));
      if (n < 1 || n > all.size()) throw ConfigError("categories must lie in [1, 3]");
      c.categories.assign(all.begin(), all.begin() + static_cast<long>(n));
    } else {
      for (const auto& name : split(v, ',')) {
        auto it = std::find_if(all.begin(), all.end(), [&](const auto& s) { return s.name == name; });
        if (it == all.end()) throw ConfigError("unknown category '" + name + "'");
        c.categories.push_back(*it);
      }
    }
  } else if (key == "train_instances") {
    c.train_instances = std::stoi(v);
  } else if (key == "test_instances") {
    c.test_instances = std::stoi(v);
  } else if (key == "views") {
    c.views = std::stoi(v);
  } else if (key == "num_points") {
    c.render.num_points = std::stoi(v);
  } else if (key == "noise_sigma") {
    c.render.noise_sigma = std::stod(v);
  } else if (key == "outlier_frac") {
    c.render.outlier_frac = std::stod(v);
  } else if (key == "model_points") {
    c.model_points = std::stoi(v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

io::KeyValueText dataset_text(const synth::DatasetConfig& c) {
  io::KeyValueText kv;
  kv.set("seed", std::to_string(c.seed));
  std::string cats;
  for (const auto& s : c.categories) cats += (cats.empty() ? "" : ",") + s.name;
  kv.set("categories", cats);
  kv.set("train_instances", std::to_string(c.train_instances));
  kv.set("test_instances", std::to_string(c.test_instances));
  kv.set("views", std::to_string(c.views));
  kv.set("num_points", std::to_string(c.render.num_points));
  std::ostringstream sigma;
  sigma << c.render.noise_sigma;
  kv.set("noise_sigma", sigma.str());
  std::ostringstream frac;
  frac << c.render.outlier_frac;
  kv.set("outlier_frac", frac.str());
  kv.set("model_points", std::to_string(c.model_points));
  return kv;
}

int cmd_generate(const GenerateFlags& f) {
  synth::DatasetConfig c;
  try {
    for (const auto& [k, v] : load_config_file(f.config).entries()) apply_dataset_key(c, k, v);
    apply_dataset_key(c, "seed", std::to_string(f.seed));
    if (!f.categories.empty()) apply_dataset_key(c, "categories", f.categories);
  } catch (const std::invalid_argument&) {
    throw ConfigError("malformed numeric value in dataset config");
  }
  if (f.train_instances >= 0) c.train_instances = f.train_instances;
  if (f.test_instances >= 0) c.test_instances = f.test_instances;
  if (f.views >= 0) c.views = f.views;
  if (f.num_points > 0) c.render.num_points = f.num_points;

  const auto ds = synth::build_dataset(c, f.out);
  write_text(fs::path(f.out) / "config.txt", dataset_text(c).serialize());
  std::cout << "dataset=" << f.out << "\n"
            << "categories=" << c.categories.size() << "\n"
            << "train_records=" << ds.indices(synth::Split::Train).size() << "\n"
            << "test_records=" << ds.indices(synth::Split::Test).size() << "\n"
            << "num_points=" << c.render.num_points << "\n"
            << "seed=" << c.seed << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train / eval / ablate

struct RunFlags {
  std::string config;
  std::string out;
  std::string dataset;
  std::string checkpoint;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int steps = -1;
  int nkpt = -1;
  int k = -1;
  std::string recovery;
  std::vector<std::string> overrides;
};

harness::TrainConfig resolve(const RunFlags& f, harness::TrainConfig base = {}) {
  harness::apply(base, load_config_file(f.config));
  if (f.seed_set) base.seed = f.seed;
  if (f.steps > 0) base.steps = f.steps;
  if (f.nkpt > 0) base.network.n_kpt = f.nkpt;
  if (f.k > 0) base.network.k_local = f.k;
  if (!f.recovery.empty()) base.recovery = harness::recovery_from_string(f.recovery);
  for (const auto& o : f.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    harness::apply(base, o.substr(0, eq), o.substr(eq + 1));
  }
  harness::validate(base);
  return base;
}

void write_report(const fs::path& dir, const harness::MetricsReport& report) {
  write_text(dir / "metrics.txt", report.to_text());
  write_text(dir / "instances.csv", report.to_csv());
  std::ostringstream hist;
  hist << "lo,hi,count\n";
  const auto e = report.nocs_errors.edges();
  for (std::size_t i = 0; i < report.nocs_errors.counts().size(); ++i) {
    hist << e[i] << "," << e[i + 1] << "," << report.nocs_errors.counts()[i] << "\n";
  }
  write_text(dir / "nocs_hist.csv", hist.str());
}

void print_summary(const harness::MetricsReport& r) {
  std::cout << r.to_text().substr(0, r.to_text().find("nocs_hist."));
}

int cmd_train(const RunFlags& f) {
  const auto config = resolve(f);
  const auto ds = synth::Dataset::load(f.dataset);
  ensure_dir(f.out);
  write_text(fs::path(f.out) / "config.txt", harness::to_text(config).serialize());
  std::ofstream log(fs::path(f.out) / "train_log.txt");
  harness::TrainHooks hooks;
  hooks.checkpoint_dir = f.out;
  hooks.checkpoint_every = 1000;
  hooks.on_log = [&](const harness::StepLog& s) {
    const auto line = harness::format(s);
    std::cout << line << std::endl;
    log << line << "\n";
  };
  hooks.on_eval = [&](int step, const harness::MetricsReport& r) {
    std::ostringstream os;
    os << "eval_step=" << step << " 10deg5cm=" << r.mean.deg10_5cm
       << " median_rot_deg=" << r.mean.median_rot_deg << " median_trans_m=" << r.mean.median_trans;
    std::cout << os.str() << std::endl;
    log << os.str() << "\n";
  };
  const auto result = harness::train(ds, config, hooks);
  log << "train_seconds=" << result.seconds << "\n";
  std::cout << "train_seconds=" << result.seconds << "\n";
  if (!ds.indices(synth::Split::Test).empty()) {
    const auto report = harness::evaluate(result.model, ds, config);
    write_report(f.out, report);
    print_summary(report);
  }
  return 0;
}

int cmd_eval(const RunFlags& f, bool oracle) {
  const auto ds = synth::Dataset::load(f.dataset);
  harness::MetricsReport report;
  harness::TrainConfig config;
  if (oracle) {
    config = resolve(f);
    report = harness::evaluate_predictions(ds, config, [&](std::size_t i) {
      harness::Prediction p;
      p.pose = ds.record(i).gt_pose;
      return p;
    });
    report.metadata["predictor"] = "oracle";
  } else {
    if (f.checkpoint.empty()) throw ConfigError("eval needs --checkpoint (or --oracle)");
    harness::TrainConfig stored;
    const auto model = harness::load_checkpoint(f.checkpoint, stored);
    config = resolve(f, stored);
    report = harness::evaluate(model, ds, config);
    report.metadata["checkpoint"] = f.checkpoint;
  }
  const fs::path out = f.out.empty() ? fs::path(f.checkpoint) : fs::path(f.out);
  ensure_dir(out);
  write_text(out / "config.txt", harness::to_text(config).serialize());
  write_report(out, report);
  print_summary(report);
  return 0;
}

int cmd_ablate(const RunFlags& f, const std::string& suite, const std::string& seeds_text) {
  const auto config = resolve(f);
  const auto ds = synth::Dataset::load(f.dataset);
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split(seeds_text, ',')) seeds.push_back(std::stoull(s));
  if (seeds.empty()) throw ConfigError("--seeds must name at least one seed");
  ensure_dir(f.out);
  write_text(fs::path(f.out) / "config.txt", harness::to_text(config).serialize());
  const auto table = harness::run_ablation(suite, config, ds, seeds,
                                           [](const std::string& line) { std::cout << line << std::endl; });
  write_text(fs::path(f.out) / "table.txt", table.to_text());
  write_text(fs::path(f.out) / "table.md", table.to_markdown());
  std::cout << table.to_markdown();
  return 0;
}

// ---------------------------------------------------------------------------
// plot

std::map<std::string, std::string> parse_fields(const std::string& line) {
  std::map<std::string, std::string> out;
  for (const auto& tok : split(line, ' ')) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) out[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return out;
}

std::vector<std::string> lines_of(const std::string& path) {
  return split(io::read_file(path), '\n');
}

const std::vector<std::string> kMetricKeys = {"iou50", "iou75", "5deg2cm", "5deg5cm", "10deg2cm", "10deg5cm"};

int cmd_plot(const std::string& report, const std::string& log, const std::string& table,
             const std::string& out) {
  if (report.empty() && log.empty() && table.empty()) {
    throw ConfigError("plot needs at least one of --report, --log, --table");
  }
  ensure_dir(out);
  if (!report.empty()) {
    std::vector<double> edges;
    std::vector<double> counts;
    std::vector<double> metrics;
    for (const auto& line : lines_of(report)) {
      const auto fields = parse_fields(line);
      if (fields.count("nocs_hist.bin")) {
        const auto lohi = split(fields.at("nocs_hist.bin"), ',');
        if (edges.empty()) edges.push_back(std::stod(lohi.at(0)));
        edges.push_back(std::stod(lohi.at(1)));
        counts.push_back(std::stod(fields.at("count")));
      } else if (fields.count("row") && fields.at("row") == "mean") {
        for (const auto& k : kMetricKeys) metrics.push_back(std::stod(fields.at(k)));
      }
    }
    if (counts.empty()) throw CorruptDataset("report has no histogram lines: " + report);
    double total = 0.0;
    for (double c : counts) total += c;
    for (double& c : counts) c /= std::max(total, 1.0);
    write_text(fs::path(out) / "nocs_hist.svg",
               tools::svg_bars("NOCS error distribution", edges, counts, "NOCS error", "fraction"));
    write_text(fs::path(out) / "metrics.svg",
               tools::svg_labeled_bars("Mean precision", kMetricKeys, metrics, "precision"));
  }
  if (!log.empty()) {
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> series;
    for (const char* key : {"loss_total", "loss_ocd", "loss_div", "loss_nocs", "loss_pose"}) {
      series.push_back({key, {}});
    }
    for (const auto& line : lines_of(log)) {
      const auto fields = parse_fields(line);
      if (!fields.count("step")) continue;
      const double step = std::stod(fields.at("step"));
      for (auto& [key, pts] : series) {
        if (fields.count(key)) pts.emplace_back(step, std::stod(fields.at(key)));
      }
    }
    write_text(fs::path(out) / "losses.svg",
               tools::svg_lines("Training losses", series, "step", "loss", true));
  }
  if (!table.empty()) {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& line : lines_of(table)) {
      const auto fields = parse_fields(line);
      if (!fields.count("row")) continue;
      labels.push_back(fields.at("row"));
      values.push_back(std::stod(fields.at("10deg5cm")));
    }
    write_text(fs::path(out) / "ablation.svg",
               tools::svg_labeled_bars("Ablation, 10deg5cm", labels, values, "precision"));
  }
  std::cout << "plots=" << out << "\n";
  return 0;
}

void add_run_flags(CLI::App* cmd, RunFlags& f, bool needs_out) {
  cmd->add_option("--config", f.config, "key=value config file")->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", f.out, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--dataset", f.dataset, "dataset directory")->required();
  cmd->add_option("--seed", f.seed, "training seed")->each([&f](const std::string&) { f.seed_set = true; });
  cmd->add_option("--steps", f.steps, "optimizer steps");
  cmd->add_option("--nkpt", f.nkpt, "number of keypoints");
  cmd->add_option("--k", f.k, "local neighborhood size");
  cmd->add_option("--recovery", f.recovery, "pose recovery mode")
      ->check(CLI::IsMember({"regression", "umeyama"}));
  cmd->add_option("--set", f.overrides, "extra key=value overrides");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"category-level object pose and size estimation on synthetic data"};
  app.require_subcommand(1);

  GenerateFlags gen;
  auto* g = app.add_subcommand("generate", "generate a synthetic dataset");
  g->add_option("--out", gen.out, "dataset directory")->required();
  g->add_option("--config", gen.config, "key=value config file")->check(CLI::ExistingFile);
  g->add_option("--seed", gen.seed, "root seed");
  g->add_option("--categories", gen.categories, "count or comma-separated names");
  g->add_option("--train-instances", gen.train_instances, "train instances per category");
  g->add_option("--test-instances", gen.test_instances, "test instances per category");
  g->add_option("--views", gen.views, "views per instance");
  g->add_option("--num-points", gen.num_points, "points per observation");

  RunFlags train_flags;
  auto* t = app.add_subcommand("train", "train a model");
  add_run_flags(t, train_flags, true);

  RunFlags eval_flags;
  bool oracle = false;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_run_flags(e, eval_flags, false);
  e->add_option("--checkpoint", eval_flags.checkpoint, "checkpoint directory");
  e->add_flag("--oracle", oracle, "use ground-truth poses as predictions");

  RunFlags ablate_flags;
  std::string suite;
  std::string seeds = "0,1,2";
  auto* a = app.add_subcommand("ablate", "run an ablation suite");
  add_run_flags(a, ablate_flags, true);
  a->add_option("--suite", suite, "suite name")->required()->check(CLI::IsMember(harness::ablation_suites()));
  a->add_option("--seeds", seeds, "comma-separated seeds");

  std::string report;
  std::string log;
  std::string table;
  std::string plot_out;
  auto* p = app.add_subcommand("plot", "render report files to SVG");
  p->add_option("--report", report, "metrics.txt from eval or train")->check(CLI::ExistingFile);
  p->add_option("--log", log, "train_log.txt")->check(CLI::ExistingFile);
  p->add_option("--table", table, "table.txt from ablate")->check(CLI::ExistingFile);
  p->add_option("--out", plot_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(train_flags);
    if (*e) return cmd_eval(eval_flags, oracle);
    if (*a) return cmd_ablate(ablate_flags, suite, seeds);
    if (*p) return cmd_plot(report, log, table, plot_out);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
