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
#include <filesystem>
#include <string>
#include <vector>

#include "agpose/geometry.hpp"

namespace agpose::synth {

using geometry::Points;
using geometry::Pose;
using geometry::Vec3;

enum class Generator { CylinderLathe, BoxWithLid, HandleBody };

std::string to_string(Generator g);
Generator generator_from_string(const std::string& name);

struct ShapeParam {
  std::string name;
  double min = 0.0;
  double max = 1.0;
};

struct CategorySpec {
  std::string name;
  bool symmetric_y = false;
  std::vector<ShapeParam> shape_params;
  Generator base_generator = Generator::CylinderLathe;
};

/// Throws ConfigError unless every range has min < max and there are at
/// least two parameters.
void validate(const CategorySpec& spec);

/// bottle (y-symmetric lathe), case (box with lid), mug (handle body).
std::vector<CategorySpec> default_categories();

/// Surface parameterization channels per model point.
using SurfaceParams = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

/// Canonical (NOCS-frame) surface sample of one instance.
struct InstanceModel {
  Points points;          ///< M×3, bounding-box centered, unit diagonal
  Points normals;         ///< M×3 outward unit normals
  SurfaceParams params;   ///< M×2 in [0,1]: height fraction, azimuth fraction
  Vec3 extent = Vec3::Ones();
  int color_seed = 0;     ///< instance-specific pseudo-color phase
};

constexpr int kDefaultModelPoints = 4096;

/// Deterministic in (spec, seed). Points are rounded to float precision so
/// that they survive 32-bit storage unchanged.
InstanceModel sample_instance(const CategorySpec& spec, std::uint64_t seed,
                              int num_points = kDefaultModelPoints);

/// Per-point appearance source: normal (3), pseudo-color (3), surface
/// params (2). Expanded to kAttrChannels by expand_attributes.
constexpr int kAttrBaseChannels = 8;
constexpr int kAttrChannels = 128;
using AttrBase = Eigen::Matrix<float, Eigen::Dynamic, kAttrBaseChannels, Eigen::RowMajor>;
using AttrMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Fixed sinusoidal expansion of the base channels to N×128.
AttrMatrix expand_attributes(const AttrBase& base);

struct ObservedInstance {
  Points points;                      ///< N×3 camera-space, meters
  AttrBase attr_base;                 ///< N×8
  Pose gt_pose;
  Points model_points;                ///< canonical instance model M_obj
  Vec3 model_extent = Vec3::Ones();
  std::vector<std::uint8_t> outlier_mask;  ///< 1 = injected outlier
  std::int32_t category = 0;
  bool symmetric = false;
  std::int32_t instance_id = 0;

  Eigen::Index size() const { return points.rows(); }
  AttrMatrix attrs() const { return expand_attributes(attr_base); }
};

constexpr int kDefaultNumPoints = 1024;

struct RenderOptions {
  int num_points = kDefaultNumPoints;
  double noise_sigma = 0.002;
  double outlier_frac = 0.1;
  double outlier_min_offset = 0.05;
  double outlier_max_offset = 0.3;
};

/// Partial view of the posed model by hemisphere culling, with Gaussian
/// noise and injected background outliers. Throws InsufficientSurface when
/// fewer than N/2 model points face the camera, ConfigError when
/// outlier_frac is outside [0, 0.3].
ObservedInstance render_observation(const InstanceModel& model, const Pose& pose,
                                    const RenderOptions& options, std::uint64_t seed);

struct AugmentOptions {
  double max_translation = 0.02;
  double scale_min = 0.8;
  double scale_max = 1.2;
  double max_rotation_deg = 20.0;

  static AugmentOptions none() { return {0.0, 1.0, 1.0, 0.0}; }
};

/// Random rigid+scale jitter about the object center applied consistently to
/// points, normals and the ground-truth pose.
ObservedInstance augment(const ObservedInstance& obs, std::uint64_t seed,
                         const AugmentOptions& options = {});

/// Tabletop-style pose: full turn about the object's up axis, camera
/// elevation 10°–60°, small roll, 0.7–1.2 m depth.
Pose sample_pose(const InstanceModel& model, double diagonal, std::uint64_t seed);

struct DatasetConfig {
  std::vector<CategorySpec> categories = default_categories();
  int train_instances = 100;  ///< per category
  int test_instances = 20;    ///< per category
  int views = 4;
  std::uint64_t seed = 0;
  RenderOptions render;
  int model_points = kDefaultModelPoints;
  double min_diagonal = 0.1;
  double max_diagonal = 0.4;
};

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct RecordInfo {
  Split split = Split::Train;
  std::uint32_t crc = 0;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetConfig config, std::vector<ObservedInstance> records,
          std::vector<RecordInfo> info);

  /// Throws IoError on unreadable paths and CorruptDataset on checksum or
  /// format errors.
  static Dataset load(const std::filesystem::path& dir);

  const DatasetConfig& config() const { return config_; }
  std::size_t size() const { return records_.size(); }
  const ObservedInstance& record(std::size_t i) const { return records_[i]; }
  Split split(std::size_t i) const { return info_[i].split; }
  const RecordInfo& info(std::size_t i) const { return info_[i]; }
  std::vector<std::size_t> indices(Split s) const;
  bool category_symmetric(std::int32_t category) const;

 private:
  DatasetConfig config_;
  std::vector<ObservedInstance> records_;
  std::vector<RecordInfo> info_;
};

/// Generates every record without touching disk.
Dataset build_dataset_in_memory(const DatasetConfig& config);

/// Generates and persists a dataset: manifest.txt plus records/NNNNNN.bin.
/// Returns the in-memory dataset as written.
Dataset build_dataset(const DatasetConfig& config, const std::filesystem::path& dir);

/// Nearest-neighbor distance from each query row to the reference set.
Eigen::VectorXd nearest_distances(const Points& queries, const Points& reference);

}  // namespace agpose::synth
