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

#include "agpose/synthdata.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "agpose/blockio.hpp"
#include "agpose/errors.hpp"
#include "agpose/parallel.hpp"

namespace agpose::synth {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kFormatVersion = 1;

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

// Triangle soup with one interior reference point per face, used to orient
// face normals outward.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3> interior;

  int add_vertex(const Vec3& v) {
    vertices.push_back(v);
    return static_cast<int>(vertices.size()) - 1;
  }
  void add_face(int a, int b, int c, const Vec3& inside) {
    faces.push_back({a, b, c});
    interior.push_back(inside);
  }
};

struct ProfilePoint {
  double y;
  double r;
};

// Surface of revolution about the y axis, closed by flat caps.
void add_lathe(Mesh& mesh, const std::vector<ProfilePoint>& profile, int segments,
               const Vec3& offset = Vec3::Zero()) {
  const int rings = static_cast<int>(profile.size());
  std::vector<int> idx(static_cast<std::size_t>(rings * segments));
  for (int i = 0; i < rings; ++i) {
    for (int j = 0; j < segments; ++j) {
      const double a = 2.0 * kPi * j / segments;
      idx[i * segments + j] = mesh.add_vertex(
          offset + Vec3(profile[i].r * std::cos(a), profile[i].y, profile[i].r * std::sin(a)));
    }
  }
  for (int i = 0; i + 1 < rings; ++i) {
    const Vec3 inside = offset + Vec3(0.0, 0.5 * (profile[i].y + profile[i + 1].y), 0.0);
    for (int j = 0; j < segments; ++j) {
      const int jn = (j + 1) % segments;
      mesh.add_face(idx[i * segments + j], idx[(i + 1) * segments + j],
                    idx[(i + 1) * segments + jn], inside);
      mesh.add_face(idx[i * segments + j], idx[(i + 1) * segments + jn], idx[i * segments + jn],
                    inside);
    }
  }
  const double height = profile.back().y - profile.front().y;
  const int bottom = mesh.add_vertex(offset + Vec3(0.0, profile.front().y, 0.0));
  const int top = mesh.add_vertex(offset + Vec3(0.0, profile.back().y, 0.0));
  const Vec3 bottom_in = offset + Vec3(0.0, profile.front().y + 0.25 * height, 0.0);
  const Vec3 top_in = offset + Vec3(0.0, profile.back().y - 0.25 * height, 0.0);
  for (int j = 0; j < segments; ++j) {
    const int jn = (j + 1) % segments;
    mesh.add_face(bottom, idx[j], idx[jn], bottom_in);
    mesh.add_face(top, idx[(rings - 1) * segments + j], idx[(rings - 1) * segments + jn], top_in);
  }
}

void add_box(Mesh& mesh, const Vec3& center, const Vec3& half) {
  std::array<int, 8> c;
  for (int i = 0; i < 8; ++i) {
    c[i] = mesh.add_vertex(center + Vec3((i & 1) ? half.x() : -half.x(),
                                         (i & 2) ? half.y() : -half.y(),
                                         (i & 4) ? half.z() : -half.z()));
  }
  static constexpr int kQuads[6][4] = {{0, 2, 6, 4}, {1, 5, 7, 3}, {0, 4, 5, 1},
                                       {2, 3, 7, 6}, {0, 1, 3, 2}, {4, 6, 7, 5}};
  for (const auto& q : kQuads) {
    mesh.add_face(c[q[0]], c[q[1]], c[q[2]], center);
    mesh.add_face(c[q[0]], c[q[2]], c[q[3]], center);
  }
}

// Half torus in the x-y plane bulging toward +x, used as a mug handle.
void add_handle(Mesh& mesh, const Vec3& center, double ring_radius, double tube_radius,
                int ring_segments, int tube_segments) {
  std::vector<int> idx;
  std::vector<Vec3> ring_centers;
  for (int i = 0; i <= ring_segments; ++i) {
    const double a = -0.5 * kPi + kPi * i / ring_segments;
    const Vec3 dir(std::cos(a), std::sin(a), 0.0);
    const Vec3 rc = center + ring_radius * dir;
    ring_centers.push_back(rc);
    for (int j = 0; j < tube_segments; ++j) {
      const double b = 2.0 * kPi * j / tube_segments;
      idx.push_back(
          mesh.add_vertex(rc + tube_radius * (std::cos(b) * dir + std::sin(b) * Vec3::UnitZ())));
    }
  }
  for (int i = 0; i < ring_segments; ++i) {
    const Vec3 inside = 0.5 * (ring_centers[i] + ring_centers[i + 1]);
    for (int j = 0; j < tube_segments; ++j) {
      const int jn = (j + 1) % tube_segments;
      const int a = idx[i * tube_segments + j];
      const int b = idx[(i + 1) * tube_segments + j];
      const int c = idx[(i + 1) * tube_segments + jn];
      const int d = idx[i * tube_segments + jn];
      mesh.add_face(a, b, c, inside);
      mesh.add_face(a, c, d, inside);
    }
  }
}

double param(const CategorySpec& spec, const std::vector<double>& values, const std::string& name) {
  for (std::size_t i = 0; i < spec.shape_params.size(); ++i) {
    if (spec.shape_params[i].name == name) return values[i];
  }
  throw ConfigError("category '" + spec.name + "' lacks shape parameter '" + name + "'");
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

Mesh build_mesh(const CategorySpec& spec, const std::vector<double>& v) {
  Mesh mesh;
  switch (spec.base_generator) {
    case Generator::CylinderLathe: {
      const double h = param(spec, v, "height");
      const double rb = param(spec, v, "body_radius");
      const double rn = rb * param(spec, v, "neck_ratio");
      const double sh = param(spec, v, "shoulder");
      std::vector<ProfilePoint> profile;
      constexpr int kRings = 40;
      for (int i = 0; i <= kRings; ++i) {
        const double y = h * i / kRings;
        const double w = smoothstep((y / h - sh) / 0.15);
        profile.push_back({y, (1.0 - w) * rb + w * rn});
      }
      add_lathe(mesh, profile, 64);
      break;
    }
    case Generator::BoxWithLid: {
      const double w = param(spec, v, "width");
      const double h = param(spec, v, "height");
      const double d = param(spec, v, "depth");
      const double lt = h * param(spec, v, "lid_thickness");
      const double o = param(spec, v, "lid_overhang");
      const double latch = param(spec, v, "latch_size");
      add_box(mesh, Vec3(0.0, 0.5 * h, 0.0), Vec3(0.5 * w, 0.5 * h, 0.5 * d));
      // Lid overhangs front and sides, flush at the back.
      add_box(mesh, Vec3(0.0, h + 0.5 * lt, 0.5 * o), Vec3(0.5 * w + o, 0.5 * lt, 0.5 * d + 0.5 * o));
      add_box(mesh, Vec3(0.0, h - 0.5 * latch, 0.5 * d + 0.25 * latch),
              Vec3(0.5 * latch, 0.5 * latch, 0.25 * latch));
      break;
    }
    case Generator::HandleBody: {
      const double r = param(spec, v, "body_radius");
      const double h = param(spec, v, "height");
      const double hr = h * param(spec, v, "handle_radius");
      const double ht = param(spec, v, "handle_thickness");
      std::vector<ProfilePoint> profile;
      for (int i = 0; i <= 16; ++i) profile.push_back({h * i / 16.0, r});
      add_lathe(mesh, profile, 64);
      add_handle(mesh, Vec3(r, 0.5 * h, 0.0), hr, ht, 24, 12);
      break;
    }
  }
  return mesh;
}

struct SurfaceSample {
  Points points;
  Points normals;
};

SurfaceSample sample_mesh(const Mesh& mesh, int count, Rng& rng) {
  std::vector<double> areas;
  std::vector<Vec3> normals;
  areas.reserve(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    Vec3 n = (b - a).cross(c - a);
    areas.push_back(0.5 * n.norm());
    n = n.norm() > 0 ? n.normalized() : Vec3::UnitY();
    if (n.dot((a + b + c) / 3.0 - mesh.interior[f]) < 0.0) n = -n;
    normals.push_back(n);
  }
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
  SurfaceSample out{Points(count, 3), Points(count, 3)};
  for (int i = 0; i < count; ++i) {
    const std::size_t f = pick(rng);
    const auto& tri = mesh.faces[f];
    double r1 = std::sqrt(uniform(rng, 0.0, 1.0));
    double r2 = uniform(rng, 0.0, 1.0);
    const Vec3 p = (1.0 - r1) * mesh.vertices[tri[0]] + r1 * (1.0 - r2) * mesh.vertices[tri[1]] +
                   r1 * r2 * mesh.vertices[tri[2]];
    out.points.row(i) = p.transpose();
    out.normals.row(i) = normals[f].transpose();
  }
  return out;
}

float to_float(double x) { return static_cast<float>(x); }

// Smooth category- and instance-dependent coloring of the surface
// parameterization.
Eigen::Vector3f pseudo_color(double u, double v, int color_seed) {
  const double phase = 0.37 * color_seed;
  Eigen::Vector3f c;
  c(0) = to_float(0.5 + 0.5 * std::sin(2.0 * kPi * (1.3 * u + 1.0 * v) + phase));
  c(1) = to_float(0.5 + 0.5 * std::sin(2.0 * kPi * (0.7 * u - 2.0 * v) + 1.7 * phase + 1.0));
  c(2) = to_float(0.5 + 0.5 * std::cos(2.0 * kPi * (2.1 * u + 0.5 * v) + 0.3 * phase));
  return c;
}

}  // namespace

std::string to_string(Generator g) {
  switch (g) {
    case Generator::CylinderLathe:
      return "cylinder-lathe";
    case Generator::BoxWithLid:
      return "box-with-lid";
    case Generator::HandleBody:
      return "handle-body";
  }
  return "unknown";
}

Generator generator_from_string(const std::string& name) {
  if (name == "cylinder-lathe") return Generator::CylinderLathe;
  if (name == "box-with-lid") return Generator::BoxWithLid;
  if (name == "handle-body") return Generator::HandleBody;
  throw ConfigError("unknown generator '" + name + "'");
}

void validate(const CategorySpec& spec) {
  if (spec.shape_params.size() < 2) {
    throw ConfigError("category '" + spec.name + "' needs at least two shape parameters");
  }
  for (const auto& p : spec.shape_params) {
    if (!(p.min < p.max)) {
      throw ConfigError("category '" + spec.name + "': empty range for '" + p.name + "'");
    }
  }
}

std::vector<CategorySpec> default_categories() {
  return {
      {"bottle",
       true,
       {{"height", 0.8, 1.6}, {"body_radius", 0.25, 0.45}, {"neck_ratio", 0.25, 0.6},
        {"shoulder", 0.45, 0.75}},
       Generator::CylinderLathe},
      {"case",
       false,
       {{"width", 0.6, 1.0},
        {"height", 0.3, 0.7},
        {"depth", 0.35, 0.7},
        {"lid_thickness", 0.06, 0.15},
        {"lid_overhang", 0.02, 0.08},
        {"latch_size", 0.06, 0.12}},
       Generator::BoxWithLid},
      {"mug",
       false,
       {{"body_radius", 0.3, 0.45},
        {"height", 0.6, 1.1},
        {"handle_radius", 0.15, 0.3},
        {"handle_thickness", 0.03, 0.06}},
       Generator::HandleBody},
  };
}

InstanceModel sample_instance(const CategorySpec& spec, std::uint64_t seed, int num_points) {
  validate(spec);
  Rng rng(seed);
  std::vector<double> values;
  for (const auto& p : spec.shape_params) values.push_back(uniform(rng, p.min, p.max));
  const Mesh mesh = build_mesh(spec, values);
  SurfaceSample s = sample_mesh(mesh, num_points, rng);

  Vec3 lo = s.points.colwise().minCoeff();
  Vec3 hi = s.points.colwise().maxCoeff();
  Vec3 center = 0.5 * (lo + hi);
  Vec3 extent = hi - lo;
  if (spec.base_generator == Generator::CylinderLathe) {
    // Keep the symmetry axis at the origin.
    const double r = s.points.leftCols<1>().cwiseAbs2().binaryExpr(
                         s.points.rightCols<1>().cwiseAbs2(), std::plus<double>()).maxCoeff();
    center.x() = 0.0;
    center.z() = 0.0;
    extent.x() = extent.z() = 2.0 * std::sqrt(r);
  }
  const double diag = extent.norm();

  InstanceModel model;
  model.points = ((s.points.rowwise() - center.transpose()) / diag)
                     .unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
  model.normals = s.normals;
  model.extent = extent / diag;

  model.params.resize(num_points, 2);
  const double ymin = model.points.col(1).minCoeff();
  const double yspan = std::max(1e-12, model.points.col(1).maxCoeff() - ymin);
  for (int i = 0; i < num_points; ++i) {
    model.params(i, 0) = (model.points(i, 1) - ymin) / yspan;
    model.params(i, 1) =
        spec.symmetric_y ? 0.0
                         : std::atan2(model.points(i, 2), model.points(i, 0)) / (2.0 * kPi) + 0.5;
  }
  model.color_seed = static_cast<int>(rng() % 1000);
  return model;
}

AttrMatrix expand_attributes(const AttrBase& base) {
  constexpr int kFreqs = (kAttrChannels - kAttrBaseChannels) / 4;
  AttrMatrix out(base.rows(), kAttrChannels);
  out.leftCols<kAttrBaseChannels>() = base;
  for (Eigen::Index i = 0; i < base.rows(); ++i) {
    const float u = base(i, 6);
    const float v = base(i, 7);
    for (int k = 0; k < kFreqs; ++k) {
      const float w = static_cast<float>(kPi) * static_cast<float>(k + 1);
      out(i, kAttrBaseChannels + 4 * k + 0) = std::sin(w * u);
      out(i, kAttrBaseChannels + 4 * k + 1) = std::cos(w * u);
      out(i, kAttrBaseChannels + 4 * k + 2) = std::sin(w * v);
      out(i, kAttrBaseChannels + 4 * k + 3) = std::cos(w * v);
    }
  }
  return out;
}

Eigen::VectorXd nearest_distances(const Points& queries, const Points& reference) {
  Eigen::VectorXd out(queries.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    out(i) = std::sqrt((reference.rowwise() - queries.row(i)).rowwise().squaredNorm().minCoeff());
  }
  return out;
}

ObservedInstance render_observation(const InstanceModel& model, const Pose& pose,
                                    const RenderOptions& options, std::uint64_t seed) {
  if (!(options.outlier_frac >= 0.0 && options.outlier_frac <= 0.3)) {
    throw ConfigError("outlier_frac must lie in [0, 0.3]");
  }
  const int n = options.num_points;
  Rng rng(seed);
  const Points posed = geometry::from_nocs(model.points, pose);
  const Points normals_cam = model.normals * pose.R.transpose();

  std::vector<int> visible;
  for (Eigen::Index i = 0; i < posed.rows(); ++i) {
    // The camera sits at the origin; keep points whose normal faces it.
    if (normals_cam.row(i).dot(-posed.row(i)) > 0.0) visible.push_back(static_cast<int>(i));
  }
  if (static_cast<int>(visible.size()) < n / 2) {
    throw InsufficientSurface("only " + std::to_string(visible.size()) +
                              " visible model points for N = " + std::to_string(n));
  }

  const int n_out = static_cast<int>(std::floor(options.outlier_frac * n));
  const int n_surf = n - n_out;
  std::vector<int> chosen;
  if (static_cast<int>(visible.size()) >= n_surf) {
    std::vector<int> pool = visible;
    for (int i = 0; i < n_surf; ++i) {
      std::uniform_int_distribution<int> d(i, static_cast<int>(pool.size()) - 1);
      std::swap(pool[i], pool[d(rng)]);
    }
    chosen.assign(pool.begin(), pool.begin() + n_surf);
  } else {
    std::uniform_int_distribution<std::size_t> d(0, visible.size() - 1);
    for (int i = 0; i < n_surf; ++i) chosen.push_back(visible[d(rng)]);
  }

  ObservedInstance obs;
  obs.points.resize(n, 3);
  obs.attr_base.resize(n, kAttrBaseChannels);
  obs.outlier_mask.assign(static_cast<std::size_t>(n), 0);
  obs.gt_pose = pose;
  obs.model_points = model.points;
  obs.model_extent = model.extent;

  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < n_surf; ++i) {
    const int m = chosen[i];
    Vec3 p = posed.row(m).transpose();
    if (options.noise_sigma > 0.0) {
      p += options.noise_sigma * Vec3(noise(rng), noise(rng), noise(rng));
    }
    obs.points.row(i) = p.transpose();
    const Eigen::Vector3f c = pseudo_color(model.params(m, 0), model.params(m, 1), model.color_seed);
    obs.attr_base.row(i) << to_float(normals_cam(m, 0)), to_float(normals_cam(m, 1)),
        to_float(normals_cam(m, 2)), c(0), c(1), c(2), to_float(model.params(m, 0)),
        to_float(model.params(m, 1));
  }

  std::uniform_int_distribution<int> pick_surface(0, n_surf - 1);
  for (int i = n_surf; i < n; ++i) {
    Vec3 candidate;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw InsufficientSurface("cannot place background outlier");
      const Vec3 anchor = posed.row(chosen[pick_surface(rng)]).transpose();
      candidate = anchor + uniform(rng, options.outlier_min_offset, options.outlier_max_offset) *
                               random_unit(rng);
      const double nn = (posed.rowwise() - candidate.transpose()).rowwise().squaredNorm().minCoeff();
      if (std::sqrt(nn) >= options.outlier_min_offset) break;
    }
    obs.points.row(i) = candidate.transpose();
    const Vec3 nrm = random_unit(rng);
    obs.attr_base.row(i) << to_float(nrm.x()), to_float(nrm.y()), to_float(nrm.z()),
        to_float(uniform(rng, 0, 1)), to_float(uniform(rng, 0, 1)), to_float(uniform(rng, 0, 1)),
        to_float(uniform(rng, 0, 1)), to_float(uniform(rng, 0, 1));
    obs.outlier_mask[static_cast<std::size_t>(i)] = 1;
  }

  // Shuffle so that outliers are not grouped at the tail.
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  ObservedInstance shuffled = obs;
  for (int i = 0; i < n; ++i) {
    shuffled.points.row(i) = obs.points.row(perm[i]);
    shuffled.attr_base.row(i) = obs.attr_base.row(perm[i]);
    shuffled.outlier_mask[static_cast<std::size_t>(i)] = obs.outlier_mask[perm[i]];
  }
  return shuffled;
}

ObservedInstance augment(const ObservedInstance& obs, std::uint64_t seed,
                         const AugmentOptions& options) {
  if (options.max_translation == 0.0 && options.max_rotation_deg == 0.0 &&
      options.scale_min == 1.0 && options.scale_max == 1.0) {
    return obs;
  }
  Rng rng(seed);
  const auto sym = [&](double m) { return m > 0.0 ? uniform(rng, -m, m) : 0.0; };
  const double deg = kPi / 180.0;
  const Vec3 dt(sym(options.max_translation), sym(options.max_translation),
                sym(options.max_translation));
  const double scale =
      options.scale_max > options.scale_min ? uniform(rng, options.scale_min, options.scale_max)
                                            : options.scale_min;
  const double ax = sym(options.max_rotation_deg) * deg;
  const double ay = sym(options.max_rotation_deg) * deg;
  const double az = sym(options.max_rotation_deg) * deg;
  const geometry::Mat3 R_aug = geometry::rot_z(az) * geometry::rot_y(ay) * geometry::rot_x(ax);

  ObservedInstance out = obs;
  const Vec3 center = obs.gt_pose.t;
  // p' = scale * R_aug (p - c) + c + dt
  out.points = ((((obs.points.rowwise() - center.transpose()) * R_aug.transpose()) * scale)
                    .rowwise() +
                (center + dt).transpose());
  out.gt_pose.R = R_aug * obs.gt_pose.R;
  out.gt_pose.t = obs.gt_pose.t + dt;
  out.gt_pose.s = obs.gt_pose.s * scale;
  const Eigen::Matrix3f Rf = R_aug.cast<float>();
  out.attr_base.leftCols<3>() = obs.attr_base.leftCols<3>() * Rf.transpose();
  return out;
}

Pose sample_pose(const InstanceModel& model, double diagonal, std::uint64_t seed) {
  Rng rng(seed);
  const double deg = kPi / 180.0;
  const double yaw = uniform(rng, 0.0, 2.0 * kPi);
  const double elevation = uniform(rng, 10.0, 60.0) * deg;
  const double roll = uniform(rng, -10.0, 10.0) * deg;
  Pose pose;
  pose.R = geometry::rot_z(roll) * geometry::rot_x(elevation) * geometry::rot_y(yaw);
  pose.t = Vec3(uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2), uniform(rng, 0.7, 1.2));
  pose.s = model.extent * diagonal;
  return pose;
}

Dataset::Dataset(DatasetConfig config, std::vector<ObservedInstance> records,
                 std::vector<RecordInfo> info)
    : config_(std::move(config)), records_(std::move(records)), info_(std::move(info)) {}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < info_.size(); ++i) {
    if (info_[i].split == s) out.push_back(i);
  }
  return out;
}

bool Dataset::category_symmetric(std::int32_t category) const {
  return config_.categories.at(static_cast<std::size_t>(category)).symmetric_y;
}

namespace {

struct InstanceJob {
  Split split;
  std::int32_t category;
  std::int32_t instance_id;
  std::uint64_t seed;
};

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw CorruptDataset("malformed number '" + s + "' in manifest");
  }
  return x;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::string record_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", i);
  return buf;
}

io::BlockSet encode_record(const ObservedInstance& obs) {
  io::BlockSet set;
  set.add_matrix("P_obj", obs.points);
  set.add_matrix("attr_base", obs.attr_base);
  set.add_matrix("R_gt", obs.gt_pose.R);
  set.add_matrix("t_gt", obs.gt_pose.t);
  set.add_matrix("s_gt", obs.gt_pose.s);
  set.add_matrix("M_obj", obs.model_points.cast<float>());
  set.add_matrix("M_extent", obs.model_extent);
  set.add_vector("outlier_mask", obs.outlier_mask);
  set.add_vector("category", std::vector<std::int32_t>{obs.category});
  set.add_vector("instance_id", std::vector<std::int32_t>{obs.instance_id});
  set.add_vector("symmetric", std::vector<std::uint8_t>{static_cast<std::uint8_t>(obs.symmetric)});
  return set;
}

ObservedInstance decode_record(const io::BlockSet& set) {
  ObservedInstance obs;
  obs.points = set.matrix_f64("P_obj");
  obs.attr_base = set.matrix_f32("attr_base");
  obs.gt_pose.R = set.matrix_f64("R_gt");
  obs.gt_pose.t = set.matrix_f64("t_gt");
  obs.gt_pose.s = set.matrix_f64("s_gt");
  obs.model_points = set.matrix_f64("M_obj");
  obs.model_extent = set.matrix_f64("M_extent");
  obs.outlier_mask = set.vector_u8("outlier_mask");
  const auto cat = set.vector_i32("category");
  const auto inst = set.vector_i32("instance_id");
  const auto sym = set.vector_u8("symmetric");
  if (cat.size() != 1 || inst.size() != 1 || sym.size() != 1 ||
      obs.outlier_mask.size() != static_cast<std::size_t>(obs.points.rows()) ||
      obs.attr_base.rows() != obs.points.rows()) {
    throw CorruptDataset("record arrays have inconsistent shapes");
  }
  obs.category = cat[0];
  obs.instance_id = inst[0];
  obs.symmetric = sym[0] != 0;
  return obs;
}

io::KeyValueText manifest_for(const Dataset& ds) {
  const auto& c = ds.config();
  io::KeyValueText kv;
  kv.set("version", std::to_string(kFormatVersion));
  std::string names;
  for (const auto& cat : c.categories) names += (names.empty() ? "" : ",") + cat.name;
  kv.set("categories", names);
  for (const auto& cat : c.categories) {
    std::string v = to_string(cat.base_generator) + " symmetric_y=" + (cat.symmetric_y ? "1" : "0");
    for (const auto& p : cat.shape_params) {
      v += " " + p.name + "=" + format_double(p.min) + ":" + format_double(p.max);
    }
    kv.set("category." + cat.name, v);
  }
  kv.set("counts", "train_instances=" + std::to_string(c.train_instances) +
                       " test_instances=" + std::to_string(c.test_instances) +
                       " views=" + std::to_string(c.views) +
                       " train_records=" + std::to_string(ds.indices(Split::Train).size()) +
                       " test_records=" + std::to_string(ds.indices(Split::Test).size()));
  kv.set("seeds", "root=" + std::to_string(c.seed));
  kv.set("sigma", format_double(c.render.noise_sigma));
  kv.set("outlier_frac", format_double(c.render.outlier_frac));
  kv.set("num_points", std::to_string(c.render.num_points));
  kv.set("model_points", std::to_string(c.model_points));
  kv.set("diagonal", format_double(c.min_diagonal) + ":" + format_double(c.max_diagonal));
  return kv;
}

std::map<std::string, std::string> parse_fields(const std::string& value) {
  std::map<std::string, std::string> out;
  for (const auto& tok : split_on(value, ' ')) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) out[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return out;
}

DatasetConfig config_from_manifest(const io::KeyValueText& kv) {
  try {
    if (std::stoi(kv.get("version")) != kFormatVersion) {
      throw CorruptDataset("unsupported dataset version " + kv.get("version"));
    }
    DatasetConfig c;
    c.categories.clear();
    for (const auto& name : split_on(kv.get("categories"), ',')) {
      const auto fields = split_on(kv.get("category." + name), ' ');
      if (fields.empty()) throw CorruptDataset("empty category entry for " + name);
      CategorySpec spec;
      spec.name = name;
      spec.base_generator = generator_from_string(fields[0]);
      for (std::size_t i = 1; i < fields.size(); ++i) {
        const auto eq = fields[i].find('=');
        const auto key = fields[i].substr(0, eq);
        const auto val = fields[i].substr(eq + 1);
        if (key == "symmetric_y") {
          spec.symmetric_y = val == "1";
        } else {
          const auto colon = val.find(':');
          spec.shape_params.push_back(
              {key, parse_double(val.substr(0, colon)), parse_double(val.substr(colon + 1))});
        }
      }
      c.categories.push_back(spec);
    }
    const auto counts = parse_fields(kv.get("counts"));
    c.train_instances = std::stoi(counts.at("train_instances"));
    c.test_instances = std::stoi(counts.at("test_instances"));
    c.views = std::stoi(counts.at("views"));
    c.seed = std::stoull(parse_fields(kv.get("seeds")).at("root"));
    c.render.noise_sigma = parse_double(kv.get("sigma"));
    c.render.outlier_frac = parse_double(kv.get("outlier_frac"));
    c.render.num_points = std::stoi(kv.get("num_points"));
    c.model_points = std::stoi(kv.get("model_points"));
    const auto diag = kv.get("diagonal");
    c.min_diagonal = parse_double(diag.substr(0, diag.find(':')));
    c.max_diagonal = parse_double(diag.substr(diag.find(':') + 1));
    return c;
  } catch (const CorruptDataset&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptDataset(std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace

Dataset build_dataset_in_memory(const DatasetConfig& config) {
  for (const auto& c : config.categories) validate(c);
  if (config.train_instances < 0 || config.test_instances < 0 || config.views < 1) {
    throw ConfigError("dataset counts must be non-negative and views >= 1");
  }

  std::vector<InstanceJob> jobs;
  std::int32_t next_id = 0;
  for (Split split : {Split::Train, Split::Test}) {
    const int count = split == Split::Train ? config.train_instances : config.test_instances;
    for (std::size_t cat = 0; cat < config.categories.size(); ++cat) {
      for (int i = 0; i < count; ++i) {
        jobs.push_back({split, static_cast<std::int32_t>(cat), next_id++,
                        derive_seed(config.seed, 1 + static_cast<std::uint64_t>(split), cat,
                                    static_cast<std::uint64_t>(i))});
      }
    }
  }
  std::set<std::uint64_t> train_seeds;
  for (const auto& j : jobs) {
    if (j.split == Split::Train) train_seeds.insert(j.seed);
  }
  for (const auto& j : jobs) {
    if (j.split == Split::Test && train_seeds.count(j.seed)) {
      throw ConfigError("train/test instance seeds collide");
    }
  }

  const std::size_t views = static_cast<std::size_t>(config.views);
  std::vector<ObservedInstance> records(jobs.size() * views);
  parallel_for(jobs.size(), [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto& spec = config.categories[static_cast<std::size_t>(job.category)];
    const InstanceModel model = sample_instance(spec, job.seed, config.model_points);
    Rng rng(derive_seed(job.seed, 7));
    const double diagonal = uniform(rng, config.min_diagonal, config.max_diagonal);
    for (std::size_t v = 0; v < views; ++v) {
      for (std::uint64_t attempt = 0;; ++attempt) {
        const Pose pose = sample_pose(model, diagonal, derive_seed(job.seed, 11, v, attempt));
        try {
          ObservedInstance obs = render_observation(model, pose, config.render,
                                                    derive_seed(job.seed, 13, v, attempt));
          obs.category = job.category;
          obs.symmetric = spec.symmetric_y;
          obs.instance_id = job.instance_id;
          records[j * views + v] = std::move(obs);
          break;
        } catch (const InsufficientSurface&) {
          if (attempt > 64) throw;
        }
      }
    }
  });

  std::vector<RecordInfo> info;
  for (const auto& job : jobs) {
    for (std::size_t v = 0; v < views; ++v) info.push_back({job.split, 0});
  }
  return Dataset(config, std::move(records), std::move(info));
}

Dataset build_dataset(const DatasetConfig& config, const std::filesystem::path& dir) {
  Dataset ds = build_dataset_in_memory(config);
  std::error_code ec;
  std::filesystem::create_directories(dir / "records", ec);
  if (ec) throw IoError("cannot create '" + (dir / "records").string() + "': " + ec.message());

  io::KeyValueText manifest = manifest_for(ds);
  std::vector<RecordInfo> info;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string bytes = encode_record(ds.record(i)).serialize();
    const std::uint32_t crc = io::crc32(bytes);
    io::write_file(dir / "records" / (record_name(i) + ".bin"), bytes);
    char hex[16];
    std::snprintf(hex, sizeof(hex), "%08x", crc);
    manifest.set("record." + record_name(i),
                 std::string(ds.split(i) == Split::Train ? "train " : "test ") + hex);
    info.push_back({ds.split(i), crc});
  }
  io::write_file(dir / "manifest.txt", manifest.serialize());
  std::vector<ObservedInstance> records;
  records.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) records.push_back(ds.record(i));
  return Dataset(ds.config(), std::move(records), std::move(info));
}

Dataset Dataset::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("dataset directory '" + dir.string() + "' does not exist");
  }
  const auto manifest = io::KeyValueText::parse(io::read_file(dir / "manifest.txt"));
  DatasetConfig config = config_from_manifest(manifest);

  std::vector<std::pair<std::string, RecordInfo>> entries;
  for (const auto& [key, value] : manifest.entries()) {
    if (key.rfind("record.", 0) != 0) continue;
    const auto parts = split_on(value, ' ');
    if (parts.size() != 2) throw CorruptDataset("malformed manifest entry " + key);
    RecordInfo info;
    info.split = parts[0] == "train" ? Split::Train : Split::Test;
    info.crc = static_cast<std::uint32_t>(std::stoul(parts[1], nullptr, 16));
    entries.emplace_back(key.substr(7), info);
  }

  std::vector<ObservedInstance> records(entries.size());
  std::vector<RecordInfo> info(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const std::string bytes = io::read_file(dir / "records" / (entries[i].first + ".bin"));
    if (io::crc32(bytes) != entries[i].second.crc) {
      throw CorruptDataset("checksum mismatch in record " + entries[i].first);
    }
    records[i] = decode_record(io::BlockSet::parse(bytes));
    info[i] = entries[i].second;
  });
  return Dataset(std::move(config), std::move(records), std::move(info));
}

}  // namespace agpose::synth
