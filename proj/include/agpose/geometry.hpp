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
#include <Eigen/Geometry>

namespace agpose::geometry {

/// N×3 point set, one point per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Object pose and size.
///
/// `R` and `t` map canonical (NOCS) coordinates to camera coordinates:
/// p = |s| * R * n + t. `s` is the per-axis extent of the object's
/// bounding box in meters.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 s = Vec3::Ones();

  double scale() const { return s.norm(); }
};

/// True when R is orthonormal with det +1 and all sizes are positive.
bool is_valid(const Pose& pose, double tol = 1e-6);

/// Oriented box: center t, orientation R, full extents s.
struct Box3D {
  Pose pose;
};

/// Similarity transform dst ≈ scale * R * src + t.
struct Similarity {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  double scale = 1.0;
};

Mat3 rot_x(double radians);
Mat3 rot_y(double radians);
Mat3 rot_z(double radians);

Points to_nocs(const Points& points, const Pose& pose);
Points from_nocs(const Points& nocs, const Pose& pose);

/// Closed-form least-squares similarity between corresponded point sets
/// (Umeyama). Throws DegenerateConfiguration when the source covariance has
/// rank < 2 or fewer than 3 points are given.
Similarity umeyama_fit(const Points& src, const Points& dst);

/// Gram–Schmidt decode of the 6D rotation representation. The two halves of
/// `v` become the first two columns of the result. Throws
/// DegenerateConfiguration when the halves are (near) parallel.
Mat3 rot6d_decode(const Vec6& v);
Vec6 rot6d_encode(const Mat3& R);

/// Maps every rotation of a y-axis symmetric object to one representative,
/// so that canonicalize(R * Ry(phi)) == canonicalize(R) for every phi.
Mat3 canonicalize_y_symmetric(const Mat3& R);

/// Geodesic angle between rotations in degrees. With `symmetric` both
/// rotations are canonicalized first.
double rotation_error_deg(const Mat3& R_pred, const Mat3& R_gt, bool symmetric);
double translation_error(const Vec3& t_pred, const Vec3& t_gt);

double box_volume(const Box3D& box);
/// Exact intersection volume of two oriented boxes.
double intersection_volume(const Box3D& a, const Box3D& b);
/// Intersection over union of two oriented boxes, in [0, 1].
double iou3d(const Box3D& a, const Box3D& b);

struct PoseMetrics {
  double iou = 0.0;
  double rot_err_deg = 0.0;
  double trans_err = 0.0;
  bool iou50 = false;
  bool iou75 = false;
  bool deg5_2cm = false;
  bool deg5_5cm = false;
  bool deg10_2cm = false;
  bool deg10_5cm = false;
};

/// Per-instance metrics. Translation thresholds are 0.02 m and 0.05 m.
PoseMetrics evaluate_pose(const Pose& pred, const Pose& gt, bool category_symmetric);

}  // namespace agpose::geometry
