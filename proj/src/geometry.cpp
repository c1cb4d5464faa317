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

#include "agpose/geometry.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "agpose/errors.hpp"

namespace agpose::geometry {

bool is_valid(const Pose& pose, double tol) {
  const Mat3 gram = pose.R * pose.R.transpose();
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(pose.R.determinant() - 1.0) > tol) return false;
  return (pose.s.array() > 0.0).all() && pose.t.allFinite();
}

Mat3 rot_x(double a) {
  Mat3 r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}

Mat3 rot_y(double a) {
  Mat3 r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}

Mat3 rot_z(double a) {
  Mat3 r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

Points to_nocs(const Points& points, const Pose& pose) {
  // Row form of R^T (p - t) / |s|.
  const double inv = 1.0 / pose.scale();
  return ((points.rowwise() - pose.t.transpose()) * pose.R) * inv;
}

Points from_nocs(const Points& nocs, const Pose& pose) {
  return ((nocs * pose.scale()) * pose.R.transpose()).rowwise() +
         pose.t.transpose();
}

Similarity umeyama_fit(const Points& src, const Points& dst) {
  if (src.rows() != dst.rows()) {
    throw DegenerateConfiguration("umeyama_fit: point count mismatch");
  }
  const Eigen::Index n = src.rows();
  if (n < 3) throw DegenerateConfiguration("umeyama_fit: need at least 3 points");

  const Eigen::RowVector3d mu_src = src.colwise().mean();
  const Eigen::RowVector3d mu_dst = dst.colwise().mean();
  const Points src_c = src.rowwise() - mu_src;
  const Points dst_c = dst.rowwise() - mu_dst;

  const Mat3 src_cov = src_c.transpose() * src_c / static_cast<double>(n);
  const Eigen::JacobiSVD<Mat3> src_svd(src_cov);
  const Vec3 src_sv = src_svd.singularValues();
  if (!(src_sv(0) > 0.0) || src_sv(1) <= 1e-10 * src_sv(0)) {
    throw DegenerateConfiguration("umeyama_fit: source points are collinear");
  }

  const Mat3 cross_cov = dst_c.transpose() * src_c / static_cast<double>(n);
  const Eigen::JacobiSVD<Mat3> svd(cross_cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 sign = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) sign(2) = -1.0;

  Similarity out;
  out.R = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  const double src_var = src_c.squaredNorm() / static_cast<double>(n);
  out.scale = svd.singularValues().dot(sign) / src_var;
  out.t = mu_dst.transpose() - out.scale * out.R * mu_src.transpose();
  return out;
}

Mat3 rot6d_decode(const Vec6& v) {
  const Vec3 a1 = v.head<3>();
  const Vec3 a2 = v.tail<3>();
  const double n1 = a1.norm();
  if (!(n1 > 1e-12)) throw DegenerateConfiguration("rot6d_decode: zero first column");
  const Vec3 b1 = a1 / n1;
  const Vec3 u2 = a2 - b1.dot(a2) * b1;
  const double n2 = u2.norm();
  if (!(n2 > 1e-12 * std::max(1.0, a2.norm()))) {
    throw DegenerateConfiguration("rot6d_decode: parallel columns");
  }
  Mat3 R;
  R.col(0) = b1;
  R.col(1) = u2 / n2;
  R.col(2) = R.col(0).cross(R.col(1));
  return R;
}

Vec6 rot6d_encode(const Mat3& R) {
  Vec6 v;
  v << R.col(0), R.col(1);
  return v;
}

Mat3 canonicalize_y_symmetric(const Mat3& R) {
  const double theta = std::atan2(R(0, 2) - R(2, 0), R(0, 0) + R(2, 2));
  // R * Ry(-theta)
  return R * rot_y(-theta);
}

double rotation_error_deg(const Mat3& R_pred, const Mat3& R_gt, bool symmetric) {
  Mat3 a = R_pred;
  Mat3 b = R_gt;
  if (symmetric) {
    a = canonicalize_y_symmetric(a);
    b = canonicalize_y_symmetric(b);
  }
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

double translation_error(const Vec3& t_pred, const Vec3& t_gt) {
  return (t_pred - t_gt).norm();
}

namespace {

using Polygon = std::vector<Vec3>;
using Polytope = std::vector<Polygon>;

struct HalfSpace {
  Vec3 normal;  // outward
  double offset;

  double eval(const Vec3& p) const { return normal.dot(p) - offset; }
};

std::array<Vec3, 8> box_corners(const Box3D& box) {
  std::array<Vec3, 8> c;
  const Vec3 h = box.pose.s * 0.5;
  for (int i = 0; i < 8; ++i) {
    const Vec3 local((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                     (i & 4) ? h.z() : -h.z());
    c[i] = box.pose.R * local + box.pose.t;
  }
  return c;
}

Polytope box_polytope(const Box3D& box) {
  const auto c = box_corners(box);
  // Each face as a cyclic vertex list.
  static constexpr int kFaces[6][4] = {{0, 2, 6, 4}, {1, 5, 7, 3}, {0, 4, 5, 1},
                                       {2, 3, 7, 6}, {0, 1, 3, 2}, {4, 6, 7, 5}};
  Polytope poly;
  for (const auto& f : kFaces) poly.push_back({c[f[0]], c[f[1]], c[f[2]], c[f[3]]});
  return poly;
}

std::array<HalfSpace, 6> box_halfspaces(const Box3D& box) {
  std::array<HalfSpace, 6> hs;
  for (int k = 0; k < 3; ++k) {
    const Vec3 axis = box.pose.R.col(k);
    const double center = axis.dot(box.pose.t);
    const double half = 0.5 * box.pose.s(k);
    hs[2 * k] = {axis, center + half};
    hs[2 * k + 1] = {-axis, -center + half};
  }
  return hs;
}

Polytope clip(const Polytope& poly, const HalfSpace& plane) {
  constexpr double kEps = 1e-11;
  Polytope out;
  std::vector<Vec3> cap;
  for (const auto& face : poly) {
    Polygon clipped;
    const std::size_t n = face.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3& cur = face[i];
      const Vec3& nxt = face[(i + 1) % n];
      const double dc = plane.eval(cur);
      const double dn = plane.eval(nxt);
      const bool cur_in = dc <= kEps;
      const bool nxt_in = dn <= kEps;
      if (cur_in) {
        clipped.push_back(cur);
        if (std::abs(dc) <= kEps) cap.push_back(cur);
      }
      if (cur_in != nxt_in) {
        const double w = dc / (dc - dn);
        const Vec3 x = cur + w * (nxt - cur);
        clipped.push_back(x);
        cap.push_back(x);
      }
    }
    // A face lying in the plane is rebuilt below as part of the cap.
    const bool on_plane = std::all_of(face.begin(), face.end(), [&](const Vec3& p) {
      return std::abs(plane.eval(p)) <= kEps;
    });
    if (clipped.size() >= 3 && !on_plane) out.push_back(std::move(clipped));
  }
  std::vector<Vec3> unique;
  for (const auto& p : cap) {
    const bool seen = std::any_of(unique.begin(), unique.end(),
                                  [&](const Vec3& q) { return (p - q).norm() <= kEps; });
    if (!seen) unique.push_back(p);
  }
  cap = std::move(unique);
  if (cap.size() >= 3) {
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : cap) centroid += p;
    centroid /= static_cast<double>(cap.size());
    const Vec3 u = plane.normal.unitOrthogonal();
    const Vec3 v = plane.normal.cross(u);
    std::sort(cap.begin(), cap.end(), [&](const Vec3& a, const Vec3& b) {
      const Vec3 da = a - centroid;
      const Vec3 db = b - centroid;
      return std::atan2(da.dot(v), da.dot(u)) < std::atan2(db.dot(v), db.dot(u));
    });
    out.push_back(std::move(cap));
  }
  return out;
}

// Volume of a closed convex polytope whose faces are ordered polygons.
double polytope_volume(const Polytope& poly) {
  if (poly.size() < 4) return 0.0;
  Vec3 center = Vec3::Zero();
  std::size_t count = 0;
  for (const auto& f : poly) {
    for (const auto& p : f) center += p;
    count += f.size();
  }
  center /= static_cast<double>(count);
  double vol = 0.0;
  for (const auto& f : poly) {
    Vec3 newell = Vec3::Zero();
    for (std::size_t i = 0; i < f.size(); ++i) newell += f[i].cross(f[(i + 1) % f.size()]);
    const double twice_area = newell.norm();
    if (twice_area <= 0.0) continue;
    const double height = std::abs((newell / twice_area).dot(f[0] - center));
    vol += 0.5 * twice_area * height / 3.0;
  }
  return vol;
}

}  // namespace

double box_volume(const Box3D& box) { return box.pose.s.prod(); }

double intersection_volume(const Box3D& a, const Box3D& b) {
  Polytope poly = box_polytope(a);
  for (const auto& hs : box_halfspaces(b)) {
    poly = clip(poly, hs);
    if (poly.size() < 4) return 0.0;
  }
  return polytope_volume(poly);
}

double iou3d(const Box3D& a, const Box3D& b) {
  const double inter = intersection_volume(a, b);
  const double uni = box_volume(a) + box_volume(b) - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

PoseMetrics evaluate_pose(const Pose& pred, const Pose& gt, bool category_symmetric) {
  PoseMetrics m;
  Box3D a{pred};
  Box3D b{gt};
  if (category_symmetric) {
    a.pose.R = canonicalize_y_symmetric(a.pose.R);
    b.pose.R = canonicalize_y_symmetric(b.pose.R);
  }
  m.iou = iou3d(a, b);
  m.rot_err_deg = rotation_error_deg(pred.R, gt.R, category_symmetric);
  m.trans_err = translation_error(pred.t, gt.t);
  m.iou50 = m.iou >= 0.5;
  m.iou75 = m.iou >= 0.75;
  const auto hit = [&](double deg, double meters) {
    return m.rot_err_deg < deg && m.trans_err < meters;
  };
  m.deg5_2cm = hit(5.0, 0.02);
  m.deg5_5cm = hit(5.0, 0.05);
  m.deg10_2cm = hit(10.0, 0.02);
  m.deg10_5cm = hit(10.0, 0.05);
  return m;
}

}  // namespace agpose::geometry
