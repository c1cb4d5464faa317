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

#include "agpose/losses.hpp"

#include <cmath>
#include <string>

#include "agpose/errors.hpp"
#include "agpose/synthdata.hpp"

namespace agpose::loss {

void validate(const LossWeights& w) {
  for (double v : {w.ocd, w.div, w.nocs, w.pose, w.th1, w.th2}) {
    if (!(v >= 0.0)) throw ConfigError("loss weights and thresholds must be non-negative");
  }
}

template <typename T>
Var<T> loss_div(Var<T> p_kpt, T th1) {
  const auto n = static_cast<int>(p_kpt.rows());
  if (n < 2) throw ConfigError("loss_div needs at least two keypoints");
  std::vector<int> first;
  std::vector<int> second;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      first.push_back(i);
      second.push_back(j);
    }
  }
  const Var<T> dist =
      ad::row_norms(ad::sub(ad::gather_rows(p_kpt, first), ad::gather_rows(p_kpt, second)));
  return ad::sum_all(ad::relu(ad::add_scalar(ad::scale(dist, T(-1)), th1)));
}

std::vector<int> filter_outliers(const Points& p_obj, const Points& model_points,
                                 const Pose& gt_pose, double th2) {
  const Eigen::VectorXd d = synth::nearest_distances(geometry::to_nocs(p_obj, gt_pose), model_points);
  std::vector<int> kept;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) < th2) kept.push_back(static_cast<int>(i));
  }
  if (kept.empty()) {
    throw EmptyFilterResult("no observed point lies within " + std::to_string(th2) +
                            " of the instance model");
  }
  return kept;
}

template <typename T>
Var<T> loss_chamfer(Var<T> p_kpt, const Matrix<T>& cloud) {
  if (cloud.rows() == 0) throw EmptyFilterResult("chamfer loss against an empty cloud");
  Matrix<T> nearest(p_kpt.rows(), 3);
  const auto& kp = p_kpt.value();
  for (Eigen::Index i = 0; i < kp.rows(); ++i) {
    Eigen::Index j = 0;
    (cloud.rowwise() - kp.row(i)).rowwise().squaredNorm().minCoeff(&j);
    nearest.row(i) = cloud.row(j);
  }
  auto& tape = *p_kpt.tape;
  return ad::mean_all(ad::row_norms(ad::sub(p_kpt, tape.constant(std::move(nearest)))));
}

Points nocs_targets(const Points& p_kpt, const Pose& gt_pose, bool symmetric) {
  Pose pose = gt_pose;
  if (symmetric) pose.R = geometry::canonicalize_y_symmetric(pose.R);
  return geometry::to_nocs(p_kpt, pose);
}

template <typename T>
Var<T> loss_nocs(Var<T> p_nocs, const Matrix<T>& p_kpt, const Pose& gt_pose, bool symmetric) {
  const Matrix<T> target =
      nocs_targets(p_kpt.template cast<double>(), gt_pose, symmetric).template cast<T>();
  return ad::smooth_l1_mean(p_nocs, target, T(1));
}

template <typename T>
Var<T> loss_pose(Var<T> rotation, Var<T> translation, Var<T> size, const Pose& gt,
                 bool symmetric, PoseNorm norm) {
  auto& tape = *rotation.tape;
  const geometry::Mat3 r_gt = symmetric ? geometry::canonicalize_y_symmetric(gt.R) : gt.R;
  const Var<T> dr = ad::sub(rotation, tape.constant(r_gt.cast<T>()));
  const Var<T> dt = ad::sub(translation, tape.constant(gt.t.transpose().cast<T>()));
  const Var<T> ds = ad::sub(size, tape.constant(gt.s.transpose().cast<T>()));
  if (norm == PoseNorm::ElementwiseL1) {
    return ad::add(ad::sum_all(ad::abs(dr)), ad::add(ad::sum_all(ad::abs(dt)), ad::sum_all(ad::abs(ds))));
  }
  return ad::add(ad::frobenius_norm(dr), ad::add(ad::row_norms(dt), ad::row_norms(ds)));
}

template <typename T>
Var<T> loss_total(Var<T> ocd, Var<T> div, Var<T> nocs, Var<T> pose, const LossWeights& w) {
  return ad::add(ad::add(ad::scale(ocd, static_cast<T>(w.ocd)), ad::scale(div, static_cast<T>(w.div))),
                 ad::add(ad::scale(nocs, static_cast<T>(w.nocs)), ad::scale(pose, static_cast<T>(w.pose))));
}

#define AGPOSE_INSTANTIATE(T)                                                                   \
  template Var<T> loss_div<T>(Var<T>, T);                                                      \
  template Var<T> loss_chamfer<T>(Var<T>, const Matrix<T>&);                                   \
  template Var<T> loss_nocs<T>(Var<T>, const Matrix<T>&, const Pose&, bool);                   \
  template Var<T> loss_pose<T>(Var<T>, Var<T>, Var<T>, const Pose&, bool, PoseNorm);           \
  template Var<T> loss_total<T>(Var<T>, Var<T>, Var<T>, Var<T>, const LossWeights&);

AGPOSE_INSTANTIATE(float)
AGPOSE_INSTANTIATE(double)
#undef AGPOSE_INSTANTIATE

}  // namespace agpose::loss
