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

#include <vector>

#include "agpose/autodiff.hpp"
#include "agpose/geometry.hpp"

namespace agpose::loss {

using ad::Matrix;
using ad::Var;
using geometry::Points;
using geometry::Pose;

struct LossWeights {
  double ocd = 1.0;
  double div = 5.0;
  double nocs = 1.0;
  double pose = 0.3;
  double th1 = 0.01;  // meters
  double th2 = 0.1;   // NOCS units
};

void validate(const LossWeights& w);

// Which cloud the chamfer term is measured against.
enum class Chamfer { Object, Unfiltered };

// Norm used by the pose term. Norm follows the displayed formula (Frobenius
// and Euclidean); ElementwiseL1 sums absolute differences instead.
enum class PoseNorm { Norm, ElementwiseL1 };

template <typename T>
Var<T> loss_div(Var<T> p_kpt, T th1);

// Indices of the observed points whose NOCS coordinates under gt_pose lie
// within th2 of the instance model. Throws EmptyFilterResult if none survive.
std::vector<int> filter_outliers(const Points& p_obj, const Points& model_points,
                                 const Pose& gt_pose, double th2);

// One-sided chamfer: mean over keypoints of the distance to the nearest cloud
// point. loss_ocd and loss_ucd differ only in the cloud passed in.
template <typename T>
Var<T> loss_chamfer(Var<T> p_kpt, const Matrix<T>& cloud);

template <typename T>
Var<T> loss_ocd(Var<T> p_kpt, const Matrix<T>& filtered) {
  return loss_chamfer(p_kpt, filtered);
}

template <typename T>
Var<T> loss_ucd(Var<T> p_kpt, const Matrix<T>& p_obj) {
  return loss_chamfer(p_kpt, p_obj);
}

// Ground-truth NOCS coordinates of the current keypoints.
Points nocs_targets(const Points& p_kpt, const Pose& gt_pose, bool symmetric);

template <typename T>
Var<T> loss_nocs(Var<T> p_nocs, const Matrix<T>& p_kpt, const Pose& gt_pose, bool symmetric);

// rotation 3×3, translation 1×3, size 1×3.
template <typename T>
Var<T> loss_pose(Var<T> rotation, Var<T> translation, Var<T> size, const Pose& gt,
                 bool symmetric, PoseNorm norm = PoseNorm::Norm);

template <typename T>
struct LossTerms {
  Var<T> ocd;
  Var<T> div;
  Var<T> nocs;
  Var<T> pose;
  Var<T> total;
};

template <typename T>
Var<T> loss_total(Var<T> ocd, Var<T> div, Var<T> nocs, Var<T> pose, const LossWeights& w);

}  // namespace agpose::loss
