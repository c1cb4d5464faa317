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

#include "agpose/synthdata.hpp"

namespace agpose::testing {

// One rendered view of a default-category instance.
inline synth::ObservedInstance observed(int category, std::uint64_t seed, int num_points,
                                        double outlier_frac = 0.1) {
  const auto cats = synth::default_categories();
  const auto& spec = cats[static_cast<std::size_t>(category)];
  const auto model = synth::sample_instance(spec, seed, 1024);
  const auto pose = synth::sample_pose(model, 0.25, seed + 7);
  synth::RenderOptions opt;
  opt.num_points = num_points;
  opt.outlier_frac = outlier_frac;
  auto obs = synth::render_observation(model, pose, opt, seed + 11);
  obs.category = category;
  obs.symmetric = spec.symmetric_y;
  return obs;
}

}  // namespace agpose::testing
