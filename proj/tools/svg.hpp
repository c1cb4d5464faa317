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

#include <string>
#include <utility>
#include <vector>

namespace agpose::tools {

// Minimal SVG charts for histograms and curves.
std::string svg_bars(const std::string& title, const std::vector<double>& edges,
                     const std::vector<double>& values, const std::string& x_label,
                     const std::string& y_label);

std::string svg_labeled_bars(const std::string& title, const std::vector<std::string>& labels,
                             const std::vector<double>& values, const std::string& y_label);

std::string svg_lines(const std::string& title,
                      const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series,
                      const std::string& x_label, const std::string& y_label, bool log_y);

}  // namespace agpose::tools
