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

#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace agpose::tools {
namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 50;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

void header(std::ostringstream& os, const std::string& title, const std::string& x_label,
            const std::string& y_label) {
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << escape(title) << "</text>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n";
  os << "<text transform=\"translate(16," << kHeight / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(y_label) << "</text>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
     << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kHeight - kBottom << "\" stroke=\"black\"/>\n";
}

void ticks(std::ostringstream& os, double x0, double x1, double y0, double y1, bool log_y) {
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  for (int i = 0; i <= 5; ++i) {
    const double f = i / 5.0;
    const double xv = x0 + f * (x1 - x0);
    const double yv = log_y ? std::pow(10.0, y0 + f * (y1 - y0)) : y0 + f * (y1 - y0);
    os << "<text x=\"" << kLeft + f * pw << "\" y=\"" << kHeight - kBottom + 16
       << "\" text-anchor=\"middle\">" << std::setprecision(3) << std::defaultfloat << xv
       << "</text>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << kHeight - kBottom - f * ph + 4
       << "\" text-anchor=\"end\">" << std::setprecision(3) << std::defaultfloat << yv
       << "</text>\n";
    os << std::fixed << std::setprecision(2);
  }
}

}  // namespace

std::string svg_bars(const std::string& title, const std::vector<double>& edges,
                     const std::vector<double>& values, const std::string& x_label,
                     const std::string& y_label) {
  std::ostringstream os;
  header(os, title, x_label, y_label);
  if (values.empty() || edges.size() != values.size() + 1) {
    os << "</svg>\n";
    return os.str();
  }
  const double x0 = edges.front();
  const double x1 = edges.back();
  const double y1 = std::max(*std::max_element(values.begin(), values.end()), 1e-12);
  ticks(os, x0, x1, 0.0, y1, false);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double xa = kLeft + (edges[i] - x0) / (x1 - x0) * pw;
    const double xb = kLeft + (edges[i + 1] - x0) / (x1 - x0) * pw;
    const double h = values[i] / y1 * ph;
    os << "<rect x=\"" << xa << "\" y=\"" << kHeight - kBottom - h << "\" width=\""
       << std::max(0.0, xb - xa - 1) << "\" height=\"" << h << "\" fill=\"" << kColors[0]
       << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_labeled_bars(const std::string& title, const std::vector<std::string>& labels,
                             const std::vector<double>& values, const std::string& y_label) {
  std::ostringstream os;
  header(os, title, "", y_label);
  const double y1 = values.empty() ? 1.0 : std::max(*std::max_element(values.begin(), values.end()), 1e-12);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  for (int i = 0; i <= 5; ++i) {
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << kHeight - kBottom - i / 5.0 * ph + 4
       << "\" text-anchor=\"end\">" << y1 * i / 5.0 << "</text>\n";
  }
  const double slot = values.empty() ? pw : pw / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = values[i] / y1 * ph;
    const double x = kLeft + slot * static_cast<double>(i);
    os << "<rect x=\"" << x + slot * 0.15 << "\" y=\"" << kHeight - kBottom - h << "\" width=\""
       << slot * 0.7 << "\" height=\"" << h << "\" fill=\"" << kColors[i % std::size(kColors)]
       << "\"/>\n";
    os << "<text x=\"" << x + slot / 2 << "\" y=\"" << kHeight - kBottom + 16
       << "\" text-anchor=\"middle\">" << escape(i < labels.size() ? labels[i] : "") << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_lines(
    const std::string& title,
    const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series,
    const std::string& x_label, const std::string& y_label, bool log_y) {
  std::ostringstream os;
  header(os, title, x_label, y_label);
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  const auto ty = [log_y](double y) { return log_y ? std::log10(std::max(y, 1e-12)) : y; };
  for (const auto& [name, pts] : series) {
    for (const auto& [x, y] : pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, ty(y));
      y1 = std::max(y1, ty(y));
    }
  }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  if (!std::isfinite(x0)) {
    os << "</svg>\n";
    return os.str();
  }
  ticks(os, x0, x1, y0, y1, log_y);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  std::size_t c = 0;
  for (const auto& [name, pts] : series) {
    const char* color = kColors[c % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) {
      os << kLeft + (x - x0) / (x1 - x0) * pw << "," << kHeight - kBottom - (ty(y) - y0) / (y1 - y0) * ph
         << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << kWidth - kRight - 150 << "\" y=\"" << kTop + 16 * (c + 1) << "\" fill=\""
       << color << "\">" << escape(name) << "</text>\n";
    ++c;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace agpose::tools
