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

#include <stdexcept>
#include <string>

namespace agpose {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Point configuration is rank deficient (collinear points, parallel
/// rotation columns).
class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

/// The visible part of a model is too small to draw an observation from.
class InsufficientSurface : public Error {
 public:
  using Error::Error;
};

/// Ground-truth outlier filtering removed every point.
class EmptyFilterResult : public Error {
 public:
  using Error::Error;
};

class CorruptDataset : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class NanLoss : public Error {
 public:
  NanLoss(long step, const std::string& what)
      : Error("non-finite loss at step " + std::to_string(step) + ": " + what),
        step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// Invalid configuration value or unknown configuration key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace agpose
