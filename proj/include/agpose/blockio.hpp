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

// Binary array container shared by dataset records and checkpoints.
//
// A file is a sequence of blocks:
//   u32 name_length | name bytes | u8 dtype | u32 rank | u64 dims[rank] | data
// All integers and array payloads are little-endian; payloads are row-major.

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace agpose::io {

enum class DType : std::uint8_t { F32 = 0, F64 = 1, I32 = 2, U8 = 3, I64 = 4 };

std::size_t dtype_size(DType t);

struct ArrayBlock {
  std::string name;
  DType dtype = DType::F64;
  std::vector<std::uint64_t> dims;
  std::vector<std::byte> data;

  std::uint64_t element_count() const;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Ordered collection of named arrays.
class BlockSet {
 public:
  void add(ArrayBlock block);

  template <typename Derived>
  void add_matrix(const std::string& name, const Eigen::MatrixBase<Derived>& m);

  void add_vector(const std::string& name, const std::vector<std::uint8_t>& v);
  void add_vector(const std::string& name, const std::vector<std::int32_t>& v);

  bool has(const std::string& name) const;
  const ArrayBlock& get(const std::string& name) const;

  /// Reads a rank-1 or rank-2 floating array as a double matrix. Rank-1
  /// arrays become a single column. Throws CorruptDataset on type or shape
  /// mismatch.
  RowMatrix<double> matrix_f64(const std::string& name) const;
  RowMatrix<float> matrix_f32(const std::string& name) const;
  std::vector<std::uint8_t> vector_u8(const std::string& name) const;
  std::vector<std::int32_t> vector_i32(const std::string& name) const;

  const std::vector<ArrayBlock>& blocks() const { return blocks_; }

  std::string serialize() const;
  /// Throws CorruptDataset on truncated or malformed input.
  static BlockSet parse(std::string_view bytes);

 private:
  std::vector<ArrayBlock> blocks_;
  std::map<std::string, std::size_t> index_;
};

/// Ordered key = value text, one pair per line. Lines starting with '#'
/// and blank lines are ignored.
class KeyValueText {
 public:
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string serialize() const;
  /// Throws ConfigError on a line without '='.
  static KeyValueText parse(std::string_view text);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);
std::uint32_t crc32(std::string_view bytes);

// --- implementation of templates ---

namespace detail {
template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }
template <>
constexpr DType dtype_of<std::int32_t>() { return DType::I32; }
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::U8; }
template <>
constexpr DType dtype_of<std::int64_t>() { return DType::I64; }
}  // namespace detail

template <typename Derived>
void BlockSet::add_matrix(const std::string& name, const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const RowMatrix<Scalar> rm = m;
  ArrayBlock b;
  b.name = name;
  b.dtype = detail::dtype_of<Scalar>();
  b.dims = {static_cast<std::uint64_t>(rm.rows()), static_cast<std::uint64_t>(rm.cols())};
  b.data.resize(static_cast<std::size_t>(rm.size()) * sizeof(Scalar));
  if (rm.size() > 0) std::memcpy(b.data.data(), rm.data(), b.data.size());
  add(std::move(b));
}

}  // namespace agpose::io
