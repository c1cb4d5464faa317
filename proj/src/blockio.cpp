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

#include "agpose/blockio.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <sstream>

#include "agpose/errors.hpp"

namespace agpose::io {

static_assert(std::endian::native == std::endian::little,
              "block files are written with the host byte order");

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::F32:
    case DType::I32:
      return 4;
    case DType::F64:
    case DType::I64:
      return 8;
    case DType::U8:
      return 1;
  }
  throw CorruptDataset("unknown dtype code " + std::to_string(static_cast<int>(t)));
}

std::uint64_t ArrayBlock::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void BlockSet::add(ArrayBlock block) {
  if (index_.count(block.name)) {
    blocks_[index_[block.name]] = std::move(block);
    return;
  }
  index_[block.name] = blocks_.size();
  blocks_.push_back(std::move(block));
}

void BlockSet::add_vector(const std::string& name, const std::vector<std::uint8_t>& v) {
  ArrayBlock b{name, DType::U8, {v.size()}, {}};
  b.data.resize(v.size());
  if (!v.empty()) std::memcpy(b.data.data(), v.data(), v.size());
  add(std::move(b));
}

void BlockSet::add_vector(const std::string& name, const std::vector<std::int32_t>& v) {
  ArrayBlock b{name, DType::I32, {v.size()}, {}};
  b.data.resize(v.size() * 4);
  if (!v.empty()) std::memcpy(b.data.data(), v.data(), b.data.size());
  add(std::move(b));
}

bool BlockSet::has(const std::string& name) const { return index_.count(name) > 0; }

const ArrayBlock& BlockSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw CorruptDataset("missing array '" + name + "'");
  return blocks_[it->second];
}

namespace {

template <typename T>
RowMatrix<T> to_matrix(const ArrayBlock& b, DType expected) {
  if (b.dtype != expected) throw CorruptDataset("array '" + b.name + "' has unexpected dtype");
  if (b.dims.empty() || b.dims.size() > 2) {
    throw CorruptDataset("array '" + b.name + "' has unsupported rank");
  }
  const auto rows = static_cast<Eigen::Index>(b.dims[0]);
  const auto cols = static_cast<Eigen::Index>(b.dims.size() == 2 ? b.dims[1] : 1);
  RowMatrix<T> m(rows, cols);
  if (m.size() > 0) std::memcpy(m.data(), b.data.data(), b.data.size());
  return m;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T take() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take_bytes(std::size_t n) {
    need(n);
    auto v = bytes_.substr(pos_, n);
    pos_ += n;
    return v;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptDataset("truncated block data");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

RowMatrix<double> BlockSet::matrix_f64(const std::string& name) const {
  const auto& b = get(name);
  if (b.dtype == DType::F32) return to_matrix<float>(b, DType::F32).cast<double>();
  return to_matrix<double>(b, DType::F64);
}

RowMatrix<float> BlockSet::matrix_f32(const std::string& name) const {
  const auto& b = get(name);
  if (b.dtype == DType::F64) return to_matrix<double>(b, DType::F64).cast<float>();
  return to_matrix<float>(b, DType::F32);
}

std::vector<std::uint8_t> BlockSet::vector_u8(const std::string& name) const {
  const auto& b = get(name);
  if (b.dtype != DType::U8) throw CorruptDataset("array '" + name + "' is not u8");
  std::vector<std::uint8_t> v(b.data.size());
  if (!v.empty()) std::memcpy(v.data(), b.data.data(), v.size());
  return v;
}

std::vector<std::int32_t> BlockSet::vector_i32(const std::string& name) const {
  const auto& b = get(name);
  if (b.dtype != DType::I32) throw CorruptDataset("array '" + name + "' is not i32");
  std::vector<std::int32_t> v(b.data.size() / 4);
  if (!v.empty()) std::memcpy(v.data(), b.data.data(), b.data.size());
  return v;
}

std::string BlockSet::serialize() const {
  std::string out;
  for (const auto& b : blocks_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out.append(b.name);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(b.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.dims.size()));
    for (auto d : b.dims) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(b.data.data()), b.data.size());
  }
  return out;
}

BlockSet BlockSet::parse(std::string_view bytes) {
  BlockSet set;
  Reader r(bytes);
  while (!r.done()) {
    ArrayBlock b;
    const auto name_len = r.take<std::uint32_t>();
    b.name = std::string(r.take_bytes(name_len));
    b.dtype = static_cast<DType>(r.take<std::uint8_t>());
    const auto rank = r.take<std::uint32_t>();
    if (rank > 8) throw CorruptDataset("implausible rank in block '" + b.name + "'");
    for (std::uint32_t i = 0; i < rank; ++i) b.dims.push_back(r.take<std::uint64_t>());
    const std::uint64_t nbytes = b.element_count() * dtype_size(b.dtype);
    if (nbytes > bytes.size()) throw CorruptDataset("block '" + b.name + "' exceeds file size");
    const auto payload = r.take_bytes(static_cast<std::size_t>(nbytes));
    b.data.resize(payload.size());
    if (!payload.empty()) std::memcpy(b.data.data(), payload.data(), payload.size());
    set.add(std::move(b));
  }
  return set;
}

void KeyValueText::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

bool KeyValueText::has(const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.first == key) return true;
  }
  return false;
}

const std::string& KeyValueText::get(const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.first == key) return e.second;
  }
  throw ConfigError("missing key '" + key + "'");
}

std::string KeyValueText::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

namespace {
std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}
}  // namespace

KeyValueText KeyValueText::parse(std::string_view text) {
  KeyValueText kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    kv.set(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
  }
  return kv;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

std::uint32_t crc32(std::string_view bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const auto n = std::min(kChunk, bytes.size() - off);
    c = ::crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(c);
}

}  // namespace agpose::io
