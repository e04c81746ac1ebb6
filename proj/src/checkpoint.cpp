// Copyright 2026 The GSTran Authors
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

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gstran/errors.hpp"
#include "gstran/network.hpp"

namespace gstran {

namespace {

constexpr std::size_t kMagicLength = sizeof(kCheckpointMagic) - 1;
constexpr std::uint64_t kMaxName = 1 << 16;
constexpr std::uint64_t kMaxRank = 8;

template <typename V>
void put(std::ostream& out, V v) {
  char bytes[sizeof(V)];
  std::memcpy(bytes, &v, sizeof(V));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(V));
  out.write(bytes, sizeof(V));
}

template <typename V>
V get(std::istream& in, const std::string& what) {
  char bytes[sizeof(V)];
  if (!in.read(bytes, sizeof(V))) throw DataError("checkpoint truncated while reading " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(V));
  V v;
  std::memcpy(&v, bytes, sizeof(V));
  return v;
}

std::string get_bytes(std::istream& in, std::uint64_t n, const std::string& what) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw DataError("checkpoint truncated while reading " + what);
  }
  return s;
}

struct Header {
  std::uint64_t width = 0;
  ModelConfig config;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[kMagicLength];
  if (!in.read(magic, kMagicLength) || std::memcmp(magic, kCheckpointMagic, kMagicLength) != 0) {
    throw DataError(path.string() + " is not a checkpoint (bad magic)");
  }
  Header h;
  h.width = get<std::uint64_t>(in, "value width");
  if (h.width != 4 && h.width != 8) {
    throw DataError("checkpoint value width " + std::to_string(h.width) + " is not 4 or 8");
  }
  const auto length = get<std::uint64_t>(in, "config length");
  if (length > (1u << 20)) throw DataError("checkpoint config block is implausibly large");
  std::istringstream text(get_bytes(in, length, "config"));
  try {
    h.config = ModelConfig::from_key_values(KeyValues::parse(text, path.string() + "[config]"));
  } catch (const ParseError& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  return h;
}

}  // namespace

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, kMagicLength);
  put<std::uint64_t>(out, sizeof(T));
  ModelConfig config = model.config();
  config.precision = sizeof(T) == 4 ? Precision::f32 : Precision::f64;
  const std::string text = config.to_key_values().format();
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto& entries = model.parameters().entries();
  put<std::uint64_t>(out, entries.size());
  for (const auto& [name, array] : entries) {
    put<std::uint64_t>(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, array.rank());
    for (std::size_t d : array.shape()) put<std::uint64_t>(out, d);
    for (T v : array.values()) put<T>(out, v);
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_header(in, path).config;
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const Header header = read_header(in, path);
  Model<T> model(header.config);

  ParameterSet<T> stored;
  const auto count = get<std::uint64_t>(in, "parameter count");
  for (std::uint64_t p = 0; p < count; ++p) {
    const auto name_length = get<std::uint64_t>(in, "name length");
    if (name_length > kMaxName) throw DataError("checkpoint parameter name too long");
    std::string name = get_bytes(in, name_length, "parameter name");
    const auto rank = get<std::uint64_t>(in, "rank of " + name);
    if (rank > kMaxRank) throw DataError("checkpoint parameter '" + name + "' has rank " + std::to_string(rank));
    diff::Shape shape;
    for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(get<std::uint64_t>(in, "shape of " + name));
    auto array = stored.create(name, shape);
    auto values = array.mutable_values();
    for (auto& v : values) {
      v = header.width == 4 ? static_cast<T>(get<float>(in, name)) : static_cast<T>(get<double>(in, name));
    }
  }
  model.load_values(stored);
  return model;
}

template void save_checkpoint<float>(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&);
template Model<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace gstran
