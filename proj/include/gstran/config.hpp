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

// Flat `key=value` text: one pair per line, `#` starts a comment, blank
// lines ignored, surrounding whitespace trimmed.

#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

namespace gstran {

class KeyValues {
 public:
  static KeyValues parse(std::istream& in, const std::string& source = "<stream>");
  static KeyValues read(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return items_.count(key) > 0; }
  void set(const std::string& key, std::string value) { items_[key] = std::move(value); }
  const std::map<std::string, std::string>& items() const { return items_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list of non-negative integers.
  std::vector<std::size_t> get_size_list(const std::string& key,
                                         const std::vector<std::size_t>& fallback) const;

  std::string format() const;

 private:
  std::map<std::string, std::string> items_;
};

std::string join_sizes(const std::vector<std::size_t>& values);

}  // namespace gstran
