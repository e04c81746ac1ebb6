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

#include "gstran/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gstran/errors.hpp"

namespace gstran {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::parse(std::istream& in, const std::string& source) {
  KeyValues kv;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source + ":" + std::to_string(number) + ": expected key=value", number);
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ParseError(source + ":" + std::to_string(number) + ": empty key", number);
    }
    kv.items_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  return parse(in, path.string());
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = items_.find(key);
  return it == items_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const auto it = items_.find(key);
  if (it == items_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': '" + it->second + "' is not a number");
  }
}

std::size_t KeyValues::get_size(const std::string& key, std::size_t fallback) const {
  const auto it = items_.find(key);
  if (it == items_.end()) return fallback;
  std::size_t v = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("config key '" + key + "': '" + s + "' is not a non-negative integer");
  }
  return v;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const auto it = items_.find(key);
  if (it == items_.end()) return fallback;
  const auto& s = it->second;
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ParseError("config key '" + key + "': '" + s + "' is not a boolean");
}

std::vector<std::size_t> KeyValues::get_size_list(const std::string& key,
                                                  const std::vector<std::size_t>& fallback) const {
  const auto it = items_.find(key);
  if (it == items_.end()) return fallback;
  std::vector<std::size_t> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    KeyValues one;
    one.set(key, item);
    out.push_back(one.get_size(key, 0));
  }
  return out;
}

std::string KeyValues::format() const {
  std::string out;
  for (const auto& [k, v] : items_) out += k + "=" + v + "\n";
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace gstran
