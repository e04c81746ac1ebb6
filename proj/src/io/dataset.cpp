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

#include <fstream>
#include <sstream>

#include "gstran/config.hpp"
#include "gstran/errors.hpp"
#include "gstran/io.hpp"

namespace gstran::io {

namespace {

std::vector<std::filesystem::path> read_list(const std::filesystem::path& root, const std::string& name) {
  std::vector<std::filesystem::path> files;
  if (name.empty()) return files;
  std::ifstream in(root / name);
  if (!in) throw DataError("cannot open split list " + (root / name).string());
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string entry;
    if (!(ss >> entry)) continue;
    if (!std::filesystem::exists(root / entry)) {
      throw DataError("listed file " + (root / entry).string() + " does not exist");
    }
    files.emplace_back(entry);
  }
  return files;
}

std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

CategoryParts parse_categories(const std::string& text) {
  CategoryParts parts;
  std::stringstream ss(text);
  std::string group;
  while (std::getline(ss, group, ';')) {
    if (group.empty()) continue;
    const auto colon = group.find(':');
    if (colon == std::string::npos) throw DataError("manifest categories: expected 'cat:parts' in '" + group + "'");
    KeyValues kv;
    kv.set("c", group.substr(0, colon));
    kv.set("p", group.substr(colon + 1));
    std::vector<int> ids;
    for (std::size_t p : kv.get_size_list("p", {})) ids.push_back(static_cast<int>(p));
    parts[static_cast<int>(kv.get_size("c", 0))] = std::move(ids);
  }
  return parts;
}

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& root) {
  const auto file = root / "manifest.txt";
  if (!std::filesystem::exists(file)) throw DataError("no manifest.txt in " + root.string());
  KeyValues kv;
  try {
    kv = KeyValues::read(file);
  } catch (const ParseError& e) {
    throw DataError(e.what());
  }
  DatasetManifest m;
  m.root = root;
  m.format = kv.get_string("format", "xyz_table");
  if (m.format != "xyz_table") throw DataError("unsupported dataset format '" + m.format + "'");
  const std::string mode = kv.get_string("mode", "semantic");
  if (mode == "semantic") {
    m.mode = DatasetMode::semantic;
  } else if (mode == "part") {
    m.mode = DatasetMode::part;
  } else {
    throw DataError("manifest mode must be semantic or part, got '" + mode + "'");
  }
  try {
    m.class_names = split_names(kv.get_string("classes", ""));
    m.class_count = kv.get_size("class_count", m.class_names.size());
    if (m.mode == DatasetMode::part) m.category_parts = parse_categories(kv.get_string("categories", ""));
  } catch (const ParseError& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  if (m.class_count == 0) throw DataError("manifest declares no classes");
  if (m.mode == DatasetMode::part && m.category_parts.empty()) {
    throw DataError("part-mode manifest without categories");
  }
  m.train = read_list(root, kv.get_string("train_list", ""));
  m.val = read_list(root, kv.get_string("val_list", ""));
  m.test = read_list(root, kv.get_string("test_list", ""));
  return m;
}

std::vector<geom::PointCloud> load_split(const DatasetManifest& manifest,
                                         const std::vector<std::filesystem::path>& files) {
  std::vector<geom::PointCloud> clouds;
  clouds.reserve(files.size());
  for (const auto& f : files) {
    geom::PointCloud cloud;
    try {
      cloud = read_xyz_table(manifest.root / f);
      cloud.validate(static_cast<int>(manifest.class_count));
    } catch (const ParseError& e) {
      throw DataError(e.what());
    } catch (const ContractError& e) {
      throw DataError((manifest.root / f).string() + ": " + e.what());
    }
    if (manifest.mode == DatasetMode::part) {
      const std::string stem = f.filename().string();
      const auto underscore = stem.find('_');
      try {
        if (underscore == std::string::npos) throw std::invalid_argument(stem);
        cloud.category = std::stoi(stem.substr(0, underscore));
      } catch (const std::exception&) {
        throw DataError("part-mode file name '" + stem + "' lacks a '<category>_' prefix");
      }
      if (!manifest.category_parts.count(*cloud.category)) {
        throw DataError("file '" + stem + "' names unknown category " + std::to_string(*cloud.category));
      }
    }
    clouds.push_back(std::move(cloud));
  }
  return clouds;
}

}  // namespace gstran::io
