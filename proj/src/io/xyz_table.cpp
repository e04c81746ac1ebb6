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

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gstran/errors.hpp"
#include "gstran/io.hpp"

namespace gstran::io {

namespace {

bool parse_number(const std::string& token, double& out) {
  if (token.empty()) return false;
  char* end = nullptr;
  out = std::strtod(token.c_str(), &end);
  return end == token.c_str() + token.size() && std::isfinite(out);
}

}  // namespace

geom::PointCloud read_xyz_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string where = path.string();
  std::vector<std::vector<double>> rows;
  std::size_t width = 0, number = 0;
  std::string line, token;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream ss(line);
    std::vector<double> row;
    while (ss >> token) {
      double v = 0.0;
      if (!parse_number(token, v)) {
        throw ParseError(where + ":" + std::to_string(number) + ": '" + token + "' is not a number",
                         number);
      }
      row.push_back(v);
    }
    if (row.empty()) continue;
    if (row.size() != 3 && row.size() != 4 && row.size() != 6 && row.size() != 7) {
      throw ParseError(where + ":" + std::to_string(number) + ": row has " +
                           std::to_string(row.size()) + " columns (expected 3, 4, 6 or 7)",
                       number);
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw ParseError(where + ":" + std::to_string(number) + ": row has " +
                           std::to_string(row.size()) + " columns, previous rows have " +
                           std::to_string(width),
                       number);
    }
    if (width == 4 || width == 7) {
      const double label = row.back();
      if (label != std::floor(label) || label < 0 || label > 1e9) {
        throw ParseError(where + ":" + std::to_string(number) + ": label " + std::to_string(label) +
                             " is not a non-negative integer",
                         number);
      }
    }
    rows.push_back(std::move(row));
  }

  geom::PointCloud cloud;
  const auto n = static_cast<Eigen::Index>(rows.size());
  cloud.positions.resize(n, 3);
  const bool normals = width >= 6, labels = width == 4 || width == 7;
  if (normals) cloud.normals.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (int d = 0; d < 3; ++d) cloud.positions(i, d) = r[static_cast<std::size_t>(d)];
    if (normals) {
      for (int d = 0; d < 3; ++d) cloud.normals(i, d) = r[static_cast<std::size_t>(3 + d)];
    }
    if (labels) cloud.labels.push_back(static_cast<int>(r.back()));
  }
  return cloud;
}

void write_xyz_table(const geom::PointCloud& cloud, const std::filesystem::path& path) {
  cloud.validate();
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::fprintf(f, "%.17g %.17g %.17g", cloud.positions(r, 0), cloud.positions(r, 1),
                 cloud.positions(r, 2));
    if (cloud.has_normals()) {
      std::fprintf(f, " %.17g %.17g %.17g", cloud.normals(r, 0), cloud.normals(r, 1),
                   cloud.normals(r, 2));
    }
    if (cloud.has_labels()) std::fprintf(f, " %d", cloud.labels[i]);
    std::fputc('\n', f);
  }
  if (std::fclose(f) != 0) throw DataError("failed writing " + path.string());
}

}  // namespace gstran::io
