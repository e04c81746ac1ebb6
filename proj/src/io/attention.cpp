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
#include <cstdio>

#include "gstran/errors.hpp"
#include "gstran/io.hpp"

namespace gstran::io {

template <typename T>
std::vector<std::filesystem::path> dump_attention(const Model<T>& model, const geom::PointCloud& cloud,
                                                  std::size_t query,
                                                  const std::filesystem::path& out_dir) {
  if (query >= cloud.size()) {
    throw ArgumentError("dump_attention: query " + std::to_string(query) + " outside " +
                        std::to_string(cloud.size()) + " points");
  }
  ForwardOptions options;
  options.capture_attention = true;
  const auto result = model.forward(cloud, options);
  const auto& att = result.attention;

  std::vector<std::pair<std::string, const diff::Array<T>*>> maps;
  for (std::size_t h = 0; h < att.per_head.size(); ++h) {
    maps.emplace_back("head" + std::to_string(h), &att.per_head[h]);
  }
  maps.emplace_back("global_similarity", &att.global_similarity);
  maps.emplace_back("global_mask", &att.global_mask);
  maps.emplace_back("refined", &att.refined);

  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [name, map] : maps) {
    if (!map->defined()) continue;
    const std::size_t n = map->dim(1);
    if (n != cloud.size()) {
      throw ContractError("dump_attention: captured map has " + std::to_string(n) + " columns for " +
                          std::to_string(cloud.size()) + " points");
    }
    std::vector<double> row(n);
    for (std::size_t j = 0; j < n; ++j) row[j] = double(map->at(query, j));
    const double peak = *std::max_element(row.begin(), row.end());
    std::vector<double> shade(n);
    for (std::size_t j = 0; j < n; ++j) shade[j] = peak > 0.0 ? row[j] / peak : 0.0;

    const auto ply = out_dir / (name + ".ply");
    write_ply(cloud, ply, ColorBy::weight_scalar, {}, shade);
    const auto txt = out_dir / (name + ".txt");
    std::FILE* f = std::fopen(txt.string().c_str(), "w");
    if (!f) throw DataError("cannot write " + txt.string());
    for (double v : row) std::fprintf(f, "%.17g\n", v);
    if (std::fclose(f) != 0) throw DataError("failed writing " + txt.string());
    written.push_back(ply);
    written.push_back(txt);
  }
  return written;
}

template std::vector<std::filesystem::path> dump_attention<float>(const Model<float>&,
                                                                  const geom::PointCloud&, std::size_t,
                                                                  const std::filesystem::path&);
template std::vector<std::filesystem::path> dump_attention<double>(const Model<double>&,
                                                                   const geom::PointCloud&, std::size_t,
                                                                   const std::filesystem::path&);

}  // namespace gstran::io
