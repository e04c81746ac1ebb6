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

#include "gstran/geom/point_cloud.hpp"

#include <cmath>
#include <string>

#include "gstran/errors.hpp"

namespace gstran::geom {

void PointCloud::validate(std::optional<int> class_count) const {
  const auto n = positions.rows();
  if (has_normals() && normals.rows() != n) {
    throw ContractError("point cloud: " + std::to_string(normals.rows()) + " normals for " +
                        std::to_string(n) + " points");
  }
  if (has_features() && features.rows() != n) {
    throw ContractError("point cloud: feature rows do not match point count");
  }
  if (has_labels() && static_cast<Eigen::Index>(labels.size()) != n) {
    throw ContractError("point cloud: label count does not match point count");
  }
  for (Eigen::Index i = 0; i < normals.rows(); ++i) {
    const double len = normals.row(i).norm();
    if (std::abs(len - 1.0) > 1e-6) {
      throw ContractError("point cloud: normal " + std::to_string(i) + " has norm " +
                          std::to_string(len));
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || (class_count && labels[i] >= *class_count)) {
      throw ContractError("point cloud: label " + std::to_string(labels[i]) + " at point " +
                          std::to_string(i) + " out of range");
    }
  }
}

PointCloud PointCloud::subset(const std::vector<std::size_t>& indices) const {
  PointCloud out;
  const auto m = static_cast<Eigen::Index>(indices.size());
  out.positions.resize(m, 3);
  if (has_normals()) out.normals.resize(m, 3);
  if (has_features()) out.features.resize(m, features.cols());
  out.category = category;
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto src = static_cast<Eigen::Index>(indices[r]);
    out.positions.row(r) = positions.row(src);
    if (has_normals()) out.normals.row(r) = normals.row(src);
    if (has_features()) out.features.row(r) = features.row(src);
    if (has_labels()) out.labels.push_back(labels[indices[r]]);
  }
  return out;
}

}  // namespace gstran::geom
