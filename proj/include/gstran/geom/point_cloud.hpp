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

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace gstran::geom {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One sample: positions plus optional normals, per-point features and labels.
/// Optional members are empty (zero rows / zero length) when absent.
struct PointCloud {
  Points positions;
  Points normals;
  RowMatrix features;
  std::vector<int> labels;
  std::optional<int> category;  // object category, part mode only

  std::size_t size() const { return static_cast<std::size_t>(positions.rows()); }
  bool has_normals() const { return normals.rows() > 0; }
  bool has_features() const { return features.rows() > 0; }
  bool has_labels() const { return !labels.empty(); }

  /// Throws ContractError when the invariants are broken: shared leading
  /// extent, unit normals (1 +/- 1e-6), labels in [0, class_count).
  void validate(std::optional<int> class_count = std::nullopt) const;

  /// Points selected by `indices`, all present attributes carried along.
  PointCloud subset(const std::vector<std::size_t>& indices) const;
};

}  // namespace gstran::geom
