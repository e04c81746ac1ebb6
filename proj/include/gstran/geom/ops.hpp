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

// Non-differentiable point-cloud geometry. Every function here is pure.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gstran/geom/point_cloud.hpp"

namespace gstran::geom {

/// Row-major k-nearest-neighbor table; rows ascend by distance.
struct NeighborIndex {
  std::size_t k = 0;
  std::vector<std::size_t> indices;
  std::vector<double> distances;

  std::size_t rows() const { return k == 0 ? 0 : indices.size() / k; }
  std::span<const std::size_t> row_indices(std::size_t i) const {
    return {indices.data() + i * k, k};
  }
  std::span<const double> row_distances(std::size_t i) const {
    return {distances.data() + i * k, k};
  }
};

/// Exact Euclidean kNN over `dim`-dimensional rows. Candidates are ordered by
/// (squared distance, index), so equal distances go to the lower index and a
/// query searching its own cloud finds itself. Throws ArgumentError if k > N.
template <typename T>
NeighborIndex knn(std::span<const T> source, std::span<const T> queries, std::size_t dim,
                  std::size_t k);

NeighborIndex knn(const Points& source, const Points& queries, std::size_t k);

/// Greedy farthest-point sampling; ties go to the lowest index.
std::vector<std::size_t> fps(const Points& positions, std::size_t m, std::size_t start = 0);

struct NormalEstimate {
  Points normals;
  /// Points whose neighborhood covariance has rank < 2; their normal is +z.
  std::vector<std::size_t> degenerate;
};

/// PCA normals: eigenvector of the smallest covariance eigenvalue over each
/// point's k Euclidean neighbors, oriented away from the cloud centroid.
NormalEstimate estimate_normals(const Points& positions, std::size_t k);

inline constexpr double kInterpolationEps = 1e-8;
inline constexpr double kCoincidenceRadius = 1e-9;

/// Per-query neighbor rows and normalized inverse-squared-distance weights
/// for 3-NN feature interpolation (fewer neighbors if the known set is
/// smaller).
struct InterpolationPlan {
  std::size_t width = 0;
  std::vector<std::size_t> indices;
  std::vector<double> weights;
};

InterpolationPlan interpolation_plan(const Points& known, const Points& queries);

/// Inverse-distance interpolation of `known.features` onto `queries`.
RowMatrix interpolate_features(const PointCloud& known, const Points& queries);

/// Partitions the xy footprint into block_size cells; every non-empty cell
/// becomes a cloud of exactly points_per_block points.
std::vector<PointCloud> block_split(const PointCloud& room, double block_size = 2.0,
                                    std::size_t points_per_block = 4096, std::uint64_t seed = 0);

}  // namespace gstran::geom
