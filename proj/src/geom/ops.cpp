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

#include "gstran/geom/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>

#include "gstran/errors.hpp"

namespace gstran::geom {

template <typename T>
NeighborIndex knn(std::span<const T> source, std::span<const T> queries, std::size_t dim,
                  std::size_t k) {
  if (dim == 0) throw ArgumentError("knn: dimension must be at least 1");
  if (source.size() % dim != 0 || queries.size() % dim != 0) {
    throw DimensionError("knn: buffer length is not a multiple of the dimension");
  }
  const std::size_t n = source.size() / dim;
  const std::size_t m = queries.size() / dim;
  if (k > n) {
    throw ArgumentError("knn: k = " + std::to_string(k) + " exceeds the " + std::to_string(n) +
                        " source points");
  }
  NeighborIndex out;
  out.k = k;
  out.indices.resize(m * k);
  out.distances.resize(m * k);
  if (k == 0) return out;

  std::vector<double> d2(n);
  std::vector<std::size_t> order(n);
  for (std::size_t q = 0; q < m; ++q) {
    const T* qp = queries.data() + q * dim;
    for (std::size_t i = 0; i < n; ++i) {
      const T* sp = source.data() + i * dim;
      double acc = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = static_cast<double>(qp[d]) - static_cast<double>(sp[d]);
        acc += diff * diff;
      }
      d2[i] = acc;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto closer = [&](std::size_t a, std::size_t b) {
      return d2[a] < d2[b] || (d2[a] == d2[b] && a < b);
    };
    if (k < n) std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), closer);
    std::sort(order.begin(), order.begin() + k, closer);
    for (std::size_t j = 0; j < k; ++j) {
      out.indices[q * k + j] = order[j];
      out.distances[q * k + j] = std::sqrt(d2[order[j]]);
    }
  }
  return out;
}

template NeighborIndex knn<float>(std::span<const float>, std::span<const float>, std::size_t,
                                  std::size_t);
template NeighborIndex knn<double>(std::span<const double>, std::span<const double>, std::size_t,
                                   std::size_t);

NeighborIndex knn(const Points& source, const Points& queries, std::size_t k) {
  return knn<double>(std::span<const double>(source.data(), static_cast<std::size_t>(source.size())),
                     std::span<const double>(queries.data(), static_cast<std::size_t>(queries.size())),
                     3, k);
}

std::vector<std::size_t> fps(const Points& positions, std::size_t m, std::size_t start) {
  const auto n = static_cast<std::size_t>(positions.rows());
  if (m < 1 || m > n) {
    throw ArgumentError("fps: m = " + std::to_string(m) + " must lie in [1, " + std::to_string(n) +
                        "]");
  }
  if (start >= n) throw ArgumentError("fps: start index " + std::to_string(start) + " out of range");

  std::vector<std::size_t> selected;
  selected.reserve(m);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::size_t current = start;
  for (;;) {
    selected.push_back(current);
    taken[current] = 1;
    if (selected.size() == m) break;
    const Eigen::RowVector3d c = positions.row(static_cast<Eigen::Index>(current));
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (positions.row(static_cast<Eigen::Index>(i)) - c).squaredNorm();
      if (d < min_d2[i]) min_d2[i] = d;
      if (!taken[i] && min_d2[i] > best_d) {
        best_d = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return selected;
}

NormalEstimate estimate_normals(const Points& positions, std::size_t k) {
  if (k < 3) throw ArgumentError("estimate_normals: k must be at least 3, got " + std::to_string(k));
  const auto n = static_cast<std::size_t>(positions.rows());
  if (n < k) {
    throw ArgumentError("estimate_normals: " + std::to_string(n) + " points cannot supply k = " +
                        std::to_string(k) + " neighbors");
  }
  const NeighborIndex nbrs = knn(positions, positions, k);
  const Eigen::RowVector3d centroid = positions.colwise().mean();

  NormalEstimate out;
  out.normals.resize(positions.rows(), 3);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (std::size_t j : nbrs.row_indices(i)) mean += positions.row(static_cast<Eigen::Index>(j));
    mean /= static_cast<double>(k);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t j : nbrs.row_indices(i)) {
      const Eigen::Vector3d d = (positions.row(static_cast<Eigen::Index>(j)) - mean).transpose();
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(k);
    solver.compute(cov);
    const Eigen::Vector3d evals = solver.eigenvalues();  // ascending
    const bool rank_deficient = !(evals(2) > 1e-300) || evals(1) <= 1e-10 * evals(2);
    const auto row = static_cast<Eigen::Index>(i);
    if (rank_deficient) {
      out.normals.row(row) = Eigen::RowVector3d(0.0, 0.0, 1.0);
      out.degenerate.push_back(i);
      continue;
    }
    Eigen::RowVector3d normal = solver.eigenvectors().col(0).transpose().normalized();
    if (normal.dot(positions.row(row) - centroid) < -1e-12) normal = -normal;
    out.normals.row(row) = normal;
  }
  return out;
}

InterpolationPlan interpolation_plan(const Points& known, const Points& queries) {
  if (known.rows() == 0) throw ArgumentError("interpolation: known cloud is empty");
  InterpolationPlan plan;
  plan.width = std::min<std::size_t>(3, static_cast<std::size_t>(known.rows()));
  const NeighborIndex nbrs = knn(known, queries, plan.width);
  plan.indices = nbrs.indices;
  plan.weights.resize(nbrs.distances.size());
  for (std::size_t q = 0; q < nbrs.rows(); ++q) {
    auto d = nbrs.row_distances(q);
    double* w = plan.weights.data() + q * plan.width;
    if (d[0] < kCoincidenceRadius) {
      std::fill_n(w, plan.width, 0.0);
      w[0] = 1.0;
      continue;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < plan.width; ++j) {
      w[j] = 1.0 / (d[j] * d[j] + kInterpolationEps);
      total += w[j];
    }
    for (std::size_t j = 0; j < plan.width; ++j) w[j] /= total;
  }
  return plan;
}

RowMatrix interpolate_features(const PointCloud& known, const Points& queries) {
  if (known.size() == 0) throw ArgumentError("interpolate_features: known cloud is empty");
  if (!known.has_features()) throw ArgumentError("interpolate_features: known cloud has no features");
  const InterpolationPlan plan = interpolation_plan(known.positions, queries);
  RowMatrix out = RowMatrix::Zero(queries.rows(), known.features.cols());
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    for (std::size_t j = 0; j < plan.width; ++j) {
      const std::size_t at = static_cast<std::size_t>(q) * plan.width + j;
      const double w = plan.weights[at];
      if (w == 0.0) continue;
      out.row(q) += w * known.features.row(static_cast<Eigen::Index>(plan.indices[at]));
    }
  }
  return out;
}

std::vector<PointCloud> block_split(const PointCloud& room, double block_size,
                                    std::size_t points_per_block, std::uint64_t seed) {
  if (room.size() == 0) throw ArgumentError("block_split: room is empty");
  if (!(block_size > 0.0) || points_per_block == 0) {
    throw ArgumentError("block_split: block size and point budget must be positive");
  }
  const Eigen::RowVector3d lo = room.positions.colwise().minCoeff();
  const Eigen::RowVector3d hi = room.positions.colwise().maxCoeff();
  auto cells_along = [&](int axis) {
    const double extent = hi(axis) - lo(axis);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(extent / block_size)));
  };
  const std::size_t nx = cells_along(0);
  const std::size_t ny = cells_along(1);
  auto cell_of = [&](double v, int axis, std::size_t cells) {
    const auto c = static_cast<std::size_t>(std::max(0.0, std::floor((v - lo(axis)) / block_size)));
    return std::min(c, cells - 1);
  };

  std::map<std::size_t, std::vector<std::size_t>> cells;
  for (Eigen::Index i = 0; i < room.positions.rows(); ++i) {
    const std::size_t ix = cell_of(room.positions(i, 0), 0, nx);
    const std::size_t iy = cell_of(room.positions(i, 1), 1, ny);
    cells[ix * ny + iy].push_back(static_cast<std::size_t>(i));
  }

  std::mt19937_64 rng(seed);
  std::vector<PointCloud> blocks;
  for (auto& [cell, members] : cells) {
    std::vector<std::size_t> pick;
    pick.reserve(points_per_block);
    if (members.size() >= points_per_block) {
      // Partial Fisher-Yates: without replacement.
      for (std::size_t j = 0; j < points_per_block; ++j) {
        std::uniform_int_distribution<std::size_t> u(j, members.size() - 1);
        std::swap(members[j], members[u(rng)]);
        pick.push_back(members[j]);
      }
    } else {
      // Every original once, the remainder drawn with replacement.
      pick = members;
      std::uniform_int_distribution<std::size_t> u(0, members.size() - 1);
      while (pick.size() < points_per_block) pick.push_back(members[u(rng)]);
    }
    blocks.push_back(room.subset(pick));
  }
  return blocks;
}

}  // namespace gstran::geom
