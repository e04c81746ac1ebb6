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

// Local geometric transformer block.
//
// Each point aggregates value features from its k nearest neighbors. The
// aggregation weight of neighbor j for query i combines
//
//   distance weight   1 / (|p_i - q_j| + eps)
//   geometric weight  exp(-|(p_i - q_j) . n_j|)
//
// where the dot product is the query's offset from the neighbor's tangent
// plane. Neighbors lying on the query's surface keep high weight while
// neighbors across a crease are suppressed.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gstran/diff/array.hpp"
#include "gstran/geom/ops.hpp"
#include "gstran/parameters.hpp"

namespace gstran {

enum class CombineOp { hadamard, sum, average, concat };
enum class LocalWeighting { combined, distance_only, geometric_only };

std::string to_string(CombineOp op);
CombineOp parse_combine_op(const std::string& s);
std::string to_string(LocalWeighting w);
LocalWeighting parse_local_weighting(const std::string& s);

/// Signed offset (p - q) . n of `p` from the plane through `q` with normal
/// `n`. With `checked`, a normal whose norm is off by more than 1e-6 is a
/// ContractError.
double tangent_plane_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& q,
                              const Eigen::Vector3d& n, bool checked = true);

/// exp(-|d_tan|), in (0, 1].
double geometric_weight(double d_tan);

/// 1 / (d + eps).
double distance_weight(double d, double eps = diff::kDefaultReciprocalEps);

template <typename T>
struct LocalWeights {
  diff::Array<T> distance_w;   // N x k
  diff::Array<T> geometric_w;  // N x k
  diff::Array<T> combined_w;   // N x k, rows sum to 1
  std::vector<std::size_t> fallback_rows;
};

template <typename T>
struct LocalBlockParams {
  Linear<T> value;
  Linear<T> output;
  Linear<T> concat_reducer;  // 2 -> 1, used by CombineOp::concat only

  static LocalBlockParams create(ParameterSet<T>& params, const std::string& name,
                                 std::size_t channels);
  void init(std::mt19937_64& rng);
};

struct LocalBlockOptions {
  std::size_t k = 24;
  CombineOp combine = CombineOp::hadamard;
  LocalWeighting weighting = LocalWeighting::combined;
  /// Euclidean neighbors supply both the weights and the values. When false,
  /// values come from feature-space neighbors paired by rank.
  bool single_space = true;
  double eps = diff::kDefaultReciprocalEps;
};

/// Combines the two weight maps with `op` and normalizes each row to sum to 1.
/// All-zero rows become uniform and are reported in `fallback_rows`.
template <typename T>
LocalWeights<T> combine_weights(const diff::Array<T>& distance_w, const diff::Array<T>& geometric_w,
                                CombineOp op, const Linear<T>* concat_reducer = nullptr,
                                LocalWeighting weighting = LocalWeighting::combined);

/// Distance and geometric weights for a neighbor table over (positions,
/// normals), combined per `options`.
template <typename T>
LocalWeights<T> local_weights(const geom::Points& positions, const geom::Points& normals,
                              const geom::NeighborIndex& neighbors, const LocalBlockOptions& options,
                              const Linear<T>* concat_reducer);

struct LocalDiagnostics {
  std::size_t k_used = 0;
  std::vector<std::string> warnings;
  std::vector<std::size_t> fallback_rows;
};

/// out = features + output(sum_j w_ij * value(features)[nbr_ij]).
/// k is clamped to N with a warning. Missing normals are a ContractError.
template <typename T>
diff::Array<T> local_geo_forward(const geom::Points& positions, const geom::Points& normals,
                                 const diff::Array<T>& features, const LocalBlockParams<T>& params,
                                 const LocalBlockOptions& options,
                                 LocalDiagnostics* diagnostics = nullptr,
                                 LocalWeights<T>* weights_out = nullptr);

}  // namespace gstran
