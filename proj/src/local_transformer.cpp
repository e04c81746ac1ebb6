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

#include "gstran/local_transformer.hpp"

#include <cmath>

#include "gstran/errors.hpp"

namespace gstran {

std::string to_string(CombineOp op) {
  switch (op) {
    case CombineOp::hadamard: return "hadamard";
    case CombineOp::sum: return "sum";
    case CombineOp::average: return "average";
    case CombineOp::concat: return "concat";
  }
  return "hadamard";
}

CombineOp parse_combine_op(const std::string& s) {
  if (s == "hadamard") return CombineOp::hadamard;
  if (s == "sum") return CombineOp::sum;
  if (s == "average") return CombineOp::average;
  if (s == "concat") return CombineOp::concat;
  throw ArgumentError("unknown combine op '" + s + "' (hadamard, sum, average, concat)");
}

std::string to_string(LocalWeighting w) {
  switch (w) {
    case LocalWeighting::combined: return "combined";
    case LocalWeighting::distance_only: return "distance";
    case LocalWeighting::geometric_only: return "geometric";
  }
  return "combined";
}

LocalWeighting parse_local_weighting(const std::string& s) {
  if (s == "combined") return LocalWeighting::combined;
  if (s == "distance") return LocalWeighting::distance_only;
  if (s == "geometric") return LocalWeighting::geometric_only;
  throw ArgumentError("unknown local weighting '" + s + "' (combined, distance, geometric)");
}

double tangent_plane_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& q,
                              const Eigen::Vector3d& n, bool checked) {
  if (checked && std::abs(n.norm() - 1.0) > 1e-6) {
    throw ContractError("tangent_plane_distance: normal is not unit length");
  }
  return (p - q).dot(n);
}

double geometric_weight(double d_tan) { return std::exp(-std::abs(d_tan)); }

double distance_weight(double d, double eps) { return 1.0 / (d + eps); }

template <typename T>
LocalBlockParams<T> LocalBlockParams<T>::create(ParameterSet<T>& params, const std::string& name,
                                                std::size_t channels) {
  LocalBlockParams p;
  p.value = Linear<T>::create(params, name + ".value", channels, channels);
  p.output = Linear<T>::create(params, name + ".output", channels, channels);
  p.concat_reducer = Linear<T>::create(params, name + ".concat", 2, 1);
  return p;
}

template <typename T>
void LocalBlockParams<T>::init(std::mt19937_64& rng) {
  value.init_uniform(rng);
  output.init_uniform(rng);
  // Starts as the average of the two weights.
  auto w = concat_reducer.weight.mutable_values();
  w[0] = w[1] = T(0.5);
  concat_reducer.bias.mutable_values()[0] = T(0);
}

template <typename T>
LocalWeights<T> combine_weights(const diff::Array<T>& distance_w, const diff::Array<T>& geometric_w,
                                CombineOp op, const Linear<T>* concat_reducer,
                                LocalWeighting weighting) {
  if (distance_w.shape() != geometric_w.shape() || distance_w.rank() != 2) {
    throw DimensionError("combine_weights: " + shape_string(distance_w.shape()) + " vs " +
                         shape_string(geometric_w.shape()));
  }
  LocalWeights<T> out;
  out.distance_w = distance_w;
  out.geometric_w = geometric_w;
  diff::Array<T> raw;
  if (weighting == LocalWeighting::distance_only) {
    raw = distance_w;
  } else if (weighting == LocalWeighting::geometric_only) {
    raw = geometric_w;
  } else {
    switch (op) {
      case CombineOp::hadamard: raw = diff::mul(distance_w, geometric_w); break;
      case CombineOp::sum: raw = diff::add(distance_w, geometric_w); break;
      case CombineOp::average: raw = diff::scale(diff::add(distance_w, geometric_w), T(0.5)); break;
      case CombineOp::concat: {
        if (!concat_reducer) throw ArgumentError("combine_weights: concat needs a reducer");
        const std::size_t n = distance_w.dim(0), k = distance_w.dim(1);
        auto stacked = diff::concat_last<T>({diff::reshape(distance_w, {n * k, 1}),
                                             diff::reshape(geometric_w, {n * k, 1})});
        raw = diff::reshape(diff::relu((*concat_reducer)(stacked)), {n, k});
        break;
      }
    }
  }
  out.combined_w = diff::normalize_rows(raw, &out.fallback_rows);
  return out;
}

template <typename T>
LocalWeights<T> local_weights(const geom::Points& positions, const geom::Points& normals,
                              const geom::NeighborIndex& neighbors, const LocalBlockOptions& options,
                              const Linear<T>* concat_reducer) {
  const std::size_t n = neighbors.rows();
  const std::size_t k = neighbors.k;
  std::vector<T> dist(n * k), dtan(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = positions.row(static_cast<Eigen::Index>(i)).transpose();
    auto idx = neighbors.row_indices(i);
    auto d = neighbors.row_distances(i);
    for (std::size_t j = 0; j < k; ++j) {
      const auto q = static_cast<Eigen::Index>(idx[j]);
      dist[i * k + j] = static_cast<T>(d[j]);
      dtan[i * k + j] = static_cast<T>(tangent_plane_distance(
          p, positions.row(q).transpose(), normals.row(q).transpose(), false));
    }
  }
  auto distance_w = diff::reciprocal_eps(diff::Array<T>::from({n, k}, std::move(dist)),
                                         static_cast<T>(options.eps));
  auto geometric_w = diff::exp(diff::neg(diff::abs(diff::Array<T>::from({n, k}, std::move(dtan)))));
  return combine_weights(distance_w, geometric_w, options.combine, concat_reducer,
                         options.weighting);
}

template <typename T>
diff::Array<T> local_geo_forward(const geom::Points& positions, const geom::Points& normals,
                                 const diff::Array<T>& features, const LocalBlockParams<T>& params,
                                 const LocalBlockOptions& options, LocalDiagnostics* diagnostics,
                                 LocalWeights<T>* weights_out) {
  const auto n = static_cast<std::size_t>(positions.rows());
  if (normals.rows() != positions.rows()) {
    throw ContractError("local_geo_forward: normals missing; run estimate_normals first");
  }
  if (features.rank() != 2 || features.dim(0) != n) {
    throw DimensionError("local_geo_forward: features " + shape_string(features.shape()) +
                         " for " + std::to_string(n) + " points");
  }
  if (n == 0) throw ArgumentError("local_geo_forward: empty cloud");
  const std::size_t channels = features.dim(1);
  std::size_t k = options.k;
  if (k > n) {
    if (diagnostics) {
      diagnostics->warnings.push_back("k = " + std::to_string(k) + " clamped to " +
                                      std::to_string(n) + " points");
    }
    k = n;
  }
  if (k == 0) throw ArgumentError("local_geo_forward: k must be at least 1");

  const geom::NeighborIndex euclid = geom::knn(positions, positions, k);
  LocalWeights<T> weights = local_weights<T>(positions, normals, euclid, options, &params.concat_reducer);

  auto values = params.value(features);
  std::vector<std::size_t> value_rows;
  if (options.single_space) {
    value_rows = euclid.indices;
  } else {
    // Feature-space neighbors, recomputed on every call.
    value_rows = geom::knn<T>(features.values(), features.values(), channels, k).indices;
  }
  auto gathered = diff::reshape(diff::gather_rows<T>(values, value_rows), {n, k, channels});
  auto weighted = diff::mul(gathered, diff::reshape(weights.combined_w, {n, k, 1}));
  auto aggregated = diff::reduce(diff::Reduction::sum, weighted, 1);
  auto out = diff::add(features, params.output(aggregated));

  if (diagnostics) {
    diagnostics->k_used = k;
    diagnostics->fallback_rows = weights.fallback_rows;
  }
  if (weights_out) *weights_out = std::move(weights);
  return out;
}

#define GSTRAN_INSTANTIATE(T)                                                                    \
  template struct LocalBlockParams<T>;                                                           \
  template LocalWeights<T> combine_weights<T>(const diff::Array<T>&, const diff::Array<T>&,      \
                                              CombineOp, const Linear<T>*, LocalWeighting);      \
  template LocalWeights<T> local_weights<T>(const geom::Points&, const geom::Points&,            \
                                            const geom::NeighborIndex&, const LocalBlockOptions&, \
                                            const Linear<T>*);                                   \
  template diff::Array<T> local_geo_forward<T>(const geom::Points&, const geom::Points&,         \
                                               const diff::Array<T>&, const LocalBlockParams<T>&, \
                                               const LocalBlockOptions&, LocalDiagnostics*,       \
                                               LocalWeights<T>*);

GSTRAN_INSTANTIATE(float)
GSTRAN_INSTANTIATE(double)

#undef GSTRAN_INSTANTIATE

}  // namespace gstran
