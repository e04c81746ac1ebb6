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

#include "gstran/global_transformer.hpp"

#include <cmath>

#include "gstran/errors.hpp"

namespace gstran {

std::string to_string(GlobalMode mode) {
  switch (mode) {
    case GlobalMode::none: return "none";
    case GlobalMode::similarity: return "similarity";
    case GlobalMode::mask: return "mask";
    case GlobalMode::refined: return "refined";
  }
  return "refined";
}

GlobalMode parse_global_mode(const std::string& s) {
  if (s == "none") return GlobalMode::none;
  if (s == "similarity") return GlobalMode::similarity;
  if (s == "mask") return GlobalMode::mask;
  if (s == "refined") return GlobalMode::refined;
  throw ArgumentError("unknown global mode '" + s + "' (none, similarity, mask, refined)");
}

template <typename T>
GlobalBlockParams<T> GlobalBlockParams<T>::create(ParameterSet<T>& params, const std::string& name,
                                                  std::size_t channels, std::size_t heads) {
  if (heads == 0 || channels % heads != 0) {
    throw ArgumentError("global block '" + name + "': " + std::to_string(heads) +
                        " heads do not divide " + std::to_string(channels) + " channels");
  }
  GlobalBlockParams p;
  p.query = Linear<T>::create(params, name + ".query", channels, channels);
  p.key = Linear<T>::create(params, name + ".key", channels, channels);
  p.value = Linear<T>::create(params, name + ".value", channels, channels);
  p.output = Linear<T>::create(params, name + ".output", channels, channels);
  p.heads = heads;
  return p;
}

template <typename T>
void GlobalBlockParams<T>::init(std::mt19937_64& rng) {
  query.init_uniform(rng);
  key.init_uniform(rng);
  value.init_uniform(rng);
  output.init_uniform(rng);
}

namespace {

template <typename T>
diff::Array<T> scaled_attention(const diff::Array<T>& q, const diff::Array<T>& k, std::size_t width) {
  auto logits = diff::matmul(q, diff::transpose(k));
  return diff::softmax_rows(diff::scale(logits, static_cast<T>(1.0 / std::sqrt(double(width)))));
}

}  // namespace

template <typename T>
diff::Array<T> similarity_from_projections(const diff::Array<T>& q, const diff::Array<T>& k) {
  if (q.rank() != 2 || q.shape() != k.shape()) {
    throw DimensionError("similarity: Q " + shape_string(q.shape()) + " vs K " +
                         shape_string(k.shape()));
  }
  return scaled_attention(q, k, q.dim(1));
}

template <typename T>
std::vector<diff::Array<T>> head_attentions_from_projections(const diff::Array<T>& q,
                                                             const diff::Array<T>& k,
                                                             std::size_t heads) {
  if (q.rank() != 2 || q.shape() != k.shape()) {
    throw DimensionError("multi-head attention: Q " + shape_string(q.shape()) + " vs K " +
                         shape_string(k.shape()));
  }
  const std::size_t c = q.dim(1);
  if (heads == 0 || c % heads != 0) {
    throw ArgumentError("multi-head attention: " + std::to_string(heads) + " heads do not divide " +
                        std::to_string(c) + " channels");
  }
  const std::size_t width = c / heads;
  std::vector<diff::Array<T>> maps;
  maps.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    maps.push_back(scaled_attention(diff::slice_cols(q, h * width, (h + 1) * width),
                                    diff::slice_cols(k, h * width, (h + 1) * width), width));
  }
  return maps;
}

template <typename T>
diff::Array<T> global_similarity(const diff::Array<T>& features, const GlobalBlockParams<T>& params) {
  return similarity_from_projections(params.query(features), params.key(features));
}

template <typename T>
std::vector<diff::Array<T>> multi_head_attentions(const diff::Array<T>& features,
                                                  const GlobalBlockParams<T>& params) {
  return head_attentions_from_projections(params.query(features), params.key(features),
                                          params.heads);
}

template <typename T>
diff::Array<T> global_mask(const std::vector<diff::Array<T>>& per_head) {
  if (per_head.empty()) throw ArgumentError("global_mask: no heads");
  diff::Array<T> total = per_head.front();
  for (std::size_t h = 1; h < per_head.size(); ++h) total = diff::add(total, per_head[h]);
  if (per_head.size() == 1) return total;
  return diff::scale(total, static_cast<T>(1.0 / static_cast<double>(per_head.size())));
}

template <typename T>
diff::Array<T> refined_similarity(const diff::Array<T>& sim, const diff::Array<T>& mask,
                                  bool renormalize, std::vector<std::size_t>* fallback_rows) {
  if (sim.shape() != mask.shape()) {
    throw DimensionError("refined_similarity: " + shape_string(sim.shape()) + " vs " +
                         shape_string(mask.shape()));
  }
  auto product = diff::mul(sim, mask);
  return renormalize ? diff::normalize_rows(product, fallback_rows) : product;
}

template <typename T>
diff::Array<T> global_sem_forward(const diff::Array<T>& features, const GlobalBlockParams<T>& params,
                                  const GlobalBlockOptions& options, AttentionStack<T>* capture) {
  if (features.rank() != 2 || features.dim(1) != params.channels()) {
    throw DimensionError("global_sem_forward: features " + shape_string(features.shape()) +
                         " for a " + std::to_string(params.channels()) + "-channel block");
  }
  if (options.mode == GlobalMode::none) return features;

  auto q = params.query(features);
  auto k = params.key(features);
  diff::Array<T> sim, mask, attention;
  std::vector<diff::Array<T>> heads;
  std::vector<std::size_t> fallback;
  if (options.mode != GlobalMode::mask) sim = similarity_from_projections(q, k);
  if (options.mode != GlobalMode::similarity) {
    heads = head_attentions_from_projections(q, k, params.heads);
    mask = global_mask(heads);
  }
  switch (options.mode) {
    case GlobalMode::similarity: attention = sim; break;
    case GlobalMode::mask: attention = mask; break;
    default: attention = refined_similarity(sim, mask, options.renormalize_refined, &fallback); break;
  }
  auto out = diff::add(features, params.output(diff::matmul(attention, params.value(features))));

  if (capture) {
    capture->per_head = std::move(heads);
    capture->global_similarity = sim;
    capture->global_mask = mask;
    capture->refined = options.mode == GlobalMode::refined ? attention : diff::Array<T>{};
    capture->fallback_rows = std::move(fallback);
  }
  return out;
}

#define GSTRAN_INSTANTIATE(T)                                                                      \
  template struct GlobalBlockParams<T>;                                                            \
  template diff::Array<T> global_similarity<T>(const diff::Array<T>&, const GlobalBlockParams<T>&); \
  template std::vector<diff::Array<T>> multi_head_attentions<T>(const diff::Array<T>&,              \
                                                                const GlobalBlockParams<T>&);       \
  template diff::Array<T> similarity_from_projections<T>(const diff::Array<T>&,                    \
                                                         const diff::Array<T>&);                   \
  template std::vector<diff::Array<T>> head_attentions_from_projections<T>(                        \
      const diff::Array<T>&, const diff::Array<T>&, std::size_t);                                  \
  template diff::Array<T> global_mask<T>(const std::vector<diff::Array<T>>&);                      \
  template diff::Array<T> refined_similarity<T>(const diff::Array<T>&, const diff::Array<T>&, bool, \
                                                std::vector<std::size_t>*);                        \
  template diff::Array<T> global_sem_forward<T>(const diff::Array<T>&, const GlobalBlockParams<T>&, \
                                                const GlobalBlockOptions&, AttentionStack<T>*);

GSTRAN_INSTANTIATE(float)
GSTRAN_INSTANTIATE(double)

#undef GSTRAN_INSTANTIATE

}  // namespace gstran
