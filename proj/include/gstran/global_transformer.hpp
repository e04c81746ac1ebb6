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

// Global semantic transformer block with multi-head voting.
//
// The full-width attention softmax(Q K^T / sqrt(C)) is the global similarity.
// Splitting the Q and K channels into H groups yields H head attentions whose
// mean is the global mask: columns that respond strongly in only some heads
// get a diluted vote. The refined similarity is the row-renormalized product
// of similarity and mask, and it is what aggregates the values.

#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "gstran/diff/array.hpp"
#include "gstran/parameters.hpp"

namespace gstran {

/// Which N x N map aggregates the values. `none` skips the block.
enum class GlobalMode { none, similarity, mask, refined };

std::string to_string(GlobalMode mode);
GlobalMode parse_global_mode(const std::string& s);

template <typename T>
struct GlobalBlockParams {
  Linear<T> query;
  Linear<T> key;
  Linear<T> value;
  Linear<T> output;
  std::size_t heads = 1;

  static GlobalBlockParams create(ParameterSet<T>& params, const std::string& name,
                                  std::size_t channels, std::size_t heads);
  void init(std::mt19937_64& rng);
  std::size_t channels() const { return query.in_features(); }
};

template <typename T>
struct AttentionStack {
  std::vector<diff::Array<T>> per_head;  // H maps, N x N
  diff::Array<T> global_similarity;      // N x N
  diff::Array<T> global_mask;            // N x N
  diff::Array<T> refined;                // N x N
  std::vector<std::size_t> fallback_rows;
};

struct GlobalBlockOptions {
  GlobalMode mode = GlobalMode::refined;
  bool renormalize_refined = true;
};

/// softmax_rows(query(f) key(f)^T / sqrt(C)).
template <typename T>
diff::Array<T> global_similarity(const diff::Array<T>& features, const GlobalBlockParams<T>& params);

/// Per head h: softmax_rows(Q_h K_h^T / sqrt(C/H)) over contiguous channel
/// groups of width C/H. ArgumentError unless H divides C.
template <typename T>
std::vector<diff::Array<T>> multi_head_attentions(const diff::Array<T>& features,
                                                  const GlobalBlockParams<T>& params);

template <typename T>
diff::Array<T> similarity_from_projections(const diff::Array<T>& q, const diff::Array<T>& k);

template <typename T>
std::vector<diff::Array<T>> head_attentions_from_projections(const diff::Array<T>& q,
                                                             const diff::Array<T>& k,
                                                             std::size_t heads);

/// Mean of the head maps.
template <typename T>
diff::Array<T> global_mask(const std::vector<diff::Array<T>>& per_head);

/// sim (.) mask, rows renormalized unless `renormalize` is false. Zero rows
/// fall back to uniform and are reported.
template <typename T>
diff::Array<T> refined_similarity(const diff::Array<T>& sim, const diff::Array<T>& mask,
                                  bool renormalize = true,
                                  std::vector<std::size_t>* fallback_rows = nullptr);

/// out = features + output(A value(features)), A chosen by `options.mode`.
/// When `capture` is given it receives every intermediate map computed.
template <typename T>
diff::Array<T> global_sem_forward(const diff::Array<T>& features, const GlobalBlockParams<T>& params,
                                  const GlobalBlockOptions& options = {},
                                  AttentionStack<T>* capture = nullptr);

}  // namespace gstran
