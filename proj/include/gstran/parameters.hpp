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

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gstran/diff/array.hpp"

namespace gstran {

/// Named, ordered collection of learnable arrays. Handles returned by
/// `create` share storage with the set.
template <typename T>
class ParameterSet {
 public:
  using Entry = std::pair<std::string, diff::Array<T>>;

  diff::Array<T> create(std::string name, diff::Shape shape) {
    auto a = diff::Array<T>::zeros(std::move(shape), true);
    entries_.emplace_back(std::move(name), a);
    return a;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  const diff::Array<T>* find(const std::string& name) const {
    for (const auto& [n, a] : entries_)
      if (n == name) return &a;
    return nullptr;
  }

  std::size_t scalar_count() const {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.second.size();
    return total;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
};

/// Fully connected layer y = x W + b with W of shape in x out.
template <typename T>
struct Linear {
  diff::Array<T> weight;
  diff::Array<T> bias;

  static Linear create(ParameterSet<T>& params, const std::string& name, std::size_t in,
                       std::size_t out) {
    return {params.create(name + ".weight", {in, out}), params.create(name + ".bias", {out})};
  }

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  diff::Array<T> operator()(const diff::Array<T>& x) const { return diff::linear(x, weight, bias); }

  /// Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and bias.
  void init_uniform(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& w : weight.mutable_values()) w = static_cast<T>(u(rng));
    for (auto& b : bias.mutable_values()) b = static_cast<T>(u(rng));
  }
};

}  // namespace gstran
