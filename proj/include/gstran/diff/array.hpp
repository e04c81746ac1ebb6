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

// Dense n-dimensional arrays with reverse-mode differentiation.
//
// An Array is a cheap shared handle to a node holding values and a lazily
// allocated gradient buffer. Operations executed while a Tape is active (see
// Tape::activate) and touching at least one requires_grad input are recorded
// on that tape; Tape::backward replays the records in reverse and then clears
// the tape. Outside an active tape every operation is a plain forward
// computation and its result never requires grad.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace gstran::diff {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
  }
};

template <typename T>
class Array {
 public:
  Array() = default;

  static Array zeros(Shape shape, bool requires_grad = false);
  static Array full(Shape shape, T value, bool requires_grad = false);
  static Array from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Array scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->values.size(); }

  std::span<const T> values() const { return node_->values; }
  /// Direct write access; reserved for parameter initialization and optimizer
  /// updates between steps.
  std::span<T> mutable_values() { return node_->values; }
  T item() const;
  T at(std::size_t i, std::size_t j) const { return node_->values[i * node_->shape[1] + j]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Empty span when no gradient has been accumulated.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  /// Deep copy of the values, detached from any tape.
  Array detach() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  explicit Array(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<Node<T>> node_;

  template <typename U>
  friend Array<U> wrap_node(std::shared_ptr<Node<U>>);
};

template <typename T>
Array<T> wrap_node(std::shared_ptr<Node<T>> node) {
  return Array<T>(std::move(node));
}

/// Ordered record of executed operations for one forward pass.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  /// RAII guard making a tape the active recorder on the calling thread.
  class Scope {
   public:
    explicit Scope(Tape* tape);
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
    ~Scope();

   private:
    Tape* previous_;
  };

  [[nodiscard]] Scope activate() { return Scope(this); }
  static Tape* active();

  void record(std::shared_ptr<Node<T>> output, BackwardFn fn);

  /// Seeds d(root)/d(root) = 1, visits every record once in reverse
  /// execution order, and clears the tape. Throws ContractError for a
  /// non-scalar root or one not produced on this tape.
  void backward(const Array<T>& root);

  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

 private:
  struct Record {
    std::shared_ptr<Node<T>> output;
    BackwardFn fn;
  };
  std::vector<Record> records_;
};

/// Builds an operation result. `backward` receives the output values and the
/// output gradient and must accumulate into those inputs that require grad.
/// Recorded only if a tape is active and some input requires grad.
template <typename T>
Array<T> record_op(Shape shape, std::vector<T> values, const std::vector<Array<T>>& inputs,
                   std::function<void(std::span<const T> out_values, std::span<const T> out_grad)>
                       backward);

/// Multiply-add counters for cost instrumentation (per thread).
struct OpCounters {
  std::uint64_t matmul_macs = 0;
  std::uint64_t exp_calls = 0;
};
OpCounters& op_counters();

// ---------------------------------------------------------------------------
// Primitive operations.

template <typename T> Array<T> matmul(const Array<T>& a, const Array<T>& b);
template <typename T> Array<T> transpose(const Array<T>& a);
template <typename T> Array<T> linear(const Array<T>& x, const Array<T>& w, const Array<T>& b);

/// Row-wise softmax over the last axis, max-subtracted.
template <typename T> Array<T> softmax_rows(const Array<T>& a);

/// Divides every row (last axis) by its sum. Rows summing to exactly zero
/// become uniform and their index is appended to `fallback_rows` if given.
template <typename T>
Array<T> normalize_rows(const Array<T>& a, std::vector<std::size_t>* fallback_rows = nullptr);

// Binary ops broadcast numpy-style: shapes are right-aligned and every extent
// pair must be equal or contain a 1.
template <typename T> Array<T> add(const Array<T>& a, const Array<T>& b);
template <typename T> Array<T> sub(const Array<T>& a, const Array<T>& b);
template <typename T> Array<T> mul(const Array<T>& a, const Array<T>& b);

template <typename T> Array<T> scale(const Array<T>& a, T factor);
template <typename T> Array<T> exp(const Array<T>& a);
template <typename T> Array<T> neg(const Array<T>& a);
template <typename T> Array<T> abs(const Array<T>& a);
template <typename T> Array<T> relu(const Array<T>& a);

inline constexpr double kDefaultReciprocalEps = 1e-8;
/// 1 / (x + eps)
template <typename T> Array<T> reciprocal_eps(const Array<T>& a, T eps = T(kDefaultReciprocalEps));

enum class Reduction { sum, mean, max };
/// Reduces along `axis`, removing it. max routes the gradient to the first
/// maximal element.
template <typename T> Array<T> reduce(Reduction op, const Array<T>& a, std::size_t axis);
template <typename T> Array<T> sum_all(const Array<T>& a);

template <typename T> Array<T> reshape(const Array<T>& a, Shape shape);
/// Rows of a rank-2 array selected (with repetition) by `indices`.
template <typename T>
Array<T> gather_rows(const Array<T>& a, std::span<const std::size_t> indices);
/// Concatenation along the last axis; leading extents must agree.
template <typename T> Array<T> concat_last(const std::vector<Array<T>>& parts);
/// Columns [begin, end) of a rank-2 array.
template <typename T> Array<T> slice_cols(const Array<T>& a, std::size_t begin, std::size_t end);
/// Inverted dropout with keep mask drawn from `seed`; identity when p == 0.
template <typename T> Array<T> dropout(const Array<T>& a, double p, std::uint64_t seed);

}  // namespace gstran::diff
