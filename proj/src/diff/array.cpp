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

#include "gstran/diff/array.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Core>

#include "gstran/errors.hpp"

namespace gstran::diff {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

OpCounters& op_counters() {
  thread_local OpCounters counters;
  return counters;
}

// ---------------------------------------------------------------------------
// Array

template <typename T>
Array<T> Array<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Array<T> Array<T>::full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->values.assign(shape_size(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Array(std::move(node));
}

template <typename T>
Array<T> Array<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("Array::from: shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Array(std::move(node));
}

template <typename T>
Array<T> Array<T>::scalar(T value, bool requires_grad) {
  return full({}, value, requires_grad);
}

template <typename T>
T Array<T>::item() const {
  if (size() != 1) throw ContractError("item() on array of shape " + shape_string(shape()));
  return node_->values[0];
}

template <typename T>
Array<T> Array<T>::detach() const {
  return from(shape(), node_->values, false);
}

// ---------------------------------------------------------------------------
// Tape

namespace {
template <typename T>
Tape<T>*& active_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}
}  // namespace

template <typename T>
Tape<T>::~Tape() {
  if (active_slot<T>() == this) active_slot<T>() = nullptr;
}

template <typename T>
Tape<T>::Scope::Scope(Tape* tape) : previous_(active_slot<T>()) {
  active_slot<T>() = tape;
}

template <typename T>
Tape<T>::Scope::~Scope() {
  active_slot<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_slot<T>();
}

template <typename T>
void Tape<T>::record(std::shared_ptr<Node<T>> output, BackwardFn fn) {
  records_.push_back({std::move(output), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Array<T>& root) {
  if (!root.defined() || root.size() != 1) {
    throw ContractError("backward: root must be a scalar, got shape " +
                        (root.defined() ? shape_string(root.shape()) : std::string("<undefined>")));
  }
  const bool on_tape = std::any_of(records_.begin(), records_.end(),
                                   [&](const Record& r) { return r.output == root.node_ptr(); });
  if (!on_tape) throw ContractError("backward: root was not produced on this tape");

  root.node()->ensure_grad();
  root.node()->grad[0] += T(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (!it->output->grad.empty()) it->fn();
  }
  records_.clear();
}

template <typename T>
Array<T> record_op(Shape shape, std::vector<T> values, const std::vector<Array<T>>& inputs,
                   std::function<void(std::span<const T>, std::span<const T>)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  Tape<T>* tape = Tape<T>::active();
  const bool needs = tape && std::any_of(inputs.begin(), inputs.end(),
                                         [](const Array<T>& a) { return a.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    Node<T>* out = node.get();
    tape->record(node, [out, fn = std::move(backward)] {
      fn(std::span<const T>(out->values), std::span<const T>(out->grad));
    });
  }
  return wrap_node(std::move(node));
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void require_rank(const Array<T>& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_string(a.shape()));
  }
}

template <typename T>
std::span<T> grad_of(const Array<T>& a) {
  // Gradient buffers are tape-local scratch; constness of the handle does not
  // protect them.
  return const_cast<Array<T>&>(a).mutable_grad();
}

struct BroadcastPlan {
  Shape out;
  bool same = false;
  bool a_scalar = false;
  bool b_scalar = false;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t na = shape_size(a);
  const std::size_t nb = shape_size(b);
  if (nb == 1 && a.size() >= b.size()) {
    plan.out = a;
    plan.b_scalar = true;
    return plan;
  }
  if (na == 1 && b.size() >= a.size()) {
    plan.out = b;
    plan.a_scalar = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " +
                           shape_string(b));
    }
    plan.out[d] = std::max(pa[d], pb[d]);
  }
  std::vector<std::size_t> sa(rank), sb(rank);
  std::size_t ta = 1, tb = 1;
  for (std::size_t d = rank; d-- > 0;) {
    sa[d] = pa[d] == 1 ? 0 : ta;
    sb[d] = pb[d] == 1 ? 0 : tb;
    ta *= pa[d];
    tb *= pb[d];
  }
  const std::size_t n = shape_size(plan.out);
  plan.a_index.resize(n);
  plan.b_index.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    plan.a_index[i] = ia;
    plan.b_index[i] = ib;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < plan.out[d]) break;
      ia -= sa[d] * idx[d];
      ib -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
  return plan;
}

inline std::size_t a_at(const BroadcastPlan& p, std::size_t i) {
  return p.same ? i : p.a_scalar ? 0 : p.b_scalar ? i : p.a_index[i];
}
inline std::size_t b_at(const BroadcastPlan& p, std::size_t i) {
  return p.same ? i : p.b_scalar ? 0 : p.a_scalar ? i : p.b_index[i];
}

enum class BinaryKind { add, sub, mul };

template <typename T>
Array<T> binary(BinaryKind kind, const Array<T>& a, const Array<T>& b, const char* name) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), name));
  const std::size_t n = shape_size(plan->out);
  std::vector<T> out(n);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    const T x = av[a_at(*plan, i)];
    const T y = bv[b_at(*plan, i)];
    out[i] = kind == BinaryKind::add ? x + y : kind == BinaryKind::sub ? x - y : x * y;
  }
  return record_op<T>(plan->out, std::move(out), {a, b},
                      [a, b, plan, kind, n](std::span<const T>, std::span<const T> g) {
                        if (a.requires_grad()) {
                          auto ga = grad_of(a);
                          auto bv = b.values();
                          for (std::size_t i = 0; i < n; ++i) {
                            ga[a_at(*plan, i)] +=
                                kind == BinaryKind::mul ? g[i] * bv[b_at(*plan, i)] : g[i];
                          }
                        }
                        if (b.requires_grad()) {
                          auto gb = grad_of(b);
                          auto av = a.values();
                          for (std::size_t i = 0; i < n; ++i) {
                            const T d = kind == BinaryKind::mul   ? g[i] * av[a_at(*plan, i)]
                                        : kind == BinaryKind::sub ? -g[i]
                                                                  : g[i];
                            gb[b_at(*plan, i)] += d;
                          }
                        }
                      });
}

// Unary op with derivative expressed through input x and output y.
template <typename T, typename Fwd, typename Deriv>
Array<T> unary(const Array<T>& a, Fwd fwd, Deriv deriv) {
  auto av = a.values();
  std::vector<T> out(av.size());
  std::transform(av.begin(), av.end(), out.begin(), fwd);
  return record_op<T>(a.shape(), std::move(out), {a},
                      [a, deriv](std::span<const T> y, std::span<const T> g) {
                        auto ga = grad_of(a);
                        auto x = a.values();
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
                      });
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Array<T> matmul(const Array<T>& a, const Array<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<T> out(m * p);
  using Map = Eigen::Map<const RowMat<T>>;
  Eigen::Map<RowMat<T>>(out.data(), m, p).noalias() =
      Map(a.values().data(), m, k) * Map(b.values().data(), k, p);
  op_counters().matmul_macs += m * k * p;
  return record_op<T>({m, p}, std::move(out), {a, b},
                      [a, b, m, k, p](std::span<const T>, std::span<const T> g) {
                        Map G(g.data(), m, p);
                        if (a.requires_grad()) {
                          Eigen::Map<RowMat<T>>(grad_of(a).data(), m, k).noalias() +=
                              G * Map(b.values().data(), k, p).transpose();
                        }
                        if (b.requires_grad()) {
                          Eigen::Map<RowMat<T>>(grad_of(b).data(), k, p).noalias() +=
                              Map(a.values().data(), m, k).transpose() * G;
                        }
                      });
}

template <typename T>
Array<T> transpose(const Array<T>& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<T> out(r * c);
  auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return record_op<T>({c, r}, std::move(out), {a}, [a, r, c](std::span<const T>, std::span<const T> g) {
    auto ga = grad_of(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

template <typename T>
Array<T> linear(const Array<T>& x, const Array<T>& w, const Array<T>& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  if (x.dim(1) != w.dim(0) || b.size() != w.dim(1)) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + ", weight " +
                         shape_string(w.shape()) + ", bias " + shape_string(b.shape()));
  }
  const std::size_t n = x.dim(0), cin = w.dim(0), cout = w.dim(1);
  std::vector<T> out(n * cout);
  using Map = Eigen::Map<const RowMat<T>>;
  using Vec = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
  Eigen::Map<RowMat<T>> Y(out.data(), n, cout);
  Y.noalias() = Map(x.values().data(), n, cin) * Map(w.values().data(), cin, cout);
  Y.rowwise() += Vec(b.values().data(), cout);
  op_counters().matmul_macs += n * cin * cout;
  return record_op<T>({n, cout}, std::move(out), {x, w, b},
                      [x, w, b, n, cin, cout](std::span<const T>, std::span<const T> g) {
                        Map G(g.data(), n, cout);
                        if (x.requires_grad()) {
                          Eigen::Map<RowMat<T>>(grad_of(x).data(), n, cin).noalias() +=
                              G * Map(w.values().data(), cin, cout).transpose();
                        }
                        if (w.requires_grad()) {
                          Eigen::Map<RowMat<T>>(grad_of(w).data(), cin, cout).noalias() +=
                              Map(x.values().data(), n, cin).transpose() * G;
                        }
                        if (b.requires_grad()) {
                          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grad_of(b).data(), cout) +=
                              G.colwise().sum();
                        }
                      });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

template <typename T>
Array<T> softmax_rows(const Array<T>& a) {
  if (a.rank() < 1 || a.shape().back() < 1) {
    throw DimensionError("softmax_rows: empty last axis in " + shape_string(a.shape()));
  }
  const std::size_t m = a.shape().back();
  const std::size_t rows = a.size() / m;
  auto av = a.values();
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * m;
    T* y = out.data() + r * m;
    const T mx = *std::max_element(x, x + m);
    T s = 0;
    for (std::size_t j = 0; j < m; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    const T inv = T(1) / s;
    for (std::size_t j = 0; j < m; ++j) y[j] *= inv;
  }
  op_counters().exp_calls += a.size();
  return record_op<T>(a.shape(), std::move(out), {a},
                      [a, m, rows](std::span<const T> y, std::span<const T> g) {
                        auto ga = grad_of(a);
                        for (std::size_t r = 0; r < rows; ++r) {
                          const std::size_t o = r * m;
                          T dot = 0;
                          for (std::size_t j = 0; j < m; ++j) dot += g[o + j] * y[o + j];
                          for (std::size_t j = 0; j < m; ++j) ga[o + j] += y[o + j] * (g[o + j] - dot);
                        }
                      });
}

template <typename T>
Array<T> normalize_rows(const Array<T>& a, std::vector<std::size_t>* fallback_rows) {
  if (a.rank() < 1 || a.shape().back() < 1) {
    throw DimensionError("normalize_rows: empty last axis in " + shape_string(a.shape()));
  }
  const std::size_t m = a.shape().back();
  const std::size_t rows = a.size() / m;
  auto av = a.values();
  std::vector<T> out(a.size());
  auto sums = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * m;
    T s = 0;
    for (std::size_t j = 0; j < m; ++j) s += x[j];
    (*sums)[r] = s;
    if (s == T(0)) {
      std::fill_n(out.data() + r * m, m, T(1) / T(m));
      if (fallback_rows) fallback_rows->push_back(r);
    } else {
      for (std::size_t j = 0; j < m; ++j) out[r * m + j] = x[j] / s;
    }
  }
  return record_op<T>(a.shape(), std::move(out), {a},
                      [a, m, rows, sums](std::span<const T> y, std::span<const T> g) {
                        auto ga = grad_of(a);
                        for (std::size_t r = 0; r < rows; ++r) {
                          const T s = (*sums)[r];
                          if (s == T(0)) continue;  // uniform fallback is constant
                          const std::size_t o = r * m;
                          T dot = 0;
                          for (std::size_t j = 0; j < m; ++j) dot += g[o + j] * y[o + j];
                          for (std::size_t j = 0; j < m; ++j) ga[o + j] += (g[o + j] - dot) / s;
                        }
                      });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Array<T> add(const Array<T>& a, const Array<T>& b) {
  return binary(BinaryKind::add, a, b, "add");
}
template <typename T>
Array<T> sub(const Array<T>& a, const Array<T>& b) {
  return binary(BinaryKind::sub, a, b, "sub");
}
template <typename T>
Array<T> mul(const Array<T>& a, const Array<T>& b) {
  return binary(BinaryKind::mul, a, b, "mul");
}

template <typename T>
Array<T> scale(const Array<T>& a, T factor) {
  return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Array<T> exp(const Array<T>& a) {
  op_counters().exp_calls += a.size();
  return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Array<T> neg(const Array<T>& a) {
  return unary(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Array<T> abs(const Array<T>& a) {
  // Subgradient 0 at the kink.
  return unary(a, [](T x) { return std::abs(x); },
               [](T x, T) { return x > 0 ? T(1) : x < 0 ? T(-1) : T(0); });
}

template <typename T>
Array<T> relu(const Array<T>& a) {
  return unary(a, [](T x) { return x > 0 ? x : T(0); }, [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Array<T> reciprocal_eps(const Array<T>& a, T eps) {
  return unary(a, [eps](T x) { return T(1) / (x + eps); }, [](T, T y) { return -y * y; });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Array<T> reduce(Reduction op, const Array<T>& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw DimensionError("reduce: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(a.shape()));
  }
  const Shape& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d)
    if (d != axis) out_shape.push_back(s[d]);

  auto av = a.values();
  std::vector<T> out(outer * inner, T(0));
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  if (op == Reduction::max) argmax->resize(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      T acc = av[base];
      std::size_t best = 0;
      if (op == Reduction::max) {
        for (std::size_t j = 1; j < n; ++j) {
          const T v = av[base + j * inner];
          if (v > acc) {  // strict: ties keep the lowest index
            acc = v;
            best = j;
          }
        }
        (*argmax)[o * inner + i] = best;
      } else {
        for (std::size_t j = 1; j < n; ++j) acc += av[base + j * inner];
        if (op == Reduction::mean) acc /= T(n);
      }
      out[o * inner + i] = n == 0 ? T(0) : acc;
    }
  }
  return record_op<T>(std::move(out_shape), std::move(out), {a},
                      [a, op, outer, inner, n, argmax](std::span<const T>, std::span<const T> g) {
                        auto ga = grad_of(a);
                        const T f = op == Reduction::mean ? T(1) / T(n) : T(1);
                        for (std::size_t o = 0; o < outer; ++o) {
                          for (std::size_t i = 0; i < inner; ++i) {
                            const T gi = g[o * inner + i];
                            const std::size_t base = o * n * inner + i;
                            if (op == Reduction::max) {
                              ga[base + (*argmax)[o * inner + i] * inner] += gi;
                            } else {
                              for (std::size_t j = 0; j < n; ++j) ga[base + j * inner] += gi * f;
                            }
                          }
                        }
                      });
}

template <typename T>
Array<T> sum_all(const Array<T>& a) {
  auto av = a.values();
  const T s = std::accumulate(av.begin(), av.end(), T(0));
  return record_op<T>({}, {s}, {a}, [a](std::span<const T>, std::span<const T> g) {
    for (auto& x : grad_of(a)) x += g[0];
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Array<T> reshape(const Array<T>& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  return record_op<T>(std::move(shape), std::move(out), {a}, [a](std::span<const T>, std::span<const T> g) {
    auto ga = grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Array<T> gather_rows(const Array<T>& a, std::span<const std::size_t> indices) {
  require_rank(a, 2, "gather_rows");
  const std::size_t rows = a.dim(0), c = a.dim(1);
  auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  std::vector<T> out(idx->size() * c);
  auto av = a.values();
  for (std::size_t r = 0; r < idx->size(); ++r) {
    const std::size_t src = (*idx)[r];
    if (src >= rows) {
      throw ArgumentError("gather_rows: index " + std::to_string(src) + " out of range for " +
                          std::to_string(rows) + " rows");
    }
    std::copy_n(av.data() + src * c, c, out.data() + r * c);
  }
  const std::size_t m = idx->size();
  return record_op<T>({m, c}, std::move(out), {a}, [a, idx, c](std::span<const T>, std::span<const T> g) {
    auto ga = grad_of(a);
    for (std::size_t r = 0; r < idx->size(); ++r) {
      T* dst = ga.data() + (*idx)[r] * c;
      const T* src = g.data() + r * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Array<T> concat_last(const std::vector<Array<T>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_last: no inputs");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw DimensionError("concat_last: scalar input");
  const Shape lead(first.begin(), first.end() - 1);
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw DimensionError("concat_last: " + shape_string(first) + " vs " + shape_string(s));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  const std::size_t rows = shape_size(lead);
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[p], widths[p], out.data() + r * total + offset);
    offset += widths[p];
  }
  Shape shape = lead;
  shape.push_back(total);
  return record_op<T>(std::move(shape), std::move(out), parts,
                      [parts, widths, rows, total](std::span<const T>, std::span<const T> g) {
                        std::size_t offset = 0;
                        for (std::size_t p = 0; p < parts.size(); ++p) {
                          if (parts[p].requires_grad()) {
                            auto gp = grad_of(parts[p]);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < widths[p]; ++j)
                                gp[r * widths[p] + j] += g[r * total + offset + j];
                          }
                          offset += widths[p];
                        }
                      });
}

template <typename T>
Array<T> slice_cols(const Array<T>& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols");
  const std::size_t rows = a.dim(0), c = a.dim(1);
  if (begin > end || end > c) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<T> out(rows * w);
  auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(av.data() + r * c + begin, w, out.data() + r * w);
  return record_op<T>({rows, w}, std::move(out), {a},
                      [a, rows, c, begin, w](std::span<const T>, std::span<const T> g) {
                        auto ga = grad_of(a);
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t j = 0; j < w; ++j) ga[r * c + begin + j] += g[r * w + j];
                      });
}

template <typename T>
Array<T> dropout(const Array<T>& a, double p, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw ArgumentError("dropout: p must lie in [0, 1)");
  if (p == 0.0) return a;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - p);
  const T s = T(1.0 / (1.0 - p));
  std::vector<T> m(a.size());
  for (auto& x : m) x = keep(rng) ? s : T(0);
  return mul(a, Array<T>::from(a.shape(), std::move(m)));
}

// ---------------------------------------------------------------------------

#define GSTRAN_INSTANTIATE(T)                                                                  \
  template class Array<T>;                                                                     \
  template class Tape<T>;                                                                      \
  template Array<T> record_op<T>(Shape, std::vector<T>, const std::vector<Array<T>>&,          \
                                 std::function<void(std::span<const T>, std::span<const T>)>); \
  template Array<T> matmul<T>(const Array<T>&, const Array<T>&);                               \
  template Array<T> transpose<T>(const Array<T>&);                                             \
  template Array<T> linear<T>(const Array<T>&, const Array<T>&, const Array<T>&);              \
  template Array<T> softmax_rows<T>(const Array<T>&);                                          \
  template Array<T> normalize_rows<T>(const Array<T>&, std::vector<std::size_t>*);             \
  template Array<T> add<T>(const Array<T>&, const Array<T>&);                                  \
  template Array<T> sub<T>(const Array<T>&, const Array<T>&);                                  \
  template Array<T> mul<T>(const Array<T>&, const Array<T>&);                                  \
  template Array<T> scale<T>(const Array<T>&, T);                                              \
  template Array<T> exp<T>(const Array<T>&);                                                   \
  template Array<T> neg<T>(const Array<T>&);                                                   \
  template Array<T> abs<T>(const Array<T>&);                                                   \
  template Array<T> relu<T>(const Array<T>&);                                                  \
  template Array<T> reciprocal_eps<T>(const Array<T>&, T);                                     \
  template Array<T> reduce<T>(Reduction, const Array<T>&, std::size_t);                        \
  template Array<T> sum_all<T>(const Array<T>&);                                               \
  template Array<T> reshape<T>(const Array<T>&, Shape);                                        \
  template Array<T> gather_rows<T>(const Array<T>&, std::span<const std::size_t>);             \
  template Array<T> concat_last<T>(const std::vector<Array<T>>&);                              \
  template Array<T> slice_cols<T>(const Array<T>&, std::size_t, std::size_t);                  \
  template Array<T> dropout<T>(const Array<T>&, double, std::uint64_t);

GSTRAN_INSTANTIATE(float)
GSTRAN_INSTANTIATE(double)

#undef GSTRAN_INSTANTIATE

}  // namespace gstran::diff
