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

#include <doctest.h>

#include <cmath>
#include <limits>

#include "gstran/diff/array.hpp"
#include "gstran/errors.hpp"
#include "test_support.hpp"

using namespace gstran;
using diff::Array;
using testing::gradient_check;
using testing::probe;
using testing::random_array;
using Inputs = std::vector<Array<double>>;
using Fn = std::function<Array<double>(const Inputs&)>;

namespace {

void check_values(const Array<double>& a, std::vector<double> expected, double tol = 1e-12) {
  REQUIRE(a.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(a.values()[i] == doctest::Approx(expected[i]).epsilon(tol));
}

// Finite-difference check of `f` over 100 seeds with step 1e-4.
void check_primitive(const std::vector<diff::Shape>& shapes, const Fn& f, double lo = -1.0,
                     double hi = 1.0) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    Inputs in;
    for (const auto& s : shapes) in.push_back(random_array<double>(s, rng, lo, hi));
    worst = std::max(worst, gradient_check<double>(in, f, 1e-4));
  }
  CHECK(worst < 1e-5);
}

}  // namespace

TEST_CASE("matmul values and errors") {
  auto eye = Array<double>::from({2, 2}, {1, 0, 0, 1});
  auto m = Array<double>::from({2, 2}, {1, 2, 3, 4});
  check_values(diff::matmul(eye, m), {1, 2, 3, 4});
  check_values(diff::matmul(Array<double>::from({1, 2}, {1, 2}), Array<double>::from({2, 1}, {3, 4})), {11});
  CHECK_THROWS_AS(diff::matmul(m, Array<double>::zeros({3, 1})), DimensionError);
  try {
    diff::matmul(m, Array<double>::zeros({3, 1}));
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x2") != std::string::npos);
    CHECK(msg.find("3x1") != std::string::npos);
  }
}

TEST_CASE("matmul gradient") {
  check_primitive({{4, 3}, {3, 5}}, [](const Inputs& x) { return diff::sum_all(diff::matmul(x[0], x[1])); });
  check_primitive({{4, 3}, {3, 5}}, [](const Inputs& x) { return probe(diff::matmul(x[0], x[1])); });
}

TEST_CASE("transpose") {
  auto a = Array<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  check_values(diff::transpose(a), {1, 4, 2, 5, 3, 6});
  check_primitive({{3, 4}}, [](const Inputs& x) { return probe(diff::transpose(x[0])); });
}

TEST_CASE("softmax_rows") {
  check_values(diff::softmax_rows(Array<double>::from({1, 3}, {0, 0, 0})), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  auto big = diff::softmax_rows(Array<double>::from({1, 2}, {1000, 0}));
  CHECK(big.values()[0] == 1.0);
  CHECK(big.values()[1] >= 0.0);
  CHECK(big.values()[1] < 1e-300);
  CHECK(std::isfinite(big.values()[1]));
  check_primitive({{5, 7}}, [](const Inputs& x) { return probe(diff::softmax_rows(x[0])); });

  std::mt19937_64 rng(3);
  auto s = diff::softmax_rows(random_array<double>({6, 9}, rng, -30, 30));
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < 9; ++j) {
      CHECK(s.at(i, j) > 0.0);
      sum += s.at(i, j);
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("linear") {
  auto x = Array<double>::from({2, 2}, {1, 2, 3, 4});
  check_values(diff::linear(x, Array<double>::from({2, 2}, {1, 0, 0, 1}), Array<double>::zeros({2})), {1, 2, 3, 4});
  check_values(diff::linear(Array<double>::from({1, 2}, {1, 1}), Array<double>::from({2, 1}, {1, 1}),
                            Array<double>::from({1}, {1})),
               {3});
  CHECK_THROWS_AS(diff::linear(x, Array<double>::zeros({3, 2}), Array<double>::zeros({2})), DimensionError);
  CHECK_THROWS_AS(diff::linear(x, Array<double>::zeros({2, 2}), Array<double>::zeros({3})), DimensionError);
  check_primitive({{3, 4}, {4, 2}, {2}},
                  [](const Inputs& v) { return probe(diff::linear(v[0], v[1], v[2])); });
}

TEST_CASE("elementwise values") {
  check_values(diff::exp(Array<double>::scalar(0)), {1});
  check_values(diff::reciprocal_eps(Array<double>::scalar(0), 1e-8), {1e8}, 1e-9);
  check_values(diff::mul(Array<double>::from({2}, {1, 2}), Array<double>::from({2}, {3, 4})), {3, 8});
  check_values(diff::add(Array<double>::from({2}, {1, 2}), Array<double>::scalar(1)), {2, 3});
  check_values(diff::sub(Array<double>::from({2, 1}, {1, 2}), Array<double>::from({1, 2}, {1, 3})),
               {0, -2, 1, -1});
  check_values(diff::neg(Array<double>::from({2}, {1, -2})), {-1, 2});
  check_values(diff::abs(Array<double>::from({2}, {1, -2})), {1, 2});
  check_values(diff::relu(Array<double>::from({3}, {1, -2, 0})), {1, 0, 0});
  check_values(diff::scale(Array<double>::from({2}, {1, -2}), 3.0), {3, -6});
  CHECK_THROWS_AS(diff::add(Array<double>::zeros({2, 3}), Array<double>::zeros({3, 2})), DimensionError);
}

TEST_CASE("elementwise gradients") {
  check_primitive({{3, 4}, {3, 4}}, [](const Inputs& x) { return probe(diff::add(x[0], x[1])); });
  check_primitive({{3, 4}, {3, 4}}, [](const Inputs& x) { return probe(diff::sub(x[0], x[1])); });
  check_primitive({{3, 4}, {3, 4}}, [](const Inputs& x) { return probe(diff::mul(x[0], x[1])); });
  check_primitive({{3, 4}, {1, 4}}, [](const Inputs& x) { return probe(diff::mul(x[0], x[1])); });
  check_primitive({{3, 4}, {3, 1}}, [](const Inputs& x) { return probe(diff::add(x[0], x[1])); });
  check_primitive({{3, 4}, {}}, [](const Inputs& x) { return probe(diff::mul(x[0], x[1])); });
  check_primitive({{3, 4}}, [](const Inputs& x) { return probe(diff::exp(x[0])); });
  check_primitive({{3, 4}}, [](const Inputs& x) { return probe(diff::neg(x[0])); });
  check_primitive({{3, 4}}, [](const Inputs& x) { return probe(diff::scale(x[0], 2.5)); });
  // Kinked ops: magnitudes kept away from 0, signs mixed by a fixed pattern.
  const auto signs = Array<double>::from({3, 4}, {1, -1, 1, -1, -1, 1, -1, 1, 1, 1, -1, -1});
  check_primitive({{3, 4}}, [signs](const Inputs& x) { return probe(diff::abs(diff::mul(x[0], signs))); }, 0.05, 1.0);
  check_primitive({{3, 4}}, [signs](const Inputs& x) { return probe(diff::relu(diff::mul(x[0], signs))); }, 0.05, 1.0);
  check_primitive({{3, 4}}, [](const Inputs& x) { return probe(diff::reciprocal_eps(x[0], 1e-8)); }, 0.5, 2.0);
}

TEST_CASE("exp of negative abs lies in (0, 1]") {
  std::mt19937_64 rng(5);
  auto x = random_array<double>({200}, rng, -50, 50);
  auto y = diff::exp(diff::neg(diff::abs(x)));
  for (double v : y.values()) {
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
  check_values(diff::exp(diff::neg(diff::abs(Array<double>::scalar(0)))), {1});
}

TEST_CASE("reduce") {
  check_values(diff::reduce(diff::Reduction::sum, Array<double>::from({3}, {1, 2, 3}), 0), {6});
  check_values(diff::reduce(diff::Reduction::mean, Array<double>::full({2, 3}, 4.5), 1), {4.5, 4.5});
  check_values(diff::reduce(diff::Reduction::max, Array<double>::from({2, 2}, {1, 5, 7, 2}), 1), {5, 7});
  CHECK_THROWS_AS(diff::reduce(diff::Reduction::sum, Array<double>::zeros({2, 2}), 2), DimensionError);
  for (auto op : {diff::Reduction::sum, diff::Reduction::mean}) {
    for (std::size_t axis : {0u, 1u, 2u}) {
      check_primitive({{2, 3, 4}}, [op, axis](const Inputs& x) { return probe(diff::reduce(op, x[0], axis)); });
    }
  }
  // max: a well-separated base keeps the argmax stable under the FD step.
  std::vector<double> base(24);
  for (std::size_t i = 0; i < base.size(); ++i) base[i] = 0.1 * double((i * 7) % 24);
  const auto offset = Array<double>::from({2, 3, 4}, base);
  for (std::size_t axis : {0u, 1u, 2u}) {
    check_primitive({{2, 3, 4}}, [offset, axis](const Inputs& x) {
      return probe(diff::reduce(diff::Reduction::max, diff::add(diff::scale(x[0], 0.01), offset), axis));
    });
  }
}

TEST_CASE("max reduction routes ties to the lowest index") {
  auto x = Array<double>::from({1, 3}, {2, 2, 1}, true);
  diff::Tape<double> tape;
  {
    auto scope = tape.activate();
    tape.backward(diff::sum_all(diff::reduce(diff::Reduction::max, x, 1)));
  }
  check_values(Array<double>::from({3}, std::vector<double>(x.grad().begin(), x.grad().end())), {1, 0, 0});
}

TEST_CASE("shape operations") {
  auto a = Array<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  check_values(diff::slice_cols(a, 1, 3), {2, 3, 5, 6});
  check_values(diff::concat_last<double>({a, Array<double>::from({2, 1}, {7, 8})}), {1, 2, 3, 7, 4, 5, 6, 8});
  const std::vector<std::size_t> idx{1, 1, 0};
  check_values(diff::gather_rows<double>(a, idx), {4, 5, 6, 4, 5, 6, 1, 2, 3});
  CHECK(diff::reshape(a, {3, 2}).shape() == diff::Shape{3, 2});
  CHECK_THROWS_AS(diff::reshape(a, {4, 2}), DimensionError);
  CHECK_THROWS_AS(diff::gather_rows<double>(a, std::vector<std::size_t>{2}), std::exception);

  check_primitive({{2, 3}}, [](const Inputs& x) { return probe(diff::reshape(x[0], {3, 2})); });
  check_primitive({{4, 3}}, [](const Inputs& x) {
    const std::vector<std::size_t> rows{3, 0, 3, 1};
    return probe(diff::gather_rows<double>(x[0], rows));
  });
  check_primitive({{3, 2}, {3, 4}}, [](const Inputs& x) { return probe(diff::concat_last<double>({x[0], x[1]})); });
  check_primitive({{3, 5}}, [](const Inputs& x) { return probe(diff::slice_cols(x[0], 1, 4)); });
  check_primitive({{3, 4}}, [](const Inputs& x) { return probe(diff::normalize_rows(x[0])); }, 0.1, 1.0);
}

TEST_CASE("normalize_rows falls back to uniform for zero rows") {
  std::vector<std::size_t> fallback;
  auto r = diff::normalize_rows(Array<double>::from({2, 2}, {1, 3, 0, 0}), &fallback);
  check_values(r, {0.25, 0.75, 0.5, 0.5});
  CHECK(fallback == std::vector<std::size_t>{1});
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(1);
  auto x = random_array<double>({20, 10}, rng);
  auto a = diff::dropout(x, 0.5, 7), b = diff::dropout(x, 0.5, 7);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values()[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(a.values()[i] == doctest::Approx(2.0 * x.values()[i]));
    }
  }
  CHECK(zeros > 50);
  CHECK(zeros < 150);
  check_primitive({{4, 5}}, [](const Inputs& v) { return probe(diff::dropout(v[0], 0.3, 11)); });
}

TEST_CASE("backward basics") {
  auto x = Array<double>::scalar(3.0, true);
  diff::Tape<double> tape;
  {
    auto scope = tape.activate();
    tape.backward(diff::mul(x, x));
  }
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  CHECK(tape.size() == 0);

  std::mt19937_64 rng(2);
  auto y = random_array<double>({4, 6}, rng, -1, 1, true);
  {
    auto scope = tape.activate();
    tape.backward(diff::sum_all(diff::softmax_rows(y)));
  }
  for (double g : y.grad()) CHECK(std::abs(g) < 1e-12);

  {
    auto scope = tape.activate();
    auto v = diff::scale(y, 2.0);
    CHECK_THROWS_AS(tape.backward(v), ContractError);
  }
}

TEST_CASE("tape visits each record once in reverse order") {
  // A chain reused twice: y = x*x + x*x; each record must run once.
  auto x = Array<double>::scalar(2.0, true);
  diff::Tape<double> tape;
  auto scope = tape.activate();
  auto sq = diff::mul(x, x);
  auto y = diff::add(sq, sq);
  CHECK(tape.size() == 2);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("no recording without a tape or without grad inputs") {
  auto x = Array<double>::scalar(2.0, true);
  auto y = diff::mul(x, x);
  CHECK_FALSE(y.requires_grad());
  diff::Tape<double> tape;
  auto scope = tape.activate();
  auto c = Array<double>::scalar(2.0);
  diff::mul(c, c);
  CHECK(tape.size() == 0);
}

TEST_CASE("determinism: repeated evaluation is bit-identical") {
  auto run = [] {
    std::mt19937_64 rng(42);
    auto a = random_array<double>({5, 4}, rng, -1, 1, true);
    auto b = random_array<double>({4, 3}, rng, -1, 1, true);
    diff::Tape<double> tape;
    auto scope = tape.activate();
    auto out = diff::softmax_rows(diff::matmul(a, b));
    auto loss = probe(out);
    tape.backward(loss);
    std::vector<double> all(out.values().begin(), out.values().end());
    all.insert(all.end(), a.grad().begin(), a.grad().end());
    return all;
  };
  CHECK(run() == run());
}

TEST_CASE("single precision gradients") {
  std::mt19937_64 rng(8);
  std::vector<Array<float>> in{random_array<float>({4, 3}, rng), random_array<float>({3, 5}, rng)};
  const double err = gradient_check<float>(
      in, [](const std::vector<Array<float>>& x) { return probe(diff::softmax_rows(diff::matmul(x[0], x[1]))); },
      1e-2);
  CHECK(err < 1e-3);
}

TEST_CASE("grad shapes match values and stay finite") {
  std::mt19937_64 rng(4);
  auto a = random_array<double>({3, 4}, rng, -1, 1, true);
  auto w = random_array<double>({4, 2}, rng, -1, 1, true);
  diff::Tape<double> tape;
  auto scope = tape.activate();
  tape.backward(probe(diff::relu(diff::matmul(a, w))));
  CHECK(a.grad().size() == a.size());
  CHECK(w.grad().size() == w.size());
  for (double g : a.grad()) CHECK(std::isfinite(g));
}
