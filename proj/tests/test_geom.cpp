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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/Geometry>

#include "gstran/errors.hpp"
#include "gstran/geom/ops.hpp"
#include "test_support.hpp"

using namespace gstran;
using geom::Points;

namespace {

// O(N^2) scan: order every source point by (squared distance, index).
std::vector<std::size_t> brute_knn(const Points& src, const Eigen::RowVector3d& q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (Eigen::Index j = 0; j < src.rows(); ++j) all.emplace_back((src.row(j) - q).squaredNorm(), std::size_t(j));
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
  return out;
}

// Greedy selection recomputing every min-distance from scratch; ties go to
// the lowest unselected index.
std::vector<std::size_t> brute_fps(const Points& p, std::size_t m, std::size_t start) {
  std::vector<std::size_t> sel{start};
  while (sel.size() < m) {
    double best = -1;
    std::size_t arg = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      if (std::find(sel.begin(), sel.end(), std::size_t(i)) != sel.end()) continue;
      double d = 1e300;
      for (std::size_t s : sel) d = std::min(d, (p.row(i) - p.row(Eigen::Index(s))).squaredNorm());
      if (d > best) {
        best = d;
        arg = std::size_t(i);
      }
    }
    sel.push_back(arg);
  }
  return sel;
}

}  // namespace

TEST_CASE("knn on collinear points") {
  Points p(4, 3);
  p << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
  const auto nn = geom::knn(p, p.topRows(1), 2);
  CHECK(nn.row_indices(0)[0] == 0);
  CHECK(nn.row_indices(0)[1] == 1);
  CHECK(nn.row_distances(0)[0] == 0.0);
  CHECK(nn.row_distances(0)[1] == 1.0);
  CHECK_THROWS_AS(geom::knn(p, p, 5), ArgumentError);
}

TEST_CASE("knn matches brute force and satisfies the index invariants") {
  for (std::size_t n : {8u, 64u, 256u}) {
    std::mt19937_64 rng(n);
    const Points p = testing::random_points(n, rng);
    for (std::size_t k : {1u, 4u, 8u}) {
      if (k > n) continue;
      const auto nn = geom::knn(p, p, k);
      for (std::size_t i = 0; i < n; ++i) {
        const auto expect = brute_knn(p, p.row(Eigen::Index(i)), k);
        const auto got = nn.row_indices(i);
        CHECK(std::equal(got.begin(), got.end(), expect.begin()));
        const auto d = nn.row_distances(i);
        for (std::size_t j = 0; j < k; ++j) {
          CHECK(got[j] < n);
          if (j) CHECK(d[j] >= d[j - 1]);
          CHECK(std::abs(d[j] - (p.row(Eigen::Index(i)) - p.row(Eigen::Index(got[j]))).norm()) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("knn ties break toward the lower index") {
  Points p(5, 3);
  p << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 0;
  Points q(1, 3);
  q << 0, 0, 0;
  const auto nn = geom::knn(p, q, 5);
  const std::vector<std::size_t> expect{4, 0, 1, 2, 3};
  CHECK(std::equal(expect.begin(), expect.end(), nn.row_indices(0).begin()));
}

TEST_CASE("knn over generic feature dimensions") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> src(30 * 5), qs(4 * 5);
  for (auto& v : src) v = u(rng);
  for (auto& v : qs) v = u(rng);
  const auto nn = geom::knn<double>(src, qs, 5, 6);
  for (std::size_t q = 0; q < 4; ++q) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < 30; ++j) {
      double d = 0;
      for (std::size_t c = 0; c < 5; ++c) d += (src[j * 5 + c] - qs[q * 5 + c]) * (src[j * 5 + c] - qs[q * 5 + c]);
      all.emplace_back(d, j);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t j = 0; j < 6; ++j) CHECK(nn.row_indices(q)[j] == all[j].second);
  }
}

TEST_CASE("fps") {
  std::mt19937_64 rng(1);
  const Points p = testing::random_points(20, rng);
  CHECK(geom::fps(p, 1, 7) == std::vector<std::size_t>{7});
  auto all = geom::fps(p, 20, 3);
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> iota(20);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(all == iota);
  CHECK_THROWS_AS(geom::fps(p, 21, 0), ArgumentError);
  CHECK_THROWS_AS(geom::fps(p, 2, 20), ArgumentError);
}

TEST_CASE("fps matches brute force, lattice ties included") {
  for (std::size_t n : {8u, 64u, 256u}) {
    std::mt19937_64 rng(n);
    std::uniform_int_distribution<int> cell(0, 3);
    Points lattice(Eigen::Index(n), 3);
    for (Eigen::Index i = 0; i < lattice.size(); ++i) lattice.data()[i] = cell(rng);
    for (const Points& p : {testing::random_points(n, rng), lattice}) {
      for (std::size_t start : {std::size_t(0), n - 1}) {
        CHECK(geom::fps(p, std::min<std::size_t>(n, 24), start) == brute_fps(p, std::min<std::size_t>(n, 24), start));
      }
    }
  }
}

TEST_CASE("fps on square corners and center picks the corners") {
  Points p(5, 3);
  p << 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0, 0.5, 0.5, 0;
  auto sel = geom::fps(p, 4, 0);
  CHECK(sel.front() == 0);
  std::sort(sel.begin(), sel.end());
  CHECK(sel == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("fps is unchanged by appended duplicate points") {
  std::mt19937_64 rng(2);
  const Points p = testing::random_points(30, rng);
  Points dup(60, 3);
  dup << p, p;
  CHECK(geom::fps(p, 12, 4) == geom::fps(dup, 12, 4));
}

TEST_CASE("normals on a plane") {
  Points p(16, 3);
  for (int i = 0; i < 16; ++i) p.row(i) << i % 4, i / 4, 0;
  const auto est = geom::estimate_normals(p, 8);
  CHECK(est.degenerate.empty());
  for (Eigen::Index i = 0; i < 16; ++i) {
    CHECK(std::abs(std::abs(est.normals(i, 2)) - 1.0) < 1e-6);
  }
}

TEST_CASE("normals on a tilted plane are orthogonal to in-plane displacements") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  const Eigen::Vector3d a = Eigen::Vector3d(1, 0.3, -0.2).normalized();
  const Eigen::Vector3d b = a.cross(Eigen::Vector3d(0.1, 1, 0.4)).normalized();
  Points p(64, 3);
  for (Eigen::Index i = 0; i < 64; ++i) p.row(i) = (u(rng) * a + u(rng) * b).transpose();
  const auto est = geom::estimate_normals(p, 10);
  const auto nn = geom::knn(p, p, 10);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(std::abs(est.normals.row(Eigen::Index(i)).norm() - 1.0) < 1e-6);
    for (std::size_t j : nn.row_indices(i)) {
      const Eigen::RowVector3d d = p.row(Eigen::Index(j)) - p.row(Eigen::Index(i));
      CHECK(std::abs(d.dot(est.normals.row(Eigen::Index(i)))) < 1e-5);
    }
  }
}

TEST_CASE("normals on a sphere are radial within 5 degrees") {
  // Fibonacci lattice: quasi-uniform, so every neighborhood is balanced.
  Points p(256, 3);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (Eigen::Index i = 0; i < 256; ++i) {
    const double z = 1.0 - (2.0 * double(i) + 1.0) / 256.0;
    const double r = std::sqrt(1.0 - z * z);
    p.row(i) << r * std::cos(golden * double(i)), r * std::sin(golden * double(i)), z;
  }
  const auto est = geom::estimate_normals(p, 16);
  const double cos5 = std::cos(5.0 * M_PI / 180.0);
  std::size_t bad = 0;
  for (Eigen::Index i = 0; i < 256; ++i) {
    bad += std::abs(est.normals.row(i).dot(p.row(i))) < cos5;
    // Oriented away from the centroid, which sits at the sphere center.
    CHECK(est.normals.row(i).dot(p.row(i)) > 0.0);
  }
  CHECK(bad == 0);
}

TEST_CASE("degenerate neighborhoods fall back to +z") {
  Points p = Points::Ones(6, 3);
  const auto est = geom::estimate_normals(p, 3);
  CHECK(est.degenerate.size() == 6);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(est.normals.row(i) == Eigen::RowVector3d(0, 0, 1));
  CHECK_THROWS_AS(geom::estimate_normals(p, 2), ArgumentError);
  CHECK_THROWS_AS(geom::estimate_normals(p, 7), ArgumentError);
}

TEST_CASE("interpolation rules") {
  geom::PointCloud known;
  known.positions.resize(3, 3);
  known.positions << 0, 0, 0, 2, 0, 0, 10, 10, 10;
  known.features.resize(3, 2);
  known.features << 1, 2, 1, 2, 5, -5;

  Points q(2, 3);
  q << 2, 0, 0, 1, 0, 0;
  const auto f = geom::interpolate_features(known, q);
  CHECK(f(0, 0) == 1.0);
  CHECK(f(0, 1) == 2.0);
  // Midpoint of two points sharing feature f: the far third point has tiny weight.
  CHECK(f(1, 0) == doctest::Approx(1.0).epsilon(1e-2));

  geom::PointCloud empty;
  empty.features.resize(0, 2);
  CHECK_THROWS_AS(geom::interpolate_features(empty, q), ArgumentError);
}

TEST_CASE("interpolation of a pair with identical features is exact at the midpoint") {
  geom::PointCloud known;
  known.positions.resize(2, 3);
  known.positions << 0, 0, 0, 2, 0, 0;
  known.features.resize(2, 1);
  known.features << 3.5, 3.5;
  Points q(1, 3);
  q << 1, 0, 0;
  CHECK(geom::interpolate_features(known, q)(0, 0) == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("interpolation weights recomputed directly") {
  std::mt19937_64 rng(6);
  const Points known = testing::random_points(40, rng);
  const Points q = testing::random_points(25, rng);
  const auto plan = geom::interpolation_plan(known, q);
  REQUIRE(plan.width == 3);
  for (std::size_t i = 0; i < 25; ++i) {
    const auto expect = brute_knn(known, q.row(Eigen::Index(i)), 3);
    double raw[3], total = 0;
    for (int j = 0; j < 3; ++j) {
      const double d2 = (known.row(Eigen::Index(expect[j])) - q.row(Eigen::Index(i))).squaredNorm();
      raw[j] = 1.0 / (d2 + geom::kInterpolationEps);
      total += raw[j];
    }
    double sum = 0;
    for (int j = 0; j < 3; ++j) {
      CHECK(plan.indices[i * 3 + j] == expect[j]);
      CHECK(plan.weights[i * 3 + j] >= 0.0);
      CHECK(plan.weights[i * 3 + j] == doctest::Approx(raw[j] / total).epsilon(1e-12));
      sum += plan.weights[i * 3 + j];
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }

  geom::PointCloud cloud;
  cloud.positions = known;
  cloud.features = geom::RowMatrix::Random(40, 4);
  const auto f = geom::interpolate_features(cloud, q);
  for (std::size_t i = 0; i < 25; ++i) {
    for (int c = 0; c < 4; ++c) {
      double lo = 1e300, hi = -1e300;
      for (int j = 0; j < 3; ++j) {
        const double v = cloud.features(Eigen::Index(plan.indices[i * 3 + j]), c);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(f(Eigen::Index(i), c) >= lo - 1e-12);
      CHECK(f(Eigen::Index(i), c) <= hi + 1e-12);
    }
  }
}

TEST_CASE("block_split") {
  std::mt19937_64 rng(7);
  geom::PointCloud room;
  room.positions = testing::random_points(400, rng, 2.0);  // [-2,2]^3
  room.labels.assign(400, 0);
  for (int i = 0; i < 400; ++i) room.labels[std::size_t(i)] = i % 3;
  const auto blocks = geom::block_split(room, 2.0, 64, 11);
  CHECK(blocks.size() == 4);
  for (const auto& b : blocks) {
    CHECK(b.size() == 64);
    CHECK(b.labels.size() == 64);
  }
  const auto again = geom::block_split(room, 2.0, 64, 11);
  for (std::size_t i = 0; i < blocks.size(); ++i) CHECK(blocks[i].positions == again[i].positions);

  geom::PointCloud small;
  small.positions = testing::random_points(10, rng, 0.5);
  const auto one = geom::block_split(small, 2.0, 4096, 3);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 4096);
  std::set<std::size_t> seen;
  for (Eigen::Index i = 0; i < one[0].positions.rows(); ++i) {
    bool found = false;
    for (Eigen::Index j = 0; j < 10; ++j) {
      if (one[0].positions.row(i) == small.positions.row(j)) {
        found = true;
        seen.insert(std::size_t(j));
      }
    }
    CHECK(found);
  }
  CHECK(seen.size() == 10);
}

TEST_CASE("point cloud validation") {
  geom::PointCloud c;
  c.positions = Points::Zero(3, 3);
  c.normals = Points::Zero(3, 3);
  CHECK_THROWS_AS(c.validate(), ContractError);
  c.normals.col(2).setOnes();
  c.validate();
  c.labels = {0, 1, 5};
  CHECK_THROWS_AS(c.validate(3), ContractError);
  c.labels = {0, 1};
  CHECK_THROWS_AS(c.validate(), ContractError);
  c.labels = {0, 1, 2};
  const auto s = c.subset({2, 0});
  CHECK(s.size() == 2);
  CHECK(s.labels == std::vector<int>{2, 0});
}
