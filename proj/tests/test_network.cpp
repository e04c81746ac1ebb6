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
#include <filesystem>
#include <fstream>
#include <numeric>

#include "gstran/errors.hpp"
#include "gstran/network.hpp"
#include "gstran/training.hpp"
#include "test_support.hpp"

using namespace gstran;
using diff::Array;

namespace {

ModelConfig toy_config(std::size_t classes = 4) {
  ModelConfig c;
  c.stage_count = 2;
  c.base_channels = 16;
  c.k_neighbors = 16;
  c.head_count = 4;
  c.class_count = classes;
  return c;
}

geom::PointCloud random_cloud(std::size_t n, std::uint64_t seed, std::size_t classes = 4) {
  std::mt19937_64 rng(seed);
  geom::PointCloud c;
  c.positions = testing::random_points(n, rng);
  c.normals = testing::random_unit_normals(n, rng);
  std::uniform_int_distribution<int> lab(0, int(classes) - 1);
  for (std::size_t i = 0; i < n; ++i) c.labels.push_back(lab(rng));
  return c;
}

template <typename T>
void zero_all(Model<T>& m) {
  for (auto& e : m.parameters().entries())
    for (auto& v : e.second.mutable_values()) v = T(0);
}

}  // namespace

TEST_CASE("config schedule arithmetic") {
  ModelConfig c;
  CHECK(c.top_channels() == 512);
  CHECK(c.total_downsample() == 256);
  for (std::size_t s = 0; s < 5; ++s) CHECK(c.channels_at(s) == (32u << s));
  c.head_count = 3;
  CHECK_THROWS_AS(c.validate(), ArgumentError);

  ModelConfig d = toy_config();
  d.combine_op = CombineOp::concat;
  d.global_mode = GlobalMode::mask;
  d.precision = Precision::f64;
  d.dropout = 0.25;
  const auto back = ModelConfig::from_key_values(d.to_key_values());
  CHECK(back.to_key_values().format() == d.to_key_values().format());
}

TEST_CASE("embed") {
  Model<double> m(ModelConfig{}, 1);
  const auto cloud = random_cloud(10, 1);
  const auto e = m.embed(cloud.positions, cloud.normals);
  CHECK(e.shape() == diff::Shape{10, 32});
  zero_all(m);
  const auto embedded = m.embed(cloud.positions, cloud.normals);
  for (double v : embedded.values()) CHECK(v == 0.0);
}

TEST_CASE("embed gradient") {
  Model<double> m(toy_config(), 2);
  const auto cloud = random_cloud(8, 2);
  std::vector<Array<double>> in;
  for (auto& e : m.parameters().entries())
    if (e.first.rfind("embed.", 0) == 0) in.push_back(e.second);
  REQUIRE(in.size() == 4);
  const auto f = [&](const std::vector<Array<double>>&) { return testing::probe(m.embed(cloud.positions, cloud.normals)); };
  CHECK(testing::gradient_check<double>(in, f, 1e-7) < 1e-5);
}

TEST_CASE("default stage schedule on 2048 points") {
  Model<float> m(ModelConfig{}, 3);
  const auto r = m.forward(random_cloud(2048, 3, 13));
  const std::vector<std::size_t> points{2048, 512, 128, 32, 8}, channels{32, 64, 128, 256, 512};
  REQUIRE(r.encoder_shapes.size() == 5);
  for (std::size_t s = 0; s < 5; ++s) CHECK(r.encoder_shapes[s] == StageShape{points[s], channels[s]});
  REQUIRE(r.decoder_shapes.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.decoder_shapes[i] == StageShape{points[3 - i], channels[3 - i]});
  CHECK(r.logits.shape() == diff::Shape{2048, 13});
}

TEST_CASE("stage shapes follow the closed form for odd sizes") {
  ModelConfig c;
  c.base_channels = 8;
  c.head_count = 2;
  Model<float> m(c, 4);
  const std::size_t n = 300;
  const auto r = m.forward(random_cloud(n, 4, 13));
  std::size_t pts = n;
  for (std::size_t s = 0; s < 5; ++s) {
    CHECK(r.encoder_shapes[s] == StageShape{pts, 8u << s});
    pts = (pts + 3) / 4;
  }
  CHECK(r.logits.shape() == diff::Shape{n, 13});
  CHECK_FALSE(r.warnings.empty());  // k = 24 exceeds the coarse point counts
}

TEST_CASE("toy model forward and backward are finite") {
  Model<double> m(toy_config(), 5);
  const auto cloud = random_cloud(64, 5);
  diff::Tape<double> tape;
  auto scope = tape.activate();
  const auto r = m.forward(cloud);
  for (double v : r.logits.values()) CHECK(std::isfinite(v));
  tape.backward(cross_entropy_loss(r.logits, cloud.labels));
  for (const auto& [name, p] : m.parameters().entries()) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) CHECK(std::isfinite(g));
  }
}

TEST_CASE("interpolate_and_concat of constant coarse features") {
  std::mt19937_64 rng(6);
  const auto coarse = testing::random_points(5, rng);
  const auto fine = testing::random_points(20, rng);
  const auto c = Array<double>::from({5, 2}, {1.5, -2, 1.5, -2, 1.5, -2, 1.5, -2, 1.5, -2});
  const auto out = interpolate_and_concat(coarse, c, fine, Array<double>::zeros({20, 3}));
  REQUIRE(out.shape() == diff::Shape{20, 5});
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(out.at(i, 0) == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(out.at(i, 1) == doctest::Approx(-2.0).epsilon(1e-14));
    for (std::size_t j = 2; j < 5; ++j) CHECK(out.at(i, j) == 0.0);
  }
}

TEST_CASE("decoder stage rejects mismatched resolutions") {
  Model<double> m(toy_config(), 7);
  const auto cloud = random_cloud(32, 7);
  StageState<double> s0{cloud.positions, cloud.normals, m.embed(cloud.positions, cloud.normals)};
  StageState<double> skip;
  const auto coarse = m.encoder_stage(s0, 0, 0, &skip);
  CHECK(coarse.positions.rows() == 8);
  CHECK(m.decoder_stage(coarse, skip, 0).features.shape() == diff::Shape{32, 16});
  StageState<double> bad = coarse;
  bad.positions = bad.positions.topRows(5).eval();
  bad.normals = bad.normals.topRows(5).eval();
  bad.features = diff::gather_rows<double>(coarse.features, std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(m.decoder_stage(bad, skip, 0), ContractError);
}

TEST_CASE("output widths for semantic and part configurations") {
  ModelConfig sem = toy_config(13);
  CHECK(Model<float>(sem, 1).forward(random_cloud(40, 8, 13)).logits.shape() == diff::Shape{40, 13});
  ModelConfig part = toy_config(50);
  part.category_count = 16;
  auto cloud = random_cloud(40, 8, 50);
  cloud.category = 3;
  CHECK(Model<float>(part, 1).forward(cloud).logits.shape() == diff::Shape{40, 50});
}

TEST_CASE("full five-stage round trip restores the input resolution") {
  ModelConfig c;
  c.base_channels = 8;
  c.head_count = 2;
  Model<float> m(c, 9);
  const auto r = m.forward(random_cloud(256, 9, 13));
  CHECK(r.decoder_shapes.back() == StageShape{256, 8});
}

TEST_CASE("forward is permutation equivariant with the FPS start mapped") {
  Model<double> m(toy_config(), 10);
  const std::size_t n = 48;
  const auto cloud = random_cloud(n, 10);
  ForwardOptions o;
  o.fps_start = 5;
  const auto base = m.forward(cloud, o);

  std::mt19937_64 rng(11);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto permuted = cloud.subset(perm);
  ForwardOptions po;
  po.fps_start = std::size_t(std::find(perm.begin(), perm.end(), o.fps_start) - perm.begin());
  const auto moved = m.forward(permuted, po);
  double worst = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 4; ++j) worst = std::max(worst, std::abs(moved.logits.at(i, j) - base.logits.at(perm[i], j)));
  CHECK(worst < 1e-10);
}

TEST_CASE("category conditioning") {
  Model<double> plain(toy_config(), 12);
  auto cloud = random_cloud(30, 12);
  const auto a = plain.forward(cloud);
  cloud.category = 2;
  const auto b = plain.forward(cloud);
  CHECK(std::equal(a.logits.values().begin(), a.logits.values().end(), b.logits.values().begin()));

  std::mt19937_64 rng(13);
  const auto f = testing::random_array<double>({4, 3}, rng);
  const std::vector<double> zero(5, 0.0);
  const auto cat = category_conditioning<double>(f, zero, 5);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(cat.at(i, j) == f.at(i, j));
    for (std::size_t j = 3; j < 8; ++j) CHECK(cat.at(i, j) == 0.0);
  }
  CHECK_THROWS_AS(category_conditioning<double>(f, zero, 16), ArgumentError);

  ModelConfig pc = toy_config();
  pc.category_count = 5;
  Model<double> part(pc, 14);
  diff::Tape<double> tape;
  {
    auto scope = tape.activate();
    auto r = part.forward(cloud);
    tape.backward(cross_entropy_loss(r.logits, cloud.labels));
  }
  const Array<double>* w = nullptr;
  for (auto& e : part.parameters().entries())
    if (e.first == "head.0.weight") w = &e.second;
  REQUIRE(w != nullptr);
  REQUIRE(w->dim(0) == 16 + 5);
  double grad_on_category = 0;
  for (std::size_t o = 0; o < w->dim(1); ++o) grad_on_category += std::abs(w->grad()[(16 + 2) * w->dim(1) + o]);
  CHECK(grad_on_category > 0.0);
  for (std::size_t o = 0; o < w->dim(1); ++o) CHECK(w->grad()[(16 + 1) * w->dim(1) + o] == 0.0);

  ForwardOptions bad;
  bad.category = 9;
  CHECK_THROWS_AS(part.forward(cloud, bad), ArgumentError);
}

TEST_CASE("missing normals are estimated") {
  Model<double> m(toy_config(), 15);
  auto cloud = random_cloud(40, 15);
  cloud.normals = geom::Points();
  const auto r = m.forward(cloud);
  CHECK(r.logits.shape() == diff::Shape{40, 4});
}

TEST_CASE("randomized configurations give finite logits") {
  std::mt19937_64 rng(16);
  std::uniform_int_distribution<int> pick(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig c;
    c.stage_count = 1 + std::size_t(pick(rng) % 3);
    c.head_count = std::size_t(1) << (pick(rng) % 3);
    c.base_channels = c.head_count * (1 + std::size_t(pick(rng)));
    c.k_neighbors = 1 + std::size_t(pick(rng)) * 5;
    c.combine_op = static_cast<CombineOp>(pick(rng));
    c.global_mode = static_cast<GlobalMode>(pick(rng));
    c.local_weighting = static_cast<LocalWeighting>(pick(rng) % 3);
    c.single_space = pick(rng) % 2;
    c.class_count = 2 + std::size_t(pick(rng));
    Model<float> m(c, std::uint64_t(trial));
    const auto r = m.forward(random_cloud(5 + std::size_t(trial) % 40, std::uint64_t(trial), c.class_count));
    for (float v : r.logits.values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("end-to-end toy gradient check") {
  const auto cloud = random_cloud(32, 17);
  {
    Model<double> m(toy_config(), 17);
    std::vector<Array<double>> in;
    for (auto& e : m.parameters().entries()) in.push_back(e.second);
    const auto f = [&](const std::vector<Array<double>>&) {
      return cross_entropy_loss(m.forward(cloud).logits, cloud.labels);
    };
    CHECK(testing::gradient_check<double>(in, f, 1e-7) < 1e-5);
  }
  {
    // Float analytic gradients against central differences of the same
    // weights evaluated in double: float rounding swamps any step small
    // enough to stay clear of ReLU kinks.
    Model<float> m(toy_config(), 17);
    CHECK(testing::float_gradient_vs_double_fd(m, [&](const Model<double>& md) {
            return cross_entropy_loss(md.forward(cloud).logits, cloud.labels);
          }, [&](const Model<float>& mf) {
            return cross_entropy_loss(mf.forward(cloud).logits, cloud.labels);
          }) < 1e-3);
  }
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "gstran_ckpt_test";
  std::filesystem::create_directories(dir);
  ModelConfig c = toy_config();
  c.combine_op = CombineOp::sum;
  Model<double> m(c, 18);
  save_checkpoint(m, dir / "m.ckpt");
  const auto back = load_checkpoint<double>(dir / "m.ckpt");
  CHECK(back.config().combine_op == CombineOp::sum);
  CHECK(back.config().precision == Precision::f64);
  const auto& a = m.parameters().entries();
  const auto& b = back.parameters().entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(std::equal(a[i].second.values().begin(), a[i].second.values().end(), b[i].second.values().begin()));
  }
  const auto cloud = random_cloud(20, 18);
  const auto la = m.forward(cloud).logits, lb = back.forward(cloud).logits;
  CHECK(std::equal(la.values().begin(), la.values().end(), lb.values().begin()));

  {
    std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
    bad << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint<double>(dir / "bad.ckpt"), DataError);
  std::filesystem::resize_file(dir / "m.ckpt", std::filesystem::file_size(dir / "m.ckpt") - 9);
  CHECK_THROWS_AS(load_checkpoint<double>(dir / "m.ckpt"), DataError);
  std::filesystem::remove_all(dir);
}
