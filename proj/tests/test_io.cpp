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
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gstran/errors.hpp"
#include "gstran/io.hpp"

using namespace gstran;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("gstran_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

geom::PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, bool normals, bool labels) {
  std::uniform_real_distribution<double> u(-10, 10);
  geom::PointCloud c;
  c.positions.resize(Eigen::Index(n), 3);
  for (Eigen::Index i = 0; i < c.positions.size(); ++i) c.positions.data()[i] = u(rng);
  if (normals) {
    std::normal_distribution<double> g;
    c.normals.resize(Eigen::Index(n), 3);
    for (Eigen::Index i = 0; i < Eigen::Index(n); ++i) {
      Eigen::Vector3d v(g(rng), g(rng), g(rng) + 1e-3);
      c.normals.row(i) = v.normalized().transpose();
    }
  }
  if (labels) {
    std::uniform_int_distribution<int> l(0, 12);
    for (std::size_t i = 0; i < n; ++i) c.labels.push_back(l(rng));
  }
  return c;
}

ModelConfig small_config() {
  ModelConfig c;
  c.stage_count = 2;
  c.base_channels = 8;
  c.k_neighbors = 8;
  c.head_count = 2;
  c.class_count = 2;
  return c;
}

}  // namespace

TEST_CASE("xyz table widths") {
  const auto dir = scratch("xyz");
  {
    std::string text;
    for (int i = 0; i < 100; ++i) text += std::to_string(i) + " 1 2\n";
    write_text(dir / "a.xyz", text);
    const auto c = io::read_xyz_table(dir / "a.xyz");
    CHECK(c.size() == 100);
    CHECK_FALSE(c.has_normals());
    CHECK_FALSE(c.has_labels());
    CHECK(c.positions(42, 0) == 42.0);
  }
  {
    write_text(dir / "b.xyz", "0 0 0 0 0 1 2\n");
    const auto c = io::read_xyz_table(dir / "b.xyz");
    CHECK(c.positions.row(0).norm() == 0.0);
    CHECK(c.normals(0, 2) == 1.0);
    CHECK(c.labels == std::vector<int>{2});
  }
  {
    write_text(dir / "c.xyz", "1 2 3 4\n1 2 3 5\n");
    const auto c = io::read_xyz_table(dir / "c.xyz");
    CHECK(c.labels == std::vector<int>{4, 5});
  }
  write_text(dir / "d.xyz", "0 0 0\n1 2 3 4 5\n");
  try {
    io::read_xyz_table(dir / "d.xyz");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  write_text(dir / "e.xyz", "0 0 0 1.5\n");
  CHECK_THROWS_AS(io::read_xyz_table(dir / "e.xyz"), ParseError);
  write_text(dir / "f.xyz", "0 0 0\n0 0 0 1\n");
  CHECK_THROWS_AS(io::read_xyz_table(dir / "f.xyz"), ParseError);
  write_text(dir / "g.xyz", "0 0 x\n");
  CHECK_THROWS_AS(io::read_xyz_table(dir / "g.xyz"), ParseError);
  CHECK_THROWS_AS(io::read_xyz_table(dir / "missing.xyz"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("xyz round trip on random clouds") {
  const auto dir = scratch("xyz_rt");
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_cloud(rng, 1 + std::size_t(trial % 37), trial % 2 == 0, trial % 3 != 0);
    io::write_xyz_table(c, dir / "c.xyz");
    const auto back = io::read_xyz_table(dir / "c.xyz");
    CHECK(back.positions == c.positions);
    CHECK(back.labels == c.labels);
    CHECK(back.has_normals() == c.has_normals());
    if (c.has_normals()) CHECK((back.normals - c.normals).cwiseAbs().maxCoeff() <= 1e-9);
  }
  fs::remove_all(dir);
}

TEST_CASE("ply layout") {
  const auto dir = scratch("ply");
  geom::PointCloud c;
  c.positions = geom::Points::Zero(1, 3);
  c.labels = {0};
  io::write_ply(c, dir / "one.ply", io::ColorBy::label);
  const auto text = read_text(dir / "one.ply");
  CHECK(std::count(text.begin(), text.end(), '\n') == 14);
  CHECK(text.find("element vertex 1\n") != std::string::npos);
  CHECK(text.rfind("ply\n", 0) == 0);

  CHECK_THROWS_AS(io::write_ply(c, dir / "x.ply", io::ColorBy::prediction), ArgumentError);
  CHECK_THROWS_AS(io::write_ply(c, dir / "x.ply", io::ColorBy::weight_scalar), ArgumentError);
  geom::PointCloud unlabeled;
  unlabeled.positions = geom::Points::Zero(1, 3);
  CHECK_THROWS_AS(io::write_ply(unlabeled, dir / "x.ply", io::ColorBy::label), ArgumentError);
  fs::remove_all(dir);
}

TEST_CASE("color ramp and palette") {
  CHECK(io::ramp_color(0.0) == io::kWeightRamp[0]);
  CHECK(io::ramp_color(1.0) == io::kWeightRamp[4]);
  CHECK(io::ramp_color(-3.0) == io::kWeightRamp[0]);
  CHECK(io::ramp_color(7.0) == io::kWeightRamp[4]);
  CHECK(io::ramp_color(0.5) == io::kWeightRamp[2]);
  const auto mid = io::ramp_color(0.125);
  for (int ch = 0; ch < 3; ++ch) {
    const double expect = 0.5 * (io::kWeightRamp[0][ch] + io::kWeightRamp[1][ch]);
    CHECK(std::abs(double(mid[ch]) - expect) <= 0.5);
  }
  CHECK(io::label_color(0) == io::kLabelPalette[0]);
  CHECK(io::label_color(17) == io::kLabelPalette[1]);
  CHECK(io::parse_color_by("weight") == io::ColorBy::weight_scalar);
  CHECK_THROWS_AS(io::parse_color_by("rainbow"), ArgumentError);
}

TEST_CASE("ply round trip on random clouds") {
  const auto dir = scratch("ply_rt");
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto c = random_cloud(rng, 1 + std::size_t(trial % 29), false, true);
    // Positions representable in 9 significant digits.
    c.positions = c.positions.cast<float>().cast<double>();
    std::vector<double> w(c.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = double(i) / double(w.size());
    const auto mode = trial % 2 ? io::ColorBy::label : io::ColorBy::weight_scalar;
    io::write_ply(c, dir / "c.ply", mode, {}, w);
    const auto back = io::read_ply(dir / "c.ply");
    CHECK(back.positions == c.positions);
    CHECK(back.color_by == io::to_string(mode));
    REQUIRE(back.colors.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(back.colors[i] == (mode == io::ColorBy::label ? io::label_color(c.labels[i]) : io::ramp_color(w[i])));
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("synthetic shapes") {
  for (auto family : {io::ShapeFamily::plane_with_fin, io::ShapeFamily::two_boxes, io::ShapeFamily::l_bracket}) {
    const auto c = io::synthetic_cloud(family, 512, 0.0, 0.5, 11);
    CHECK(c.size() == 512);
    c.validate(2);
    const auto ones = std::count(c.labels.begin(), c.labels.end(), 1);
    CHECK(std::abs(double(ones) - 256.0) <= 1.0);
    CHECK(io::mixed_neighborhood_fraction(c, io::kMixedNeighborhoodK) >= io::kMinMixedFraction);
  }
  const auto c = io::synthetic_cloud(io::ShapeFamily::plane_with_fin, 512, 0.0, 0.5, 12);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Eigen::Vector3d n = c.normals.row(Eigen::Index(i)).transpose();
    const Eigen::Vector3d axis = c.labels[i] == 0 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX();
    CHECK(std::abs(std::abs(n.dot(axis)) - 1.0) < 1e-12);
    if (c.labels[i] == 0) CHECK(c.positions(Eigen::Index(i), 2) == 0.0);
    else CHECK(c.positions(Eigen::Index(i), 0) == 0.0);
  }
  const auto c2 = io::synthetic_cloud(io::ShapeFamily::plane_with_fin, 512, 0.0, 0.5, 12);
  CHECK(c2.positions == c.positions);
  CHECK(c2.labels == c.labels);
  for (double ratio : {0.1, 0.3, 0.77}) {
    const auto r = io::synthetic_cloud(io::ShapeFamily::l_bracket, 301, 0.01, ratio, 1);
    const auto ones = std::count(r.labels.begin(), r.labels.end(), 1);
    CHECK(std::abs(double(ones) - 301 * ratio) <= 1.0);
  }
}

TEST_CASE("synthetic dataset on disk is deterministic and loadable") {
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  io::SyntheticSpec spec;
  spec.points = 128;
  spec.train_count = 4;
  spec.test_count = 2;
  spec.noise = 0.01;
  spec.seed = 7;
  io::generate_synthetic(spec, a);
  io::generate_synthetic(spec, b);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    CHECK(read_text(e.path()) == read_text(b / fs::relative(e.path(), a)));
  }
  const auto m = io::read_manifest(a);
  CHECK(m.class_count == 2);
  CHECK(m.train.size() == 4);
  CHECK(m.test.size() == 2);
  const auto train = io::load_split(m, m.train);
  CHECK(train.size() == 4);
  CHECK(train[0].size() == 128);
  CHECK(train[0].has_normals());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("manifest errors") {
  const auto dir = scratch("manifest");
  CHECK_THROWS_AS(io::read_manifest(dir), DataError);
  write_text(dir / "manifest.txt", "class_count=2\ntrain_list=train.txt\n");
  CHECK_THROWS_AS(io::read_manifest(dir), DataError);
  write_text(dir / "train.txt", "missing.xyz\n");
  CHECK_THROWS_AS(io::read_manifest(dir), DataError);
  write_text(dir / "ok.xyz", "0 0 0 5\n");
  write_text(dir / "train.txt", "ok.xyz\n");
  const auto m = io::read_manifest(dir);
  CHECK_THROWS_AS(io::load_split(m, m.train), DataError);

  write_text(dir / "manifest.txt", "mode=part\nclass_count=6\ntrain_list=train.txt\ncategories=0:0,1,2;1:3,4,5\n");
  write_text(dir / "1_obj.xyz", "0 0 0 3\n1 0 0 4\n");
  write_text(dir / "train.txt", "1_obj.xyz\n");
  const auto p = io::read_manifest(dir);
  CHECK(p.mode == io::DatasetMode::part);
  CHECK(p.category_parts.at(1) == std::vector<int>{3, 4, 5});
  const auto objs = io::load_split(p, p.train);
  REQUIRE(objs.size() == 1);
  CHECK(objs[0].category == 1);
  fs::remove_all(dir);
}

TEST_CASE("attention export") {
  const auto dir = scratch("attn");
  const auto cloud = io::synthetic_cloud(io::ShapeFamily::plane_with_fin, 64, 0.01, 0.5, 3);
  Model<double> model(small_config(), 2);
  const auto files = io::dump_attention(model, cloud, 5, dir);
  CHECK(files.size() == 2 * (model.config().head_count + 3));
  std::size_t txt = 0;
  for (const auto& f : files) {
    CHECK(fs::exists(f));
    if (f.extension() != ".txt") continue;
    ++txt;
    std::ifstream in(f);
    double v = 0, total = 0;
    std::size_t count = 0;
    while (in >> v) {
      total += v;
      ++count;
      CHECK(v >= 0.0);
    }
    CHECK(count == cloud.size());
    CHECK(std::abs(total - 1.0) <= 1e-6);
  }
  CHECK(txt == model.config().head_count + 3);
  CHECK_THROWS_AS(io::dump_attention(model, cloud, 64, dir), ArgumentError);

  Model<double> zero(small_config(), 2);
  for (auto& e : zero.parameters().entries())
    for (auto& v : e.second.mutable_values()) v = 0.0;
  fs::remove_all(dir);
  for (const auto& f : io::dump_attention(zero, cloud, 0, dir)) {
    if (f.extension() != ".txt") continue;
    std::ifstream in(f);
    double v = 0;
    while (in >> v) CHECK(std::abs(v - 1.0 / 64.0) < 1e-15);
  }

  ModelConfig sim_only = small_config();
  sim_only.global_mode = GlobalMode::similarity;
  Model<double> s(sim_only, 2);
  fs::remove_all(dir);
  CHECK(io::dump_attention(s, cloud, 0, dir).size() == 2);
  fs::remove_all(dir);
}
