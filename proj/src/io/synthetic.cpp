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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "gstran/errors.hpp"
#include "gstran/geom/ops.hpp"
#include "gstran/io.hpp"

namespace gstran::io {

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::plane_with_fin: return "plane_with_fin";
    case ShapeFamily::two_boxes: return "two_boxes";
    case ShapeFamily::l_bracket: return "l_bracket";
  }
  return "plane_with_fin";
}

ShapeFamily parse_shape_family(const std::string& s) {
  if (s == "plane_with_fin") return ShapeFamily::plane_with_fin;
  if (s == "two_boxes") return ShapeFamily::two_boxes;
  if (s == "l_bracket") return ShapeFamily::l_bracket;
  throw ArgumentError("unknown shape family '" + s + "' (plane_with_fin, two_boxes, l_bracket)");
}

namespace {

using Vec3 = Eigen::Vector3d;

struct Sample {
  Vec3 p;
  Vec3 n;
};

// Axis-aligned rectangle: origin + u * a + v * b, u, v in [0, 1].
struct Rect {
  Vec3 origin, a, b, normal;
  double area() const { return a.norm() * b.norm(); }
};

Sample sample_rect(const Rect& r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = u(rng), t = u(rng);
  return {r.origin + s * r.a + t * r.b, r.normal};
}

Sample sample_rects(const std::vector<Rect>& rects, std::mt19937_64& rng) {
  double total = 0.0;
  for (const auto& r : rects) total += r.area();
  std::uniform_real_distribution<double> u(0.0, total);
  double pick = u(rng);
  for (const auto& r : rects) {
    if (pick < r.area()) return sample_rect(r, rng);
    pick -= r.area();
  }
  return sample_rect(rects.back(), rng);
}

// Closed box surface with outward normals; `skip_bottom` drops the face
// resting on another box.
std::vector<Rect> box_faces(const Vec3& lo, const Vec3& hi, bool skip_bottom) {
  const Vec3 d = hi - lo;
  const Vec3 ex(d.x(), 0, 0), ey(0, d.y(), 0), ez(0, 0, d.z());
  std::vector<Rect> f{
      {Vec3(lo.x(), lo.y(), hi.z()), ex, ey, Vec3(0, 0, 1)},
      {lo, ey, ez, Vec3(-1, 0, 0)},
      {Vec3(hi.x(), lo.y(), lo.z()), ey, ez, Vec3(1, 0, 0)},
      {lo, ex, ez, Vec3(0, -1, 0)},
      {Vec3(lo.x(), hi.y(), lo.z()), ex, ez, Vec3(0, 1, 0)},
  };
  if (!skip_bottom) f.push_back({lo, ex, ey, Vec3(0, 0, -1)});
  return f;
}

std::pair<std::vector<Rect>, std::vector<Rect>> family_parts(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::plane_with_fin:
      return {{{Vec3(-1, -1, 0), Vec3(2, 0, 0), Vec3(0, 2, 0), Vec3(0, 0, 1)}},
              {{Vec3(0, -1, 0), Vec3(0, 2, 0), Vec3(0, 0, 1), Vec3(1, 0, 0)}}};
    case ShapeFamily::two_boxes:
      return {box_faces(Vec3(0, 0, 0), Vec3(1, 1, 1), false),
              box_faces(Vec3(0.25, 0.25, 1), Vec3(0.75, 0.75, 1.5), true)};
    case ShapeFamily::l_bracket:
      return {{{Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}},
              {{Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(1, 0, 0)}}};
  }
  throw ArgumentError("unknown shape family");
}

}  // namespace

geom::PointCloud synthetic_cloud(ShapeFamily family, std::size_t points, double noise, double ratio,
                                 std::uint64_t seed) {
  if (points < 2) throw ArgumentError("synthetic_cloud: need at least 2 points");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError("synthetic_cloud: ratio must lie in (0, 1)");
  if (noise < 0.0) throw ArgumentError("synthetic_cloud: noise must be non-negative");
  const auto second = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(double(points) * ratio)), 1, points - 1);
  const auto [part0, part1] = family_parts(family);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::size_t> order(points);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  geom::PointCloud cloud;
  cloud.positions.resize(static_cast<Eigen::Index>(points), 3);
  cloud.normals.resize(static_cast<Eigen::Index>(points), 3);
  cloud.labels.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    const int label = i < points - second ? 0 : 1;
    Sample s = sample_rects(label == 0 ? part0 : part1, rng);
    if (noise > 0.0) s.p += noise * Vec3(gauss(rng), gauss(rng), gauss(rng));
    const auto row = static_cast<Eigen::Index>(order[i]);
    cloud.positions.row(row) = s.p.transpose();
    cloud.normals.row(row) = s.n.transpose();
    cloud.labels[order[i]] = label;
  }
  return cloud;
}

double mixed_neighborhood_fraction(const geom::PointCloud& cloud, std::size_t k) {
  if (!cloud.has_labels() || cloud.size() == 0) throw ArgumentError("mixed_neighborhood_fraction: unlabeled cloud");
  const auto nn = geom::knn(cloud.positions, cloud.positions, std::min(k, cloud.size()));
  std::size_t mixed = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto idx = nn.row_indices(i);
    const int first = cloud.labels[idx[0]];
    mixed += std::any_of(idx.begin(), idx.end(), [&](std::size_t j) { return cloud.labels[j] != first; });
  }
  return double(mixed) / double(cloud.size());
}

void generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (spec.train_count == 0) throw ArgumentError("generate_synthetic: train count must be positive");
  fs::create_directories(out_dir / "train");
  fs::create_directories(out_dir / "test");
  const auto write_split = [&](const std::string& split, std::size_t count, std::uint64_t seed0) {
    std::ofstream list(out_dir / (split + ".txt"));
    if (!list) throw DataError("cannot write " + (out_dir / (split + ".txt")).string());
    for (std::size_t i = 0; i < count; ++i) {
      const auto cloud = synthetic_cloud(spec.family, spec.points, spec.noise, spec.ratio, seed0 + i);
      const double mixed = mixed_neighborhood_fraction(cloud, kMixedNeighborhoodK);
      if (mixed < kMinMixedFraction) {
        throw ContractError("generate_synthetic: " + split + " cloud " + std::to_string(i) +
                            " has only " + std::to_string(mixed) + " mixed-label neighborhoods");
      }
      char name[64];
      std::snprintf(name, sizeof name, "cloud_%05zu.xyz", i);
      write_xyz_table(cloud, out_dir / split / name);
      list << split << "/" << name << "\n";
    }
  };
  write_split("train", spec.train_count, spec.seed);
  write_split("test", spec.test_count, spec.seed + spec.train_count);

  std::ofstream manifest(out_dir / "manifest.txt");
  if (!manifest) throw DataError("cannot write " + (out_dir / "manifest.txt").string());
  const char* names = spec.family == ShapeFamily::plane_with_fin ? "plane,fin"
                      : spec.family == ShapeFamily::two_boxes    ? "base,top"
                                                                 : "plate,wall";
  manifest << "format=xyz_table\nmode=semantic\nclass_count=2\nclasses=" << names
           << "\ntrain_list=train.txt\ntest_list=test.txt\nfamily=" << to_string(spec.family)
           << "\npoints=" << spec.points << "\nnoise=" << spec.noise << "\nratio=" << spec.ratio
           << "\nseed=" << spec.seed << "\n";
}

}  // namespace gstran::io
