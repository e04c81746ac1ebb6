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
#include <sstream>

#include "gstran/errors.hpp"
#include "gstran/io.hpp"

namespace gstran::io {

Rgb label_color(int label) {
  const int i = ((label % 16) + 16) % 16;
  return kLabelPalette[static_cast<std::size_t>(i)];
}

Rgb ramp_color(double value) {
  const double v = std::isnan(value) ? 0.0 : std::clamp(value, 0.0, 1.0);
  const double pos = v * double(kWeightRamp.size() - 1);
  const auto lo = std::min(static_cast<std::size_t>(pos), kWeightRamp.size() - 2);
  const double t = pos - double(lo);
  Rgb out{};
  for (std::size_t c = 0; c < 3; ++c) {
    const double a = kWeightRamp[lo][c], b = kWeightRamp[lo + 1][c];
    out[c] = static_cast<std::uint8_t>(std::lround(a + t * (b - a)));
  }
  return out;
}

std::string to_string(ColorBy c) {
  switch (c) {
    case ColorBy::label: return "label";
    case ColorBy::prediction: return "prediction";
    case ColorBy::weight_scalar: return "weight";
  }
  return "label";
}

ColorBy parse_color_by(const std::string& s) {
  if (s == "label") return ColorBy::label;
  if (s == "prediction") return ColorBy::prediction;
  if (s == "weight" || s == "weight_scalar") return ColorBy::weight_scalar;
  throw ArgumentError("unknown color source '" + s + "' (label, prediction, weight)");
}

void write_ply(const geom::PointCloud& cloud, const std::filesystem::path& path, ColorBy color_by,
               std::span<const int> prediction, std::span<const double> scalar) {
  const std::size_t n = cloud.size();
  const auto require = [&](bool ok, const char* what) {
    if (!ok) throw ArgumentError(std::string("write_ply: coloring by ") + what + " needs " +
                                 std::to_string(n) + " " + what + " values");
  };
  switch (color_by) {
    case ColorBy::label: require(cloud.labels.size() == n && n > 0, "label"); break;
    case ColorBy::prediction: require(prediction.size() == n && n > 0, "prediction"); break;
    case ColorBy::weight_scalar: require(scalar.size() == n && n > 0, "weight"); break;
  }
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw DataError("cannot write " + path.string());
  std::fprintf(f,
               "ply\nformat ascii 1.0\ncomment gstran\ncomment color_by %s\nelement vertex %zu\n"
               "property float x\nproperty float y\nproperty float z\n"
               "property uchar red\nproperty uchar green\nproperty uchar blue\n"
               "property float value\nend_header\n",
               to_string(color_by).c_str(), n);
  for (std::size_t i = 0; i < n; ++i) {
    Rgb rgb{};
    double value = 0.0;
    switch (color_by) {
      case ColorBy::label:
        rgb = label_color(cloud.labels[i]);
        value = cloud.labels[i];
        break;
      case ColorBy::prediction:
        rgb = label_color(prediction[i]);
        value = prediction[i];
        break;
      case ColorBy::weight_scalar:
        rgb = ramp_color(scalar[i]);
        value = scalar[i];
        break;
    }
    const auto r = static_cast<Eigen::Index>(i);
    std::fprintf(f, "%.9g %.9g %.9g %u %u %u %.9g\n", cloud.positions(r, 0), cloud.positions(r, 1),
                 cloud.positions(r, 2), unsigned(rgb[0]), unsigned(rgb[1]), unsigned(rgb[2]), value);
  }
  if (std::fclose(f) != 0) throw DataError("failed writing " + path.string());
}

PlyData read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string where = path.string();
  std::string line;
  std::size_t number = 0, n = 0;
  bool have_count = false;
  PlyData data;
  const auto fail = [&](const std::string& msg) -> void {
    throw ParseError(where + ":" + std::to_string(number) + ": " + msg, number);
  };
  if (!std::getline(in, line) || line != "ply") {
    number = 1;
    fail("missing 'ply' magic");
  }
  ++number;
  while (std::getline(in, line)) {
    ++number;
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "format") {
      std::string kind;
      ss >> kind;
      if (kind != "ascii") fail("only ascii ply is supported");
    } else if (word == "comment") {
      std::string key, value;
      ss >> key >> value;
      if (key == "color_by") data.color_by = value;
    } else if (word == "element") {
      std::string name;
      ss >> name >> n;
      if (name != "vertex" || !ss) fail("expected 'element vertex <count>'");
      have_count = true;
    } else if (word != "property") {
      fail("unexpected header line '" + line + "'");
    }
  }
  if (!have_count) fail("no vertex count in header");
  data.positions.resize(static_cast<Eigen::Index>(n), 3);
  data.colors.resize(n);
  data.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) fail("expected " + std::to_string(n) + " vertices");
    ++number;
    std::istringstream ss(line);
    // Properties are declared float; parsing as float keeps the round trip exact.
    float x, y, z, value;
    unsigned r, g, b;
    if (!(ss >> x >> y >> z >> r >> g >> b >> value) || r > 255 || g > 255 || b > 255) {
      fail("malformed vertex row");
    }
    data.positions.row(static_cast<Eigen::Index>(i)) << double(x), double(y), double(z);
    data.colors[i] = {std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)};
    data.values[i] = value;
  }
  return data;
}

}  // namespace gstran::io
