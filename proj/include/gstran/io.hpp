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

// Point-cloud codecs, synthetic datasets, dataset manifests and attention
// export.
//
// xyz_table: whitespace-separated rows, the column count fixes the layout
//   3: x y z   4: x y z label   6: x y z nx ny nz   7: x y z nx ny nz label
//
// ply (ascii):
//   ply
//   format ascii 1.0
//   comment gstran
//   comment color_by <label|prediction|weight>
//   element vertex <N>
//   property float x / y / z
//   property uchar red / green / blue
//   property float value
//   end_header
//   <N rows: x y z r g b value>

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gstran/geom/point_cloud.hpp"
#include "gstran/metrics.hpp"
#include "gstran/network.hpp"

namespace gstran::io {

geom::PointCloud read_xyz_table(const std::filesystem::path& path);
/// Layout chosen from the fields present; values printed with 17 significant
/// digits, so reading back is exact.
void write_xyz_table(const geom::PointCloud& cloud, const std::filesystem::path& path);

using Rgb = std::array<std::uint8_t, 3>;
inline constexpr std::array<Rgb, 16> kLabelPalette{{
    {31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40},
    {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
    {188, 189, 34}, {23, 190, 207}, {174, 199, 232}, {255, 187, 120},
    {152, 223, 138}, {255, 152, 150}, {197, 176, 213}, {196, 156, 148},
}};
// Viridis stops at 0, 0.25, 0.5, 0.75, 1 with linear interpolation between.
inline constexpr std::array<Rgb, 5> kWeightRamp{{
    {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37},
}};

/// Palette entry label mod 16.
Rgb label_color(int label);
/// Ramp color for a value clamped to [0, 1].
Rgb ramp_color(double value);

enum class ColorBy { label, prediction, weight_scalar };
std::string to_string(ColorBy c);
ColorBy parse_color_by(const std::string& s);

/// `prediction` is required for ColorBy::prediction, `scalar` for
/// ColorBy::weight_scalar; ArgumentError when the source is missing.
void write_ply(const geom::PointCloud& cloud, const std::filesystem::path& path, ColorBy color_by,
               std::span<const int> prediction = {}, std::span<const double> scalar = {});

struct PlyData {
  geom::Points positions;
  std::vector<Rgb> colors;
  std::vector<double> values;
  std::string color_by;
};
/// Reads files in the layout written by write_ply.
PlyData read_ply(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic shapes

enum class ShapeFamily { plane_with_fin, two_boxes, l_bracket };
std::string to_string(ShapeFamily f);
ShapeFamily parse_shape_family(const std::string& s);

struct SyntheticSpec {
  ShapeFamily family = ShapeFamily::plane_with_fin;
  std::size_t points = 512;
  double noise = 0.0;   // Gaussian sigma applied to positions
  double ratio = 0.5;   // fraction of points on the second part
  std::size_t train_count = 200;
  std::size_t test_count = 50;
  std::uint64_t seed = 0;
};

/// One cloud with analytic normals and two labels.
///   plane_with_fin: plane z = 0 over [-1,1]^2 (label 0) and a fin x = 0,
///                   y in [-1,1], z in [0,1] (label 1, normal +x)
///   two_boxes:      unit-cube surface (label 0) with a half-size cube
///                   surface stacked on top (label 1)
///   l_bracket:      plate z = 0 over [0,2]x[0,1] (label 0) and wall x = 0,
///                   z in [0,1] (label 1)
/// Second-part point count is round(points * ratio).
geom::PointCloud synthetic_cloud(ShapeFamily family, std::size_t points, double noise, double ratio,
                                 std::uint64_t seed);

/// Fraction of points whose k nearest neighbors (self included) carry more
/// than one label.
double mixed_neighborhood_fraction(const geom::PointCloud& cloud, std::size_t k);

inline constexpr double kMinMixedFraction = 0.05;
inline constexpr std::size_t kMixedNeighborhoodK = 24;

/// Writes train/ and test/ clouds as 7-column xyz tables, the list files
/// train.txt and test.txt, and manifest.txt. Cloud i of a split uses seed
/// spec.seed + i (test clouds offset by train_count). ContractError if a
/// cloud has fewer than kMinMixedFraction mixed neighborhoods.
void generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Datasets

enum class DatasetMode { semantic, part };

struct DatasetManifest {
  std::filesystem::path root;
  std::string format = "xyz_table";
  DatasetMode mode = DatasetMode::semantic;
  std::size_t class_count = 0;
  std::vector<std::string> class_names;
  std::vector<std::filesystem::path> train, val, test;  // relative to root
  CategoryParts category_parts;  // part mode
};

/// Reads `root/manifest.txt`:
///   format=xyz_table  mode=semantic|part  class_count=N  classes=a,b,...
///   train_list=train.txt  val_list=...  test_list=test.txt
///   categories=0:0,1,2;1:3,4     (part mode; category:parts)
/// Files in a part-mode split are named "<category>_<anything>.xyz".
/// DataError for a missing manifest, list or listed file.
DatasetManifest read_manifest(const std::filesystem::path& root);

/// Loads one split and checks labels against the class count (DataError).
std::vector<geom::PointCloud> load_split(const DatasetManifest& manifest,
                                         const std::vector<std::filesystem::path>& files);

// ---------------------------------------------------------------------------
// Attention export

/// Runs the model with attention capture and writes, for the last global
/// block executed, row `query` of each per-head map (head<h>) and of the
/// global_similarity, global_mask and refined maps, each as <name>.ply
/// (colored by value / row max) and <name>.txt (one value per line). Maps
/// the configured global mode does not compute are skipped. Returns the
/// written paths. ArgumentError if query >= N.
template <typename T>
std::vector<std::filesystem::path> dump_attention(const Model<T>& model, const geom::PointCloud& cloud,
                                                  std::size_t query,
                                                  const std::filesystem::path& out_dir);

}  // namespace gstran::io
