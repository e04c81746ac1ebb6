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

// Hierarchical encoder-decoder segmentation network.
//
//   embed:    2-layer MLP over (position, normal) -> base_channels
//   encoder:  per stage a local block then a global block; between stages
//             FPS keeps ceil(N / ratio) points and an MLP multiplies the
//             channel width
//   decoder:  per stage 3-NN inverse-distance upsampling, concat with the
//             encoder skip, fuse MLP, local block, global block
//   head:     2-layer MLP -> class logits
//
// At the defaults (5 stages, 32 base channels, x2, 1/4) a 2048-point cloud
// runs at [2048, 512, 128, 32, 8] points and [32, 64, 128, 256, 512] channels.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gstran/config.hpp"
#include "gstran/diff/array.hpp"
#include "gstran/geom/point_cloud.hpp"
#include "gstran/global_transformer.hpp"
#include "gstran/local_transformer.hpp"
#include "gstran/parameters.hpp"

namespace gstran {

enum class Precision { f32, f64 };

struct ModelConfig {
  std::size_t stage_count = 5;
  std::size_t base_channels = 32;
  std::size_t channel_multiplier = 2;
  std::size_t downsample_ratio = 4;
  std::size_t k_neighbors = 24;
  std::size_t head_count = 4;
  CombineOp combine_op = CombineOp::hadamard;
  LocalWeighting local_weighting = LocalWeighting::combined;
  GlobalMode global_mode = GlobalMode::refined;
  bool renormalize_refined = true;
  bool single_space = true;
  std::size_t class_count = 13;
  bool input_has_normals = true;
  std::size_t normal_k = 16;       // neighbors for automatic normal estimation
  std::size_t category_count = 0;  // > 0 enables one-hot category conditioning
  double dropout = 0.0;            // before the last classifier layer
  double eps = diff::kDefaultReciprocalEps;
  Precision precision = Precision::f32;  // "single" or "double" in config text

  std::size_t channels_at(std::size_t stage) const;
  std::size_t top_channels() const { return channels_at(stage_count - 1); }
  /// downsample_ratio^(stage_count - 1)
  std::size_t total_downsample() const;
  /// Throws ArgumentError for inconsistent settings.
  void validate() const;

  KeyValues to_key_values() const;
  /// Keys absent from `kv` keep their value from `base`.
  static ModelConfig from_key_values(const KeyValues& kv, const ModelConfig& base);
  static ModelConfig from_key_values(const KeyValues& kv);
};

struct StageShape {
  std::size_t points = 0;
  std::size_t channels = 0;
  bool operator==(const StageShape&) const = default;
};

template <typename T>
struct StageState {
  geom::Points positions;
  geom::Points normals;
  diff::Array<T> features;
};

struct ForwardOptions {
  std::size_t fps_start = 0;  // start index of the first downsampling
  bool training = false;      // enables dropout
  std::uint64_t dropout_seed = 0;
  std::optional<int> category;  // overrides PointCloud::category
  bool capture_attention = false;
};

template <typename T>
struct ForwardResult {
  diff::Array<T> logits;  // N x class_count
  std::vector<StageShape> encoder_shapes;
  std::vector<StageShape> decoder_shapes;
  AttentionStack<T> attention;  // last global block executed, when captured
  std::vector<std::string> warnings;
  std::vector<std::size_t> degenerate_normals;
};

template <typename T>
class Model {
 public:
  explicit Model(ModelConfig config, std::uint64_t seed = 0);
  // Parameter handles share storage, so copies would alias.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  ForwardResult<T> forward(const geom::PointCloud& cloud, const ForwardOptions& options = {}) const;

  /// Two-layer MLP over the per-point (position, normal) 6-vector.
  diff::Array<T> embed(const geom::Points& positions, const geom::Points& normals) const;

  /// Local then global block at stage `stage`; then, unless this is the last
  /// stage, FPS to ceil(N / ratio) points and channel expansion. `skip`
  /// receives the pre-downsampling state.
  StageState<T> encoder_stage(const StageState<T>& state, std::size_t stage, std::size_t fps_start,
                              StageState<T>* skip, std::vector<std::string>* warnings = nullptr,
                              AttentionStack<T>* capture = nullptr) const;

  /// Upsamples `coarse` onto `skip`, fuses, and runs the stage blocks.
  /// ContractError if the resolutions do not match the downsampling ratio.
  StageState<T> decoder_stage(const StageState<T>& coarse, const StageState<T>& skip,
                              std::size_t stage, std::vector<std::string>* warnings = nullptr,
                              AttentionStack<T>* capture = nullptr) const;

  /// Copies parameter values by name; DataError for missing or misshapen
  /// entries.
  void load_values(const ParameterSet<T>& source);

 private:
  struct EncoderParams {
    LocalBlockParams<T> local;
    GlobalBlockParams<T> global;
    std::optional<Linear<T>> down;
  };
  struct DecoderParams {
    Linear<T> fuse;
    LocalBlockParams<T> local;
    GlobalBlockParams<T> global;
  };

  diff::Array<T> stage_blocks(const StageState<T>& state, const LocalBlockParams<T>& local,
                              const GlobalBlockParams<T>& global, std::vector<std::string>* warnings,
                              AttentionStack<T>* capture) const;
  LocalBlockOptions local_options() const;

  ModelConfig config_;
  ParameterSet<T> params_;
  Linear<T> embed0_, embed1_;
  std::vector<EncoderParams> encoders_;
  std::vector<DecoderParams> decoders_;  // decoders_[s] restores stage s
  Linear<T> head0_, head1_;
};

/// Upsamples coarse features onto fine positions (3-NN inverse squared
/// distance) and concatenates the fine skip features: rows are (up, skip).
template <typename T>
diff::Array<T> interpolate_and_concat(const geom::Points& coarse_positions,
                                      const diff::Array<T>& coarse_features,
                                      const geom::Points& fine_positions,
                                      const diff::Array<T>& skip_features);

/// Appends a broadcast one-hot category to every row. ArgumentError unless
/// onehot.size() == expected_width.
template <typename T>
diff::Array<T> category_conditioning(const diff::Array<T>& features, std::span<const T> onehot,
                                     std::size_t expected_width);

// Checkpoint container:
//   "GSTRAN1" magic (7 bytes)
//   u64 value width in bytes (4 or 8)
//   u64 config byte length, config as key=value text
//   u64 parameter count, then per parameter:
//     u64 name length, name bytes, u64 rank, rank x u64 extents, raw values
// All integers and values little-endian.
inline constexpr char kCheckpointMagic[] = "GSTRAN1";

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);

ModelConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace gstran
