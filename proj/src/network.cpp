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

#include "gstran/network.hpp"

#include <random>

#include "gstran/errors.hpp"
#include "gstran/geom/ops.hpp"

namespace gstran {

// ---------------------------------------------------------------------------
// ModelConfig

std::size_t ModelConfig::channels_at(std::size_t stage) const {
  std::size_t c = base_channels;
  for (std::size_t s = 0; s < stage; ++s) c *= channel_multiplier;
  return c;
}

std::size_t ModelConfig::total_downsample() const {
  std::size_t r = 1;
  for (std::size_t s = 1; s < stage_count; ++s) r *= downsample_ratio;
  return r;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ArgumentError("model config: " + msg); };
  if (stage_count < 1) fail("stage_count must be at least 1");
  if (base_channels < 1 || channel_multiplier < 1) fail("channel widths must be positive");
  if (downsample_ratio < 1) fail("downsample_ratio must be at least 1");
  if (k_neighbors < 1) fail("k must be at least 1");
  if (head_count < 1) fail("heads must be at least 1");
  for (std::size_t s = 0; s < stage_count; ++s) {
    if (channels_at(s) % head_count != 0) {
      fail(std::to_string(head_count) + " heads do not divide the " +
           std::to_string(channels_at(s)) + " channels of stage " + std::to_string(s));
    }
  }
  if (class_count < 1) fail("class_count must be at least 1");
  if (normal_k < 3) fail("normal_k must be at least 3");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(eps >= 0.0)) fail("eps must be non-negative");
}

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv.set("stage_count", std::to_string(stage_count));
  kv.set("base_channels", std::to_string(base_channels));
  kv.set("channel_multiplier", std::to_string(channel_multiplier));
  kv.set("downsample_ratio", std::to_string(downsample_ratio));
  kv.set("k", std::to_string(k_neighbors));
  kv.set("heads", std::to_string(head_count));
  kv.set("combine_op", to_string(combine_op));
  kv.set("local_weighting", to_string(local_weighting));
  kv.set("global_mode", to_string(global_mode));
  kv.set("renormalize_refined", renormalize_refined ? "true" : "false");
  kv.set("single_space", single_space ? "true" : "false");
  kv.set("class_count", std::to_string(class_count));
  kv.set("input_has_normals", input_has_normals ? "true" : "false");
  kv.set("normal_k", std::to_string(normal_k));
  kv.set("category_count", std::to_string(category_count));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", dropout);
  kv.set("dropout", buf);
  std::snprintf(buf, sizeof buf, "%.17g", eps);
  kv.set("eps", buf);
  kv.set("precision", precision == Precision::f32 ? "single" : "double");
  return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv, const ModelConfig& base) {
  ModelConfig c = base;
  c.stage_count = kv.get_size("stage_count", c.stage_count);
  c.base_channels = kv.get_size("base_channels", c.base_channels);
  c.channel_multiplier = kv.get_size("channel_multiplier", c.channel_multiplier);
  c.downsample_ratio = kv.get_size("downsample_ratio", c.downsample_ratio);
  c.k_neighbors = kv.get_size("k", c.k_neighbors);
  c.head_count = kv.get_size("heads", c.head_count);
  if (kv.contains("combine_op")) c.combine_op = parse_combine_op(kv.get_string("combine_op", ""));
  if (kv.contains("local_weighting")) {
    c.local_weighting = parse_local_weighting(kv.get_string("local_weighting", ""));
  }
  if (kv.contains("global_mode")) c.global_mode = parse_global_mode(kv.get_string("global_mode", ""));
  c.renormalize_refined = kv.get_bool("renormalize_refined", c.renormalize_refined);
  c.single_space = kv.get_bool("single_space", c.single_space);
  c.class_count = kv.get_size("class_count", c.class_count);
  c.input_has_normals = kv.get_bool("input_has_normals", c.input_has_normals);
  c.normal_k = kv.get_size("normal_k", c.normal_k);
  c.category_count = kv.get_size("category_count", c.category_count);
  c.dropout = kv.get_double("dropout", c.dropout);
  c.eps = kv.get_double("eps", c.eps);
  if (kv.contains("precision")) {
    const std::string p = kv.get_string("precision", "");
    if (p == "single") {
      c.precision = Precision::f32;
    } else if (p == "double") {
      c.precision = Precision::f64;
    } else {
      throw ArgumentError("model config: precision must be single or double, got '" + p + "'");
    }
  }
  return c;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  return from_key_values(kv, ModelConfig{});
}

// ---------------------------------------------------------------------------
// Free helpers

template <typename T>
diff::Array<T> interpolate_and_concat(const geom::Points& coarse_positions,
                                      const diff::Array<T>& coarse_features,
                                      const geom::Points& fine_positions,
                                      const diff::Array<T>& skip_features) {
  const auto fine_n = static_cast<std::size_t>(fine_positions.rows());
  if (coarse_features.rank() != 2 ||
      coarse_features.dim(0) != static_cast<std::size_t>(coarse_positions.rows())) {
    throw DimensionError("interpolate_and_concat: coarse features " +
                         shape_string(coarse_features.shape()) + " for " +
                         std::to_string(coarse_positions.rows()) + " points");
  }
  if (skip_features.rank() != 2 || skip_features.dim(0) != fine_n) {
    throw DimensionError("interpolate_and_concat: skip features " +
                         shape_string(skip_features.shape()) + " for " + std::to_string(fine_n) +
                         " points");
  }
  const geom::InterpolationPlan plan = geom::interpolation_plan(coarse_positions, fine_positions);
  const std::size_t c = coarse_features.dim(1);
  std::vector<T> w(plan.weights.begin(), plan.weights.end());
  auto gathered = diff::reshape(diff::gather_rows<T>(coarse_features, plan.indices),
                                {fine_n, plan.width, c});
  auto weights = diff::Array<T>::from({fine_n, plan.width, 1}, std::move(w));
  auto up = diff::reduce(diff::Reduction::sum, diff::mul(gathered, weights), 1);
  return diff::concat_last<T>({up, skip_features});
}

template <typename T>
diff::Array<T> category_conditioning(const diff::Array<T>& features, std::span<const T> onehot,
                                     std::size_t expected_width) {
  if (onehot.size() != expected_width) {
    throw ArgumentError("category_conditioning: one-hot width " + std::to_string(onehot.size()) +
                        ", expected " + std::to_string(expected_width));
  }
  if (features.rank() != 2) {
    throw DimensionError("category_conditioning: features " + shape_string(features.shape()));
  }
  const std::size_t n = features.dim(0);
  std::vector<T> tiled(n * onehot.size());
  for (std::size_t i = 0; i < n; ++i)
    std::copy(onehot.begin(), onehot.end(), tiled.begin() + i * onehot.size());
  return diff::concat_last<T>({features, diff::Array<T>::from({n, onehot.size()}, std::move(tiled))});
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const std::size_t s_count = config_.stage_count;
  const std::size_t c0 = config_.base_channels;

  embed0_ = Linear<T>::create(params_, "embed.0", 6, c0);
  embed1_ = Linear<T>::create(params_, "embed.1", c0, c0);
  for (std::size_t s = 0; s < s_count; ++s) {
    const std::string name = "enc" + std::to_string(s);
    const std::size_t c = config_.channels_at(s);
    EncoderParams e{LocalBlockParams<T>::create(params_, name + ".local", c),
                    GlobalBlockParams<T>::create(params_, name + ".global", c, config_.head_count),
                    std::nullopt};
    if (s + 1 < s_count) {
      e.down = Linear<T>::create(params_, "down" + std::to_string(s), c, config_.channels_at(s + 1));
    }
    encoders_.push_back(std::move(e));
  }
  decoders_.resize(s_count > 0 ? s_count - 1 : 0);
  for (std::size_t s = s_count - 1; s-- > 0;) {
    const std::string name = "dec" + std::to_string(s);
    const std::size_t c = config_.channels_at(s);
    decoders_[s] = DecoderParams{
        Linear<T>::create(params_, name + ".fuse", config_.channels_at(s + 1) + c, c),
        LocalBlockParams<T>::create(params_, name + ".local", c),
        GlobalBlockParams<T>::create(params_, name + ".global", c, config_.head_count)};
  }
  head0_ = Linear<T>::create(params_, "head.0", c0 + config_.category_count, c0);
  head1_ = Linear<T>::create(params_, "head.1", c0, config_.class_count);

  std::mt19937_64 rng(seed);
  embed0_.init_uniform(rng);
  embed1_.init_uniform(rng);
  for (auto& e : encoders_) {
    e.local.init(rng);
    e.global.init(rng);
    if (e.down) e.down->init_uniform(rng);
  }
  for (std::size_t s = decoders_.size(); s-- > 0;) {
    decoders_[s].fuse.init_uniform(rng);
    decoders_[s].local.init(rng);
    decoders_[s].global.init(rng);
  }
  head0_.init_uniform(rng);
  head1_.init_uniform(rng);
}

template <typename T>
LocalBlockOptions Model<T>::local_options() const {
  LocalBlockOptions o;
  o.k = config_.k_neighbors;
  o.combine = config_.combine_op;
  o.weighting = config_.local_weighting;
  o.single_space = config_.single_space;
  o.eps = config_.eps;
  return o;
}

template <typename T>
diff::Array<T> Model<T>::embed(const geom::Points& positions, const geom::Points& normals) const {
  if (normals.rows() != positions.rows()) {
    throw ContractError("embed: positions and normals must both be present");
  }
  const auto n = static_cast<std::size_t>(positions.rows());
  std::vector<T> input(n * 6);
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) {
      input[i * 6 + d] = static_cast<T>(positions(static_cast<Eigen::Index>(i), d));
      input[i * 6 + 3 + d] = static_cast<T>(normals(static_cast<Eigen::Index>(i), d));
    }
  }
  auto x = diff::Array<T>::from({n, 6}, std::move(input));
  return embed1_(diff::relu(embed0_(x)));
}

template <typename T>
diff::Array<T> Model<T>::stage_blocks(const StageState<T>& state, const LocalBlockParams<T>& local,
                                      const GlobalBlockParams<T>& global,
                                      std::vector<std::string>* warnings,
                                      AttentionStack<T>* capture) const {
  LocalDiagnostics diag;
  auto x = local_geo_forward(state.positions, state.normals, state.features, local, local_options(),
                             &diag);
  if (warnings) warnings->insert(warnings->end(), diag.warnings.begin(), diag.warnings.end());
  GlobalBlockOptions g;
  g.mode = config_.global_mode;
  g.renormalize_refined = config_.renormalize_refined;
  if (capture && g.mode != GlobalMode::none) *capture = AttentionStack<T>{};
  return global_sem_forward(x, global, g, g.mode == GlobalMode::none ? nullptr : capture);
}

template <typename T>
StageState<T> Model<T>::encoder_stage(const StageState<T>& state, std::size_t stage,
                                      std::size_t fps_start, StageState<T>* skip,
                                      std::vector<std::string>* warnings,
                                      AttentionStack<T>* capture) const {
  if (stage >= encoders_.size()) throw ArgumentError("encoder_stage: no stage " + std::to_string(stage));
  const auto& p = encoders_[stage];
  auto x = stage_blocks(state, p.local, p.global, warnings, capture);
  StageState<T> current{state.positions, state.normals, x};
  if (!p.down) {
    if (skip) *skip = current;
    return current;
  }
  if (skip) *skip = current;
  const auto n = static_cast<std::size_t>(state.positions.rows());
  const std::size_t m = (n + config_.downsample_ratio - 1) / config_.downsample_ratio;
  const std::vector<std::size_t> selected = geom::fps(state.positions, m, fps_start);
  StageState<T> next;
  next.positions.resize(static_cast<Eigen::Index>(m), 3);
  next.normals.resize(static_cast<Eigen::Index>(m), 3);
  for (std::size_t r = 0; r < m; ++r) {
    next.positions.row(static_cast<Eigen::Index>(r)) =
        state.positions.row(static_cast<Eigen::Index>(selected[r]));
    next.normals.row(static_cast<Eigen::Index>(r)) =
        state.normals.row(static_cast<Eigen::Index>(selected[r]));
  }
  next.features = diff::relu((*p.down)(diff::gather_rows<T>(x, selected)));
  return next;
}

template <typename T>
StageState<T> Model<T>::decoder_stage(const StageState<T>& coarse, const StageState<T>& skip,
                                      std::size_t stage, std::vector<std::string>* warnings,
                                      AttentionStack<T>* capture) const {
  if (stage >= decoders_.size()) throw ArgumentError("decoder_stage: no stage " + std::to_string(stage));
  const auto fine_n = static_cast<std::size_t>(skip.positions.rows());
  const auto coarse_n = static_cast<std::size_t>(coarse.positions.rows());
  const std::size_t expected = (fine_n + config_.downsample_ratio - 1) / config_.downsample_ratio;
  if (coarse_n != expected) {
    throw ContractError("decoder_stage: coarse resolution " + std::to_string(coarse_n) +
                        " does not match skip resolution " + std::to_string(fine_n) + " / " +
                        std::to_string(config_.downsample_ratio));
  }
  const auto& p = decoders_[stage];
  auto fused = diff::relu(p.fuse(
      interpolate_and_concat(coarse.positions, coarse.features, skip.positions, skip.features)));
  StageState<T> out{skip.positions, skip.normals, fused};
  out.features = stage_blocks(out, p.local, p.global, warnings, capture);
  return out;
}

template <typename T>
ForwardResult<T> Model<T>::forward(const geom::PointCloud& cloud, const ForwardOptions& options) const {
  cloud.validate();
  const std::size_t n = cloud.size();
  if (n == 0) throw ArgumentError("model_forward: empty point cloud");
  if (options.fps_start >= n) throw ArgumentError("model_forward: fps start out of range");

  ForwardResult<T> result;
  geom::Points normals;
  if (cloud.has_normals()) {
    normals = cloud.normals;
  } else if (n >= 3) {
    auto est = geom::estimate_normals(cloud.positions, std::min(config_.normal_k, n));
    normals = std::move(est.normals);
    result.degenerate_normals = std::move(est.degenerate);
  } else {
    normals = geom::Points::Zero(cloud.positions.rows(), 3);
    normals.col(2).setOnes();
    result.warnings.push_back("fewer than 3 points: normals set to +z");
  }

  AttentionStack<T>* capture = options.capture_attention ? &result.attention : nullptr;
  StageState<T> state{cloud.positions, normals, embed(cloud.positions, normals)};
  std::vector<StageState<T>> skips(config_.stage_count);
  for (std::size_t s = 0; s < config_.stage_count; ++s) {
    result.encoder_shapes.push_back({static_cast<std::size_t>(state.positions.rows()),
                                     state.features.dim(1)});
    state = encoder_stage(state, s, s == 0 ? options.fps_start : 0, &skips[s], &result.warnings,
                          capture);
  }
  for (std::size_t s = config_.stage_count - 1; s-- > 0;) {
    state = decoder_stage(state, skips[s], s, &result.warnings, capture);
    result.decoder_shapes.push_back({static_cast<std::size_t>(state.positions.rows()),
                                     state.features.dim(1)});
  }

  diff::Array<T> x = state.features;
  if (config_.category_count > 0) {
    std::vector<T> onehot(config_.category_count, T(0));
    const std::optional<int> category = options.category ? options.category : cloud.category;
    if (category) {
      if (*category < 0 || static_cast<std::size_t>(*category) >= config_.category_count) {
        throw ArgumentError("model_forward: category " + std::to_string(*category) + " out of range");
      }
      onehot[static_cast<std::size_t>(*category)] = T(1);
    }
    x = category_conditioning<T>(x, onehot, config_.category_count);
  }
  auto h = diff::relu(head0_(x));
  if (options.training && config_.dropout > 0.0) h = diff::dropout(h, config_.dropout, options.dropout_seed);
  result.logits = head1_(h);
  return result;
}

template <typename T>
void Model<T>::load_values(const ParameterSet<T>& source) {
  for (auto& [name, array] : params_.entries()) {
    const diff::Array<T>* src = source.find(name);
    if (!src) throw DataError("checkpoint is missing parameter '" + name + "'");
    if (src->shape() != array.shape()) {
      throw DataError("checkpoint parameter '" + name + "' has shape " + shape_string(src->shape()) +
                      ", model expects " + shape_string(array.shape()));
    }
    std::copy(src->values().begin(), src->values().end(), array.mutable_values().begin());
  }
}

#define GSTRAN_INSTANTIATE(T)                                                                    \
  template class Model<T>;                                                                       \
  template diff::Array<T> interpolate_and_concat<T>(const geom::Points&, const diff::Array<T>&,  \
                                                    const geom::Points&, const diff::Array<T>&); \
  template diff::Array<T> category_conditioning<T>(const diff::Array<T>&, std::span<const T>,    \
                                                   std::size_t);

GSTRAN_INSTANTIATE(float)
GSTRAN_INSTANTIATE(double)

#undef GSTRAN_INSTANTIATE

}  // namespace gstran
