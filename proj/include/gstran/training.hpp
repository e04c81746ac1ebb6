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

// Loss, optimizers, learning-rate schedule and the training loop.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "gstran/config.hpp"
#include "gstran/diff/array.hpp"
#include "gstran/geom/point_cloud.hpp"
#include "gstran/metrics.hpp"
#include "gstran/network.hpp"
#include "gstran/parameters.hpp"

namespace gstran {

/// Mean over rows of -log softmax(logits)[label]. ArgumentError for a label
/// outside [0, K).
template <typename T>
diff::Array<T> cross_entropy_loss(const diff::Array<T>& logits, std::span<const int> labels);

struct LrSchedule {
  double initial = 1e-3;
  std::vector<std::size_t> milestones;  // strictly increasing
  double factor = 0.1;

  /// ArgumentError for a negative rate or milestones that do not strictly
  /// increase. A zero rate freezes the parameters.
  void validate() const;
};

/// initial * factor^(number of milestones <= step)
double lr_at(const LrSchedule& schedule, std::size_t step);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct OptimizerState {
  std::vector<std::vector<double>> first;   // Adam m, or SGD velocity
  std::vector<std::vector<double>> second;  // Adam v
  std::size_t steps = 0;
};

/// Adam with bias correction; decoupled weight decay p -= lr * wd * p.
/// Parameters without an accumulated gradient see a zero gradient.
template <typename T>
void adam_step(ParameterSet<T>& params, OptimizerState<T>& state, double lr, double weight_decay,
               const AdamSettings& settings = {});

/// v = momentum * v + g; p -= lr * v; then p -= lr * wd * p.
template <typename T>
void sgd_momentum_step(ParameterSet<T>& params, OptimizerState<T>& state, double lr,
                       double momentum, double weight_decay);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before scaling.
template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm);

enum class OptimizerKind { adam, sgd_momentum };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  LrSchedule schedule;
  bool schedule_in_steps = false;  // milestones count optimizer steps instead of epochs
  double momentum = 0.9;           // Adam beta1 or SGD momentum
  double weight_decay = 1e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double clip_norm = 0.0;  // 0 disables clipping
  // Training stops after an epoch whose test metrics reach every set target.
  std::optional<double> stop_oa;
  std::optional<double> stop_miou;

  void validate() const;
  KeyValues to_key_values() const;
  static TrainConfig from_key_values(const KeyValues& kv, const TrainConfig& base);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean per-cloud training loss
  MetricReport metrics;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_miou = -1.0;
  bool stopped_early = false;
};

struct TrainData {
  std::vector<geom::PointCloud> train;
  std::vector<geom::PointCloud> test;  // metrics source; the train split is used when empty
  std::optional<CategoryParts> category_parts;  // enables part-mode scores
};

/// Deterministic for a fixed seed. With `run_dir` set, writes `train.log`
/// (tab-separated epoch, loss, oa, macc, miou, lr), `config.txt` and
/// `best.ckpt` (best test mIoU). A non-finite loss dumps the offending batch
/// to `run_dir/nan_batch/` and throws NumericError.
template <typename T>
TrainResult train(Model<T>& model, const TrainData& data, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                  std::ostream* progress = nullptr);

/// Per-point argmax of the logits.
template <typename T>
std::vector<int> predict(const Model<T>& model, const geom::PointCloud& cloud);

template <typename T>
MetricReport evaluate(const Model<T>& model, const std::vector<geom::PointCloud>& clouds,
                      const std::optional<CategoryParts>& category_parts = std::nullopt);

}  // namespace gstran
