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

#include "gstran/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "gstran/errors.hpp"
#include "gstran/io.hpp"

namespace gstran {

template <typename T>
diff::Array<T> cross_entropy_loss(const diff::Array<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy_loss: logits " + shape_string(logits.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (n == 0) throw ArgumentError("cross_entropy_loss: no rows");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw ArgumentError("cross_entropy_loss: label " + std::to_string(l) + " outside [0, " +
                          std::to_string(k) + ")");
    }
  }
  auto x = logits.values();
  auto probs = std::make_shared<std::vector<T>>(n * k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = x.data() + i * k;
    const T mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(double(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] = static_cast<T>(std::exp(double(row[j] - mx)) / z);
    total += std::log(z) + double(mx) - double(row[labels[i]]);
  }
  std::vector<int> target(labels.begin(), labels.end());
  return diff::record_op<T>({}, {static_cast<T>(total / double(n))}, {logits},
                            [logits, probs, target = std::move(target), n, k](
                                std::span<const T>, std::span<const T> g) {
                              diff::Array<T> in = logits;
                              auto gl = in.mutable_grad();
                              const T s = g[0] / static_cast<T>(n);
                              for (std::size_t i = 0; i < n; ++i) {
                                for (std::size_t j = 0; j < k; ++j) {
                                  const T onehot = static_cast<int>(j) == target[i] ? T(1) : T(0);
                                  gl[i * k + j] += s * ((*probs)[i * k + j] - onehot);
                                }
                              }
                            });
}

void LrSchedule::validate() const {
  if (!(initial >= 0.0)) throw ArgumentError("learning rate must be non-negative");
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) {
      throw ArgumentError("learning-rate milestones must be strictly increasing");
    }
  }
}

double lr_at(const LrSchedule& schedule, std::size_t step) {
  double lr = schedule.initial;
  for (std::size_t m : schedule.milestones)
    if (step >= m) lr *= schedule.factor;
  return lr;
}

namespace {

template <typename T>
void ensure_state(ParameterSet<T>& params, OptimizerState<T>& state, bool second) {
  const auto& entries = params.entries();
  if (state.first.size() == entries.size()) return;
  state.first.clear();
  state.second.clear();
  for (const auto& e : entries) {
    state.first.emplace_back(e.second.size(), 0.0);
    if (second) state.second.emplace_back(e.second.size(), 0.0);
  }
}

}  // namespace

template <typename T>
void adam_step(ParameterSet<T>& params, OptimizerState<T>& state, double lr, double weight_decay,
               const AdamSettings& s) {
  ensure_state(params, state, true);
  ++state.steps;
  const double c1 = 1.0 - std::pow(s.beta1, double(state.steps));
  const double c2 = 1.0 - std::pow(s.beta2, double(state.steps));
  auto& entries = params.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& a = entries[p].second;
    auto v = a.mutable_values();
    auto g = a.grad();
    auto& m1 = state.first[p];
    auto& m2 = state.second[p];
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double gi = g.empty() ? 0.0 : double(g[i]);
      m1[i] = s.beta1 * m1[i] + (1.0 - s.beta1) * gi;
      m2[i] = s.beta2 * m2[i] + (1.0 - s.beta2) * gi * gi;
      const double update = (m1[i] / c1) / (std::sqrt(m2[i] / c2) + s.eps);
      double x = double(v[i]) - lr * update;
      x -= lr * weight_decay * x;
      v[i] = static_cast<T>(x);
    }
  }
}

template <typename T>
void sgd_momentum_step(ParameterSet<T>& params, OptimizerState<T>& state, double lr, double momentum,
                       double weight_decay) {
  ensure_state(params, state, false);
  ++state.steps;
  auto& entries = params.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& a = entries[p].second;
    auto v = a.mutable_values();
    auto g = a.grad();
    auto& vel = state.first[p];
    for (std::size_t i = 0; i < v.size(); ++i) {
      vel[i] = momentum * vel[i] + (g.empty() ? 0.0 : double(g[i]));
      double x = double(v[i]) - lr * vel[i];
      x -= lr * weight_decay * x;
      v[i] = static_cast<T>(x);
    }
  }
}

template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& e : params.entries())
    for (T g : e.second.grad()) sq += double(g) * double(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& e : params.entries()) {
      if (!e.second.has_grad()) continue;
      for (T& g : e.second.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  schedule.validate();
  if (epochs == 0) throw ArgumentError("epochs must be positive");
  if (batch_size == 0) throw ArgumentError("batch_size must be positive");
  if (weight_decay < 0.0) throw ArgumentError("weight_decay must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw ArgumentError("momentum must lie in [0, 1)");
  if (clip_norm < 0.0) throw ArgumentError("clip_norm must be non-negative");
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  char buf[64];
  const auto num = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    kv.set(key, buf);
  };
  kv.set("optimizer", optimizer == OptimizerKind::adam ? "adam" : "sgd_momentum");
  num("lr", schedule.initial);
  kv.set("milestones", join_sizes(schedule.milestones));
  num("lr_factor", schedule.factor);
  kv.set("schedule_unit", schedule_in_steps ? "step" : "epoch");
  num("momentum", momentum);
  num("weight_decay", weight_decay);
  kv.set("epochs", std::to_string(epochs));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("seed", std::to_string(seed));
  num("clip_norm", clip_norm);
  if (stop_oa) num("stop_oa", *stop_oa);
  if (stop_miou) num("stop_miou", *stop_miou);
  return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv, const TrainConfig& base) {
  TrainConfig c = base;
  if (kv.contains("optimizer")) {
    const std::string o = kv.get_string("optimizer", "");
    if (o == "adam") {
      c.optimizer = OptimizerKind::adam;
    } else if (o == "sgd_momentum" || o == "sgd") {
      c.optimizer = OptimizerKind::sgd_momentum;
    } else {
      throw ArgumentError("unknown optimizer '" + o + "' (adam, sgd_momentum)");
    }
  }
  c.schedule.initial = kv.get_double("lr", c.schedule.initial);
  c.schedule.milestones = kv.get_size_list("milestones", c.schedule.milestones);
  c.schedule.factor = kv.get_double("lr_factor", c.schedule.factor);
  if (kv.contains("schedule_unit")) {
    const std::string u = kv.get_string("schedule_unit", "");
    if (u != "epoch" && u != "step") throw ArgumentError("schedule_unit must be epoch or step");
    c.schedule_in_steps = u == "step";
  }
  c.momentum = kv.get_double("momentum", c.momentum);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.epochs = kv.get_size("epochs", c.epochs);
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.seed = kv.get_size("seed", c.seed);
  c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
  if (kv.contains("stop_oa")) c.stop_oa = kv.get_double("stop_oa", 0.0);
  if (kv.contains("stop_miou")) c.stop_miou = kv.get_double("stop_miou", 0.0);
  return c;
}

// ---------------------------------------------------------------------------
// Training loop

template <typename T>
std::vector<int> predict(const Model<T>& model, const geom::PointCloud& cloud) {
  const auto result = model.forward(cloud);
  const auto& logits = result.logits;
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  auto v = logits.values();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = v.begin() + static_cast<std::ptrdiff_t>(i * k);
    out[i] = static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(k)) - row);
  }
  return out;
}

template <typename T>
MetricReport evaluate(const Model<T>& model, const std::vector<geom::PointCloud>& clouds,
                      const std::optional<CategoryParts>& category_parts) {
  if (clouds.empty()) throw ArgumentError("evaluate: no clouds");
  ConfusionMatrix confusion(model.config().class_count);
  std::vector<ObjectPrediction> objects;
  for (const auto& cloud : clouds) {
    if (!cloud.has_labels()) throw DataError("evaluate: cloud without labels");
    auto pred = predict(model, cloud);
    confusion.add(cloud.labels, pred);
    if (category_parts && cloud.category) {
      objects.push_back({std::move(pred), cloud.labels, *cloud.category});
    }
  }
  MetricReport report = compute_metrics(confusion);
  if (!objects.empty()) {
    const InstanceScores s = instance_miou(objects, *category_parts);
    report.ins_miou = s.ins_miou;
    report.cat_miou = s.cat_miou;
  }
  return report;
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void dump_batch(const std::filesystem::path& dir, const std::vector<geom::PointCloud>& clouds,
                std::span<const std::size_t> batch) {
  std::filesystem::create_directories(dir);
  for (std::size_t i : batch) {
    io::write_xyz_table(clouds[i], dir / ("cloud_" + std::to_string(i) + ".xyz"));
  }
}

}  // namespace

template <typename T>
TrainResult train(Model<T>& model, const TrainData& data, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& run_dir, std::ostream* progress) {
  config.validate();
  if (data.train.empty()) throw ArgumentError("train: empty training split");
  for (const auto& c : data.train) {
    if (!c.has_labels()) throw DataError("train: cloud without labels");
    c.validate(static_cast<int>(model.config().class_count));
  }
  const auto& eval_set = data.test.empty() ? data.train : data.test;

  std::ofstream log;
  if (run_dir) {
    std::filesystem::create_directories(*run_dir);
    std::ofstream cfg(*run_dir / "config.txt");
    cfg << model.config().to_key_values().format() << config.to_key_values().format();
    log.open(*run_dir / "train.log");
    if (!log) throw DataError("cannot write " + (*run_dir / "train.log").string());
  }

  auto& params = model.parameters();
  OptimizerState<T> state;
  AdamSettings adam;
  adam.beta1 = config.momentum;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double epoch_lr = lr_at(config.schedule, epoch);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t e = std::min(order.size(), b + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + b, e - b);
      const T inv = static_cast<T>(1.0 / double(batch.size()));
      params.zero_grad();
      std::vector<double> losses;
      for (std::size_t idx : batch) {
        const auto& cloud = data.train[idx];
        diff::Tape<T> tape;
        auto scope = tape.activate();
        ForwardOptions fo;
        fo.training = true;
        fo.dropout_seed = rng();
        auto out = model.forward(cloud, fo);
        auto loss = cross_entropy_loss(out.logits, cloud.labels);
        losses.push_back(double(loss.item()));
        if (!std::isfinite(losses.back())) break;
        tape.backward(diff::scale(loss, inv));
      }
      if (!all_finite(losses)) {
        if (run_dir) dump_batch(*run_dir / "nan_batch", data.train, batch);
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                           std::to_string(b) + (run_dir ? "; batch written to nan_batch/" : ""));
      }
      loss_sum += std::accumulate(losses.begin(), losses.end(), 0.0);
      if (config.clip_norm > 0.0) clip_grad_norm(params, config.clip_norm);
      const double lr = config.schedule_in_steps ? lr_at(config.schedule, step) : epoch_lr;
      if (config.optimizer == OptimizerKind::adam) {
        adam_step(params, state, lr, config.weight_decay, adam);
      } else {
        sgd_momentum_step(params, state, lr, config.momentum, config.weight_decay);
      }
      ++step;
    }
    params.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / double(order.size());
    rec.metrics = evaluate(model, eval_set, data.category_parts);
    rec.lr = config.schedule_in_steps ? lr_at(config.schedule, step) : epoch_lr;
    char line[256];
    std::snprintf(line, sizeof line, "%zu\t%.9g\t%.6f\t%.6f\t%.6f\t%.6g", rec.epoch, rec.loss,
                  rec.metrics.oa, rec.metrics.macc, rec.metrics.miou, rec.lr);
    if (log.is_open()) log << line << "\n" << std::flush;
    if (progress) *progress << line << "\n";

    if (rec.metrics.miou > result.best_miou) {
      result.best_miou = rec.metrics.miou;
      result.best_epoch = epoch;
      if (run_dir) save_checkpoint(model, *run_dir / "best.ckpt");
    }
    const bool reached = (config.stop_oa || config.stop_miou) &&
                         (!config.stop_oa || rec.metrics.oa >= *config.stop_oa) &&
                         (!config.stop_miou || rec.metrics.miou >= *config.stop_miou);
    result.log.push_back(std::move(rec));
    if (reached) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

#define GSTRAN_INSTANTIATE(T)                                                                       \
  template diff::Array<T> cross_entropy_loss<T>(const diff::Array<T>&, std::span<const int>);       \
  template void adam_step<T>(ParameterSet<T>&, OptimizerState<T>&, double, double,                  \
                             const AdamSettings&);                                                  \
  template void sgd_momentum_step<T>(ParameterSet<T>&, OptimizerState<T>&, double, double, double); \
  template double clip_grad_norm<T>(ParameterSet<T>&, double);                                      \
  template TrainResult train<T>(Model<T>&, const TrainData&, const TrainConfig&,                    \
                                const std::optional<std::filesystem::path>&, std::ostream*);        \
  template std::vector<int> predict<T>(const Model<T>&, const geom::PointCloud&);                   \
  template MetricReport evaluate<T>(const Model<T>&, const std::vector<geom::PointCloud>&,          \
                                    const std::optional<CategoryParts>&);

GSTRAN_INSTANTIATE(float)
GSTRAN_INSTANTIATE(double)

#undef GSTRAN_INSTANTIATE

}  // namespace gstran
