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

#include "gstran/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "gstran/errors.hpp"

namespace gstran {

ConfusionMatrix ConfusionMatrix::from_counts(std::size_t classes, std::vector<std::uint64_t> counts) {
  if (counts.size() != classes * classes) {
    throw DimensionError("confusion matrix: " + std::to_string(counts.size()) +
                         " counts for " + std::to_string(classes) + " classes");
  }
  ConfusionMatrix m(classes);
  m.counts_ = std::move(counts);
  return m;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::add(int truth, int pred, std::uint64_t count) {
  const auto in_range = [this](int v) { return v >= 0 && static_cast<std::size_t>(v) < k_; };
  if (!in_range(truth) || !in_range(pred)) {
    throw ArgumentError("confusion matrix: label pair (" + std::to_string(truth) + ", " +
                        std::to_string(pred) + ") outside " + std::to_string(k_) + " classes");
  }
  counts_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(pred)] += count;
}

void ConfusionMatrix::add(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size()) {
    throw DimensionError("confusion matrix: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(pred.size()) + " predictions");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) add(truth[i], pred[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw DimensionError("confusion matrix: merging different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

MetricReport compute_metrics(const ConfusionMatrix& confusion) {
  const std::size_t k = confusion.classes();
  if (k == 0) throw ArgumentError("compute_metrics: empty confusion matrix");
  const std::uint64_t total = confusion.total();
  if (total == 0) throw ArgumentError("compute_metrics: confusion matrix has no samples");

  MetricReport r;
  r.confusion = confusion;
  r.per_class_iou.assign(k, 0.0);
  r.present.assign(k, false);
  std::uint64_t trace = 0;
  double iou_sum = 0.0, acc_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += confusion.at(c, j);
      col += confusion.at(j, c);
    }
    const std::uint64_t tp = confusion.at(c, c);
    trace += tp;
    const std::uint64_t uni = row + col - tp;
    r.per_class_iou[c] = uni ? static_cast<double>(tp) / static_cast<double>(uni) : 0.0;
    if (row > 0) {
      r.present[c] = true;
      ++present;
      iou_sum += r.per_class_iou[c];
      acc_sum += static_cast<double>(tp) / static_cast<double>(row);
    }
  }
  r.miou = iou_sum / static_cast<double>(present);
  r.macc = acc_sum / static_cast<double>(present);
  r.oa = static_cast<double>(trace) / static_cast<double>(total);
  return r;
}

double object_part_iou(std::span<const int> pred, std::span<const int> label,
                       std::span<const int> parts) {
  if (pred.size() != label.size()) {
    throw DimensionError("object_part_iou: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(label.size()) + " labels");
  }
  if (parts.empty()) throw ArgumentError("object_part_iou: category has no parts");
  double sum = 0.0;
  for (int part : parts) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] == part, l = label[i] == part;
      inter += p && l;
      uni += p || l;
    }
    sum += uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
  }
  return sum / static_cast<double>(parts.size());
}

InstanceScores instance_miou(const std::vector<ObjectPrediction>& objects,
                             const CategoryParts& category_parts) {
  if (objects.empty()) throw ArgumentError("instance_miou: no objects");
  std::map<int, std::pair<double, std::size_t>> per_category;
  double total = 0.0;
  for (const auto& obj : objects) {
    const auto it = category_parts.find(obj.category);
    if (it == category_parts.end()) {
      throw ArgumentError("instance_miou: unknown category " + std::to_string(obj.category));
    }
    const double iou = object_part_iou(obj.pred, obj.label, it->second);
    total += iou;
    auto& [sum, count] = per_category[obj.category];
    sum += iou;
    ++count;
  }
  InstanceScores s;
  s.ins_miou = total / static_cast<double>(objects.size());
  double cat_sum = 0.0;
  for (const auto& [cat, acc] : per_category) cat_sum += acc.first / static_cast<double>(acc.second);
  s.cat_miou = cat_sum / static_cast<double>(per_category.size());
  return s;
}

}  // namespace gstran
