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

// Segmentation metrics. Confusion rows are ground truth, columns predictions.
//
// Semantic mode: IoU_c = tp / (tp + fp + fn); mIoU and mAcc average over the
// classes that occur in the ground truth.
// Part mode: per object, mean IoU over its category's parts, where a part
// absent from both prediction and label scores 1.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace gstran {

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {}
  /// Row-major counts, size classes^2.
  static ConfusionMatrix from_counts(std::size_t classes, std::vector<std::uint64_t> counts);

  std::size_t classes() const { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * k_ + pred]; }
  std::uint64_t total() const;
  /// ArgumentError if either label is outside [0, classes).
  void add(int truth, int pred, std::uint64_t count = 1);
  void add(std::span<const int> truth, std::span<const int> pred);
  void merge(const ConfusionMatrix& other);

 private:
  std::size_t k_ = 0;
  std::vector<std::uint64_t> counts_;
};

struct MetricReport {
  ConfusionMatrix confusion;
  std::vector<double> per_class_iou;  // 0 for classes absent from the ground truth
  std::vector<bool> present;          // class occurs in the ground truth
  double miou = 0.0;
  double macc = 0.0;
  double oa = 0.0;
  std::optional<double> ins_miou;
  std::optional<double> cat_miou;
};

/// ArgumentError for an empty matrix or zero total count.
MetricReport compute_metrics(const ConfusionMatrix& confusion);

struct ObjectPrediction {
  std::vector<int> pred;
  std::vector<int> label;
  int category = 0;
};

/// category -> part labels belonging to it
using CategoryParts = std::map<int, std::vector<int>>;

double object_part_iou(std::span<const int> pred, std::span<const int> label,
                       std::span<const int> parts);

struct InstanceScores {
  double ins_miou = 0.0;
  double cat_miou = 0.0;
};

/// ArgumentError for an unknown category, mismatched lengths, or no objects.
InstanceScores instance_miou(const std::vector<ObjectPrediction>& objects,
                             const CategoryParts& category_parts);

}  // namespace gstran
