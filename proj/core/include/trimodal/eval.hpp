// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trimodal/archive.hpp"
#include "trimodal/encoders.hpp"
#include "trimodal/svm.hpp"

namespace trimodal {

enum class ViewAggregate { mean, max };

struct FeatureRow {
  std::string object_id;
  int class_label = -1;
  int view_count = 0;
};

// One backbone feature per (object, modality); rows align with features.
struct FeatureTable {
  Modality modality = Modality::point;
  std::vector<FeatureRow> rows;
  Tensor features;  // [rows, backbone_dim]

  std::vector<int> labels() const;
};

// Frozen-encoder features for a whole archive. Image features aggregate v
// randomly chosen stored views (seeded); mesh and point clouds take one
// forward pass each.
FeatureTable extract_feature_table(const ArchiveReader& data, const TriModalModel& model,
                                   Modality modality, int views, ViewAggregate aggregate,
                                   uint64_t seed);

// Linear one-vs-rest SVM on frozen features; returns test accuracy.
double linear_probe(const FeatureTable& train, const FeatureTable& test, double c = 1.0,
                    uint64_t seed = 0);

struct FewShotResult {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::vector<double> per_round;
};

// R rounds of class-balanced subsampling (shots per class), probe each.
FewShotResult few_shot_probe(const FeatureTable& train, const FeatureTable& test, int shots,
                             int rounds, uint64_t seed, double c = 1.0);

// ---------------------------------------------------------------------------
// part segmentation transfer

struct SegmentationMetrics {
  double overall_accuracy = 0.0;
  double class_miou = 0.0;
  double instance_miou = 0.0;
};

// Pooled point accuracy, per-part-class IoU averaged over classes, and
// per-shape mean IoU over that shape's category parts (absent parts count
// as IoU 1) averaged over shapes.
SegmentationMetrics segmentation_metrics(
    const std::vector<std::vector<int32_t>>& pred,
    const std::vector<std::vector<int32_t>>& truth,
    const std::vector<int>& categories);

enum class SegMode { frozen, unfrozen, scratch };
SegMode seg_mode_from_name(const std::string& name);

struct SegTransferConfig {
  double label_fraction = 0.01;  // of training shapes, per category
  SegMode mode = SegMode::frozen;
  int64_t iterations = 240;
  int64_t batch_shapes = 3;
  double lr = 0.01;
  double momentum = 0.9;
  uint64_t seed = 0;
};

// Trains the per-point head (4 stacked linear layers over the EdgeConv taps
// plus the tiled global feature) on a labeled subset and reports metrics on
// the test records. `model` supplies the point backbone; scratch mode
// re-initializes it.
SegmentationMetrics part_segmentation(const TriModalModel& model,
                                      const std::vector<SegmentationRecord>& train,
                                      const std::vector<SegmentationRecord>& test,
                                      const SegTransferConfig& config);

// ---------------------------------------------------------------------------
// persistence

void save_feature_table(const std::string& dir, const FeatureTable& table);
FeatureTable load_feature_table(const std::string& dir);

}  // namespace trimodal
