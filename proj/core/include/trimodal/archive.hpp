// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trimodal/mesh.hpp"
#include "trimodal/render.hpp"
#include "trimodal/sampling.hpp"

namespace trimodal {

// One object's mesh descriptors, point cloud, and pre-rendered views.
struct TriModalSample {
  std::string object_id;
  std::optional<int> class_label;
  FaceFeatureSet mesh;
  PointCloud point_cloud;
  std::vector<ImageView> views;
};

struct DatasetConfig {
  int64_t points = 2048;
  int64_t oversample = 4;
  int64_t faces = 1024;
  int num_views = 24;
  int width = 64;
  int height = 64;
  double camera_radius = 2.5;
  double fov_deg = 56.0;
  uint64_t seed = 0;
};

struct ArchiveEntry {
  std::string id;
  std::optional<int> label;
  std::map<std::string, std::string> blobs;  // role -> relative path
};

// Directory layout: manifest.jsonl (one entry per object), dataset.json
// (the resolved DatasetConfig), blobs/*.bin tensor blobs. Views for one
// object are stacked in a single [V,H,W,3] blob addressed by slab reads.
class ArchiveWriter {
 public:
  ArchiveWriter(std::string dir, const DatasetConfig& config);

  void add_sample(const TriModalSample& sample);
  void finish();  // writes manifest.jsonl + dataset.json

  int64_t count() const { return static_cast<int64_t>(entries_.size()); }
  uint64_t bytes_written() const { return bytes_; }

 private:
  std::string dir_;
  DatasetConfig config_;
  std::vector<ArchiveEntry> entries_;
  uint64_t bytes_ = 0;
  bool finished_ = false;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(std::string dir);

  int64_t size() const { return static_cast<int64_t>(entries_.size()); }
  const DatasetConfig& config() const { return config_; }
  const ArchiveEntry& entry(int64_t index) const { return entries_.at(static_cast<size_t>(index)); }
  int64_t index_of(const std::string& id) const;

  FaceFeatureSet load_mesh_features(int64_t index) const;
  PointCloud load_point_cloud(int64_t index) const;
  ImageView load_view(int64_t index, int view) const;
  int num_views() const { return config_.num_views; }

  TriModalSample load_sample(int64_t index, const std::vector<int>& view_ids) const;

  std::vector<int> labels() const;  // -1 where absent

 private:
  std::string dir_;
  DatasetConfig config_;
  std::vector<ArchiveEntry> entries_;
  std::map<std::string, int64_t> by_id_;
};

// Point-cloud part segmentation record: unit-sphere points with one part
// class per point, plus the shape's category (family) id.
struct SegmentationRecord {
  std::string object_id;
  int category = 0;
  Tensor points;                // [N,3]
  std::vector<int32_t> labels;  // length N
};

void write_segmentation_archive(const std::string& dir,
                                const std::vector<SegmentationRecord>& records,
                                int64_t points_per_shape, uint64_t seed);
std::vector<SegmentationRecord> read_segmentation_archive(const std::string& dir);

DatasetConfig dataset_config_from_json_file(const std::string& path);

}  // namespace trimodal
