// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "trimodal/archive.hpp"

namespace trimodal {

struct BuildReport {
  int64_t succeeded = 0;
  int64_t failed = 0;
  uint64_t bytes = 0;
};

// Builds a dataset archive from a JSONL manifest. Each manifest line is one
// object: {"id": ..., "label": ..} plus either {"path": "model.off"}
// (relative paths resolve against the manifest's directory) or
// {"generator": {"family": ..., "seed": ...}}. Per-object failures are
// logged to stderr and skipped; an archive with zero objects is an error.
BuildReport build_dataset(const std::string& manifest_path, const std::string& out_dir,
                          const DatasetConfig& config);

// One object through the full preparation pipeline: vertex normalization to
// the unit sphere, face descriptors, FPS point cloud, rendered views.
TriModalSample prepare_sample(const MeshObject& mesh, const DatasetConfig& config);

// Builds the toy part-segmentation archive: per_family shapes per family,
// each a point cloud with exact analytic part labels.
void build_toy_segmentation_archive(const std::string& dir, int per_family,
                                    int64_t points_per_shape, uint64_t seed);

}  // namespace trimodal
