// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "trimodal/mesh.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal {

// N x 3 coordinates, centered on the origin and scaled so the farthest
// point sits on the unit sphere (after sample_point_cloud).
struct PointCloud {
  Tensor points;  // [N, 3]

  int64_t size() const { return points.numel() == 0 ? 0 : points.rows(); }
};

// Greedy max-min selection: each pick maximizes its minimum distance to the
// already-selected set, ties broken by lowest index. Deterministic.
std::vector<int64_t> farthest_point_sample(const Tensor& points, int64_t n, int64_t start);

struct SurfaceSamples {
  Tensor points;               // [M, 3]
  std::vector<int64_t> faces;  // source face per sample
};

// Area-weighted triangle sampling with uniform barycentric coordinates.
SurfaceSamples sample_surface(const MeshObject& mesh, int64_t count, uint64_t seed);

// Surface sampling, FPS down to n, then unit-sphere normalization
// (centroid to origin, divide by max norm).
PointCloud sample_point_cloud(const MeshObject& mesh, int64_t n, int64_t oversample,
                              uint64_t seed);

// Same pipeline, also reporting each kept point's source face (used when
// points carry per-face part labels).
struct LabeledCloud {
  PointCloud cloud;
  std::vector<int64_t> source_faces;
};
LabeledCloud sample_point_cloud_with_faces(const MeshObject& mesh, int64_t n,
                                           int64_t oversample, uint64_t seed);

// Centers on the centroid and scales by the max norm, in place.
void normalize_to_unit_sphere(Tensor& points);

}  // namespace trimodal
