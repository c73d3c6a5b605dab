// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>

#include "trimodal/mesh.hpp"
#include "trimodal/render.hpp"
#include "trimodal/sampling.hpp"

namespace trimodal {

struct AugmentConfig {
  bool rotate = true;                    // yaw about the up (y) axis
  double jitter_sigma = 0.02;            // per-point Gaussian noise; 0 disables
  double crop_min_area = 0.8;            // image crop area fraction lower bound
  double crop_max_area = 1.0;
  double flip_prob = 0.5;
  std::optional<double> forced_angle;    // pins the rotation angle (tests)
};

// Rotation by `angle` about the y axis applied to [N,3] rows, in place.
void rotate_y_rows(Tensor& rows, double angle);

PointCloud augment_point_cloud(const PointCloud& pc, const AugmentConfig& cfg, uint64_t seed);

// Crop (area fraction resampled back to full size, bilinear) and horizontal
// flip. Pixel range [0,1] is preserved.
ImageView augment_image(const ImageView& img, const AugmentConfig& cfg, uint64_t seed);

// Rotates centers, corner vectors, and normals by a common yaw.
FaceFeatureSet augment_mesh_features(const FaceFeatureSet& faces, const AugmentConfig& cfg,
                                     uint64_t seed);

// Bilinear resize of an [H,W,3] image tensor.
Tensor resize_bilinear(const Tensor& pixels, int64_t out_h, int64_t out_w);

}  // namespace trimodal
