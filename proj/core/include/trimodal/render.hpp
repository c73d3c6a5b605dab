// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "trimodal/mesh.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal {

struct ImageView {
  Tensor pixels;  // [H, W, 3], values in [0,1]
  Vec3 camera_position;
  int view_index = 0;

  int64_t height() const { return pixels.dim(0); }
  int64_t width() const { return pixels.dim(1); }
};

struct PhongParams {
  double ambient = 0.1;
  double diffuse = 0.7;
  double specular = 0.2;
  double shininess = 32.0;
  double material_grey = 0.75;
};

struct RenderConfig {
  int num_views = 24;
  int width = 64;
  int height = 64;
  double camera_radius = 2.5;
  double fov_deg = 56.0;  // full vertical field of view
  PhongParams phong;
  // When non-empty, cameras are taken from here instead of the random
  // sphere placement (test hook and fixed-ring setups).
  std::vector<Vec3> fixed_cameras;
};

// Single-channel Phong shade for a surface patch: ambient plus Lambertian
// diffuse plus specular highlight, grey material under white light.
double phong_shade(const Vec3& unit_normal, const Vec3& to_light, const Vec3& to_view,
                   const PhongParams& p);

// Software z-buffered rasterizer. Cameras sit on a sphere around the origin
// looking at it; the light rides with the camera; background stays black.
// The mesh is expected in unit-sphere coordinates. Deterministic per seed.
std::vector<ImageView> render_views(const MeshObject& mesh, const RenderConfig& config,
                                    uint64_t seed);

ImageView render_single_view(const MeshObject& mesh, const Vec3& camera,
                             const RenderConfig& config, int view_index);

// Uniformly distributed direction on the unit sphere.
Vec3 sample_sphere_direction(double u, double v);

}  // namespace trimodal
