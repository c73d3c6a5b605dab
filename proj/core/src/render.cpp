// SPDX-License-Identifier: Apache-2.0
#include "trimodal/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "trimodal/rng.hpp"

namespace trimodal {

double phong_shade(const Vec3& unit_normal, const Vec3& to_light, const Vec3& to_view,
                   const PhongParams& p) {
  Vec3 n = unit_normal;
  // two-sided: orient the normal toward the viewer
  if (dot(n, to_view) < 0.0) n = n * -1.0;
  double ndotl = std::max(0.0, dot(n, to_light));
  Vec3 reflected = n * (2.0 * dot(n, to_light)) - to_light;
  double rdotv = std::max(0.0, dot(reflected, to_view));
  double value = p.material_grey * (p.ambient + p.diffuse * ndotl) +
                 p.specular * std::pow(rdotv, p.shininess);
  return std::clamp(value, 0.0, 1.0);
}

Vec3 sample_sphere_direction(double u, double v) {
  double z = 1.0 - 2.0 * u;
  double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  double phi = 2.0 * M_PI * v;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

namespace {

struct CameraFrame {
  Vec3 position;
  Vec3 right, up, forward;  // orthonormal; forward points at the target
};

CameraFrame look_at_origin(const Vec3& position) {
  CameraFrame f;
  f.position = position;
  f.forward = normalized(Vec3{0, 0, 0} - position);
  Vec3 world_up{0, 1, 0};
  if (std::abs(dot(f.forward, world_up)) > 0.999) world_up = {0, 0, 1};
  f.right = normalized(cross(f.forward, world_up));
  f.up = cross(f.right, f.forward);
  return f;
}

}  // namespace

ImageView render_single_view(const MeshObject& mesh, const Vec3& camera,
                             const RenderConfig& config, int view_index) {
  if (config.width <= 0 || config.height <= 0)
    throw std::invalid_argument("render: resolution must be positive");

  int64_t w = config.width, h = config.height;
  ImageView view;
  view.pixels = Tensor({h, w, 3});
  view.camera_position = camera;
  view.view_index = view_index;

  CameraFrame cam = look_at_origin(camera);
  double focal = (static_cast<double>(h) / 2.0) /
                 std::tan(config.fov_deg * M_PI / 180.0 / 2.0);

  std::vector<double> zbuf(static_cast<size_t>(w * h),
                           std::numeric_limits<double>::infinity());

  auto to_camera = [&](const Vec3& p) {
    Vec3 d = p - cam.position;
    return Vec3{dot(d, cam.right), dot(d, cam.up), dot(d, cam.forward)};
  };

  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    Vec3 world[3] = {mesh.vertices[t.a], mesh.vertices[t.b], mesh.vertices[t.c]};
    Vec3 pc[3] = {to_camera(world[0]), to_camera(world[1]), to_camera(world[2])};
    // near-plane clip: skip triangles touching the camera plane
    if (pc[0].z <= 1e-6 || pc[1].z <= 1e-6 || pc[2].z <= 1e-6) continue;

    Vec3 n = mesh.face_normal(f);
    if (norm(n) == 0.0) continue;

    double sx[3], sy[3], inv_z[3];
    for (int i = 0; i < 3; ++i) {
      sx[i] = focal * (pc[i].x / pc[i].z) + static_cast<double>(w) / 2.0;
      // +y in camera space goes up; rows grow downward
      sy[i] = static_cast<double>(h) / 2.0 - focal * (pc[i].y / pc[i].z);
      inv_z[i] = 1.0 / pc[i].z;
    }

    double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0]);
    if (area == 0.0) continue;

    int64_t min_x = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min({sx[0], sx[1], sx[2]}))));
    int64_t max_x = std::min<int64_t>(w - 1, static_cast<int64_t>(std::ceil(std::max({sx[0], sx[1], sx[2]}))));
    int64_t min_y = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min({sy[0], sy[1], sy[2]}))));
    int64_t max_y = std::min<int64_t>(h - 1, static_cast<int64_t>(std::ceil(std::max({sy[0], sy[1], sy[2]}))));

    for (int64_t py = min_y; py <= max_y; ++py) {
      for (int64_t px = min_x; px <= max_x; ++px) {
        double x = static_cast<double>(px) + 0.5;
        double y = static_cast<double>(py) + 0.5;
        double w0 = ((sx[1] - x) * (sy[2] - y) - (sx[2] - x) * (sy[1] - y)) / area;
        double w1 = ((sx[2] - x) * (sy[0] - y) - (sx[0] - x) * (sy[2] - y)) / area;
        double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;

        // perspective-correct interpolation via 1/z
        double izp = w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2];
        double z = 1.0 / izp;
        size_t pix = static_cast<size_t>(py * w + px);
        if (z >= zbuf[pix]) continue;
        zbuf[pix] = z;

        Vec3 surface = (world[0] * (w0 * inv_z[0]) + world[1] * (w1 * inv_z[1]) +
                        world[2] * (w2 * inv_z[2])) * z;
        Vec3 to_view = normalized(cam.position - surface);
        double shade = phong_shade(n, to_view, to_view, config.phong);
        double* dst = view.pixels.data() + (py * w + px) * 3;
        dst[0] = dst[1] = dst[2] = shade;
      }
    }
  }
  return view;
}

std::vector<ImageView> render_views(const MeshObject& mesh, const RenderConfig& config,
                                    uint64_t seed) {
  if (config.num_views < 1) throw std::invalid_argument("render: need at least one view");
  mesh.validate();

  std::vector<Vec3> cameras;
  if (!config.fixed_cameras.empty()) {
    cameras = config.fixed_cameras;
  } else {
    Rng rng(derive_seed(seed, "cameras"));
    cameras.reserve(static_cast<size_t>(config.num_views));
    for (int i = 0; i < config.num_views; ++i) {
      Vec3 dir = sample_sphere_direction(rng.uniform(), rng.uniform());
      cameras.push_back(dir * config.camera_radius);
    }
  }

  std::vector<ImageView> views;
  views.reserve(cameras.size());
  for (size_t i = 0; i < cameras.size(); ++i)
    views.push_back(render_single_view(mesh, cameras[i], config, static_cast<int>(i)));
  return views;
}

}  // namespace trimodal
