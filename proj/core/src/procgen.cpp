// SPDX-License-Identifier: Apache-2.0
#include "trimodal/procgen.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "trimodal/rng.hpp"

namespace trimodal {

namespace {

using json = nlohmann::json;

struct Builder {
  MeshObject mesh;
  std::vector<int32_t> parts;

  uint32_t vertex(double x, double y, double z) {
    mesh.vertices.push_back({x, y, z});
    return static_cast<uint32_t>(mesh.vertices.size() - 1);
  }
  void tri(uint32_t a, uint32_t b, uint32_t c, int32_t part) {
    mesh.faces.push_back({a, b, c});
    parts.push_back(part);
  }
  void quad(uint32_t a, uint32_t b, uint32_t c, uint32_t d, int32_t part) {
    tri(a, b, c, part);
    tri(a, c, d, part);
  }
};

// Axis-aligned box with each side tessellated grid_n x grid_n. Parts follow
// the face's axis: z-faces, x-faces, y-faces.
Builder build_box(Rng& rng) {
  Builder b;
  double hx = rng.uniform(0.35, 0.75);
  double hy = rng.uniform(0.35, 0.75);
  double hz = rng.uniform(0.35, 0.75);
  const int n = 3;

  // plane: fixed axis (0=x,1=y,2=z), sign; u/v sweep the other two axes
  auto emit_side = [&](int axis, double sign, int32_t part) {
    double he[3] = {hx, hy, hz};
    int ua = (axis + 1) % 3, va = (axis + 2) % 3;
    std::vector<uint32_t> grid((n + 1) * (n + 1));
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) {
        double coord[3];
        coord[axis] = sign * he[axis];
        coord[ua] = -he[ua] + 2.0 * he[ua] * static_cast<double>(i) / n;
        coord[va] = -he[va] + 2.0 * he[va] * static_cast<double>(j) / n;
        grid[i * (n + 1) + j] = b.vertex(coord[0], coord[1], coord[2]);
      }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        uint32_t v00 = grid[i * (n + 1) + j], v01 = grid[i * (n + 1) + j + 1];
        uint32_t v10 = grid[(i + 1) * (n + 1) + j], v11 = grid[(i + 1) * (n + 1) + j + 1];
        if (sign > 0)
          b.quad(v00, v10, v11, v01, part);
        else
          b.quad(v00, v01, v11, v10, part);
      }
  };
  emit_side(2, +1.0, 0);
  emit_side(2, -1.0, 0);
  emit_side(0, +1.0, 1);
  emit_side(0, -1.0, 1);
  emit_side(1, +1.0, 2);
  emit_side(1, -1.0, 2);
  return b;
}

Builder build_cylinder(Rng& rng) {
  Builder b;
  double radius = rng.uniform(0.3, 0.6);
  double half_h = rng.uniform(0.4, 0.9);
  const int segs = 16, rings = 3;

  // barrel
  std::vector<uint32_t> ring_verts((rings + 1) * segs);
  for (int r = 0; r <= rings; ++r) {
    double y = -half_h + 2.0 * half_h * static_cast<double>(r) / rings;
    for (int s = 0; s < segs; ++s) {
      double a = 2.0 * M_PI * static_cast<double>(s) / segs;
      ring_verts[r * segs + s] = b.vertex(radius * std::cos(a), y, radius * std::sin(a));
    }
  }
  for (int r = 0; r < rings; ++r)
    for (int s = 0; s < segs; ++s) {
      int sn = (s + 1) % segs;
      b.quad(ring_verts[r * segs + s], ring_verts[r * segs + sn],
             ring_verts[(r + 1) * segs + sn], ring_verts[(r + 1) * segs + s], 4);
    }
  // caps (triangle fans around the axis)
  uint32_t top_center = b.vertex(0, half_h, 0);
  uint32_t bottom_center = b.vertex(0, -half_h, 0);
  for (int s = 0; s < segs; ++s) {
    int sn = (s + 1) % segs;
    b.tri(top_center, ring_verts[rings * segs + s], ring_verts[rings * segs + sn], 3);
    b.tri(bottom_center, ring_verts[sn], ring_verts[s], 3);
  }
  return b;
}

Builder build_cone(Rng& rng) {
  Builder b;
  double radius = rng.uniform(0.35, 0.65);
  double height = rng.uniform(0.8, 1.6);
  const int segs = 16, rings = 3;

  // lateral surface tessellated in rings so faces stay compact
  std::vector<uint32_t> ring_verts(rings * segs);
  for (int r = 0; r < rings; ++r) {
    double f = static_cast<double>(r) / rings;
    double y = -height / 2.0 + height * f;
    double rr = radius * (1.0 - f);
    for (int s = 0; s < segs; ++s) {
      double a = 2.0 * M_PI * static_cast<double>(s) / segs;
      ring_verts[r * segs + s] = b.vertex(rr * std::cos(a), y, rr * std::sin(a));
    }
  }
  uint32_t apex = b.vertex(0, height / 2.0, 0);
  for (int r = 0; r + 1 < rings; ++r)
    for (int s = 0; s < segs; ++s) {
      int sn = (s + 1) % segs;
      b.quad(ring_verts[r * segs + s], ring_verts[r * segs + sn],
             ring_verts[(r + 1) * segs + sn], ring_verts[(r + 1) * segs + s], 6);
    }
  for (int s = 0; s < segs; ++s) {
    int sn = (s + 1) % segs;
    b.tri(apex, ring_verts[(rings - 1) * segs + s], ring_verts[(rings - 1) * segs + sn], 6);
  }
  uint32_t base_center = b.vertex(0, -height / 2.0, 0);
  for (int s = 0; s < segs; ++s) {
    int sn = (s + 1) % segs;
    b.tri(base_center, ring_verts[sn], ring_verts[s], 5);
  }
  return b;
}

}  // namespace

int family_label_of(const std::string& family) {
  if (family == "box") return 0;
  if (family == "cylinder") return 1;
  if (family == "cone") return 2;
  throw std::invalid_argument("unknown shape family: " + family);
}

std::vector<int32_t> family_part_classes(int family_label) {
  switch (family_label) {
    case 0: return {0, 1, 2};
    case 1: return {3, 4};
    case 2: return {5, 6};
  }
  throw std::invalid_argument("unknown family label");
}

GeneratedShape generate_shape(const GeneratorSpec& spec) {
  Rng rng(derive_seed(spec.seed, "shape-params"));
  int label = family_label_of(spec.family);

  Builder b;
  switch (label) {
    case 0: b = build_box(rng); break;
    case 1: b = build_cylinder(rng); break;
    case 2: b = build_cone(rng); break;
  }

  // per-object deformation: anisotropic stretch, yaw, mild vertex noise
  double sx = rng.uniform(0.8, 1.25);
  double sy = rng.uniform(0.8, 1.25);
  double sz = rng.uniform(0.8, 1.25);
  double yaw = rng.uniform(0.0, 2.0 * M_PI);
  double c = std::cos(yaw), s = std::sin(yaw);
  double noise = rng.uniform(0.0, 0.01);
  for (Vec3& v : b.mesh.vertices) {
    v.x *= sx;
    v.y *= sy;
    v.z *= sz;
    double x = v.x, z = v.z;
    v.x = c * x + s * z;
    v.z = -s * x + c * z;
    if (noise > 0) {
      v.x += rng.normal(0.0, noise);
      v.y += rng.normal(0.0, noise);
      v.z += rng.normal(0.0, noise);
    }
  }

  GeneratedShape out;
  out.mesh = std::move(b.mesh);
  out.face_parts = std::move(b.parts);
  out.family_label = label;
  out.mesh.class_label = label;
  out.mesh.validate();
  return out;
}

void write_toy_manifest(const std::string& path, int per_family, uint64_t seed,
                        const std::string& id_prefix) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write manifest " + path);
  const char* families[] = {"box", "cylinder", "cone"};
  int idx = 0;
  for (int i = 0; i < per_family; ++i) {
    for (int fam = 0; fam < kNumFamilies; ++fam, ++idx) {
      json rec;
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%s_%03d", id_prefix.c_str(), families[fam], i);
      rec["id"] = id;
      rec["label"] = fam;
      rec["generator"] = {{"family", families[fam]},
                          {"seed", derive_seed(seed, "toy-object", static_cast<uint64_t>(idx))}};
      f << rec.dump() << "\n";
    }
  }
}

}  // namespace trimodal
