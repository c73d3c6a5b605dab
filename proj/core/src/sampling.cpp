// SPDX-License-Identifier: Apache-2.0
#include "trimodal/sampling.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "trimodal/rng.hpp"

namespace trimodal {

std::vector<int64_t> farthest_point_sample(const Tensor& points, int64_t n, int64_t start) {
  if (points.rank() != 2 || points.cols() != 3)
    throw std::invalid_argument("farthest_point_sample: expects [M,3] points");
  int64_t m = points.rows();
  if (n > m) throw std::invalid_argument("farthest_point_sample: n exceeds point count");
  if (n <= 0) throw std::invalid_argument("farthest_point_sample: n must be positive");
  if (start < 0 || start >= m) throw std::invalid_argument("farthest_point_sample: bad start");

  std::vector<int64_t> picked;
  picked.reserve(static_cast<size_t>(n));
  picked.push_back(start);

  // squared distance to the nearest selected point
  std::vector<double> best(static_cast<size_t>(m), std::numeric_limits<double>::infinity());
  auto relax = [&](int64_t sel) {
    const double* s = points.data() + sel * 3;
    for (int64_t i = 0; i < m; ++i) {
      const double* p = points.data() + i * 3;
      double dx = p[0] - s[0], dy = p[1] - s[1], dz = p[2] - s[2];
      double d = dx * dx + dy * dy + dz * dz;
      if (d < best[static_cast<size_t>(i)]) best[static_cast<size_t>(i)] = d;
    }
  };
  relax(start);

  while (static_cast<int64_t>(picked.size()) < n) {
    int64_t arg = -1;
    double far = -1.0;
    for (int64_t i = 0; i < m; ++i) {
      double d = best[static_cast<size_t>(i)];
      if (d > far) {  // strict: ties keep the lowest index
        far = d;
        arg = i;
      }
    }
    picked.push_back(arg);
    relax(arg);
  }
  return picked;
}

SurfaceSamples sample_surface(const MeshObject& mesh, int64_t count, uint64_t seed) {
  mesh.validate();
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cumulative[f] = total;
  }
  if (total <= 0.0) throw std::runtime_error("mesh has zero total surface area");

  Rng rng(derive_seed(seed, "surface"));
  SurfaceSamples out;
  out.points = Tensor({count, 3});
  out.faces.resize(static_cast<size_t>(count));

  for (int64_t i = 0; i < count; ++i) {
    double u = rng.uniform() * total;
    size_t f = static_cast<size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    if (f >= mesh.faces.size()) f = mesh.faces.size() - 1;

    // uniform barycentric via square-root trick
    double r1 = std::sqrt(rng.uniform());
    double r2 = rng.uniform();
    double w0 = 1.0 - r1, w1 = r1 * (1.0 - r2), w2 = r1 * r2;
    const Face& t = mesh.faces[f];
    const Vec3& a = mesh.vertices[t.a];
    const Vec3& b = mesh.vertices[t.b];
    const Vec3& c = mesh.vertices[t.c];
    out.points.at(i, 0) = w0 * a.x + w1 * b.x + w2 * c.x;
    out.points.at(i, 1) = w0 * a.y + w1 * b.y + w2 * c.y;
    out.points.at(i, 2) = w0 * a.z + w1 * b.z + w2 * c.z;
    out.faces[static_cast<size_t>(i)] = static_cast<int64_t>(f);
  }
  return out;
}

void normalize_to_unit_sphere(Tensor& points) {
  int64_t n = points.rows();
  double cx = 0, cy = 0, cz = 0;
  for (int64_t i = 0; i < n; ++i) {
    cx += points.at(i, 0);
    cy += points.at(i, 1);
    cz += points.at(i, 2);
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);
  cz /= static_cast<double>(n);
  double max_sq = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    points.at(i, 0) -= cx;
    points.at(i, 1) -= cy;
    points.at(i, 2) -= cz;
    double sq = points.at(i, 0) * points.at(i, 0) + points.at(i, 1) * points.at(i, 1) +
                points.at(i, 2) * points.at(i, 2);
    max_sq = std::max(max_sq, sq);
  }
  if (max_sq == 0.0) throw std::runtime_error("cannot normalize a single-point cloud");
  double inv = 1.0 / std::sqrt(max_sq);
  for (int64_t i = 0; i < points.numel(); ++i) points[i] *= inv;
}

LabeledCloud sample_point_cloud_with_faces(const MeshObject& mesh, int64_t n,
                                           int64_t oversample, uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("point count must be positive");
  if (oversample < 1) throw std::invalid_argument("oversample factor must be >= 1");
  SurfaceSamples candidates = sample_surface(mesh, n * oversample, seed);
  auto picked = farthest_point_sample(candidates.points, n, /*start=*/0);

  LabeledCloud out;
  out.cloud.points = Tensor({n, 3});
  out.source_faces.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t c = 0; c < 3; ++c) out.cloud.points.at(i, c) = candidates.points.at(picked[static_cast<size_t>(i)], c);
    out.source_faces[static_cast<size_t>(i)] = candidates.faces[static_cast<size_t>(picked[static_cast<size_t>(i)])];
  }
  normalize_to_unit_sphere(out.cloud.points);
  return out;
}

PointCloud sample_point_cloud(const MeshObject& mesh, int64_t n, int64_t oversample,
                              uint64_t seed) {
  return sample_point_cloud_with_faces(mesh, n, oversample, seed).cloud;
}

}  // namespace trimodal
