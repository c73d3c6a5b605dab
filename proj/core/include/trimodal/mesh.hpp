// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace trimodal {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double norm(const Vec3& v);
Vec3 normalized(const Vec3& v);

struct Face {
  uint32_t a = 0, b = 0, c = 0;
  uint32_t operator[](int i) const { return i == 0 ? a : (i == 1 ? b : c); }
};

// Triangle-only mesh. Non-triangular input faces are fan-split at load time;
// faces with repeated vertex indices never survive loading.
struct MeshObject {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::string object_id;
  std::optional<int> class_label;

  double face_area(size_t f) const;
  Vec3 face_normal(size_t f) const;  // zero vector for degenerate faces
  Vec3 centroid_of_vertices() const;

  // Throws std::invalid_argument when an index is out of range, a face
  // repeats a vertex, or the face list is empty.
  void validate() const;
};

// OFF reader. Fan-triangulates polygons, drops faces with repeated indices,
// and reports malformed input with a 1-based line number.
MeshObject load_mesh(const std::string& path);
MeshObject parse_off(const std::string& text, const std::string& origin);

// Per-face geometry consumed by the mesh encoder. All arrays are indexed by
// face slot [0, count); neighbor entries point at the face itself when a
// manifold neighbor is missing.
struct FaceFeatureSet {
  int64_t count = 0;
  std::vector<double> centers;         // count*3
  std::vector<double> corner_vectors;  // count*9, corners minus center
  std::vector<double> normals;         // count*3, unit
  std::vector<int32_t> neighbor_index; // count*3

  const double* center(int64_t f) const { return centers.data() + 3 * f; }
  const double* corners(int64_t f) const { return corner_vectors.data() + 9 * f; }
  const double* normal(int64_t f) const { return normals.data() + 3 * f; }
};

// Builds the fixed-size per-face descriptor tensor: degenerate faces are
// dropped, oversized meshes are subsampled (seeded), undersized ones are
// repeat-padded cyclically with neighbor indices remapped per copy block.
FaceFeatureSet extract_face_features(const MeshObject& mesh, int64_t target_faces,
                                     uint64_t seed = 0);

// Edge-sharing neighbors for the mesh as loaded (before any padding);
// entry f is the face's up-to-3 neighbors, self-filled where absent.
std::vector<std::array<int32_t, 3>> face_adjacency(const MeshObject& mesh);

}  // namespace trimodal
