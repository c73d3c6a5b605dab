// SPDX-License-Identifier: Apache-2.0
#include "trimodal/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "trimodal/rng.hpp"

namespace trimodal {

double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

Vec3 normalized(const Vec3& v) {
  double n = norm(v);
  if (n == 0.0) throw std::domain_error("cannot normalize zero vector");
  return v / n;
}

double MeshObject::face_area(size_t f) const {
  const Face& t = faces[f];
  Vec3 e1 = vertices[t.b] - vertices[t.a];
  Vec3 e2 = vertices[t.c] - vertices[t.a];
  return 0.5 * norm(cross(e1, e2));
}

Vec3 MeshObject::face_normal(size_t f) const {
  const Face& t = faces[f];
  Vec3 n = cross(vertices[t.b] - vertices[t.a], vertices[t.c] - vertices[t.a]);
  double len = norm(n);
  if (len == 0.0) return {0, 0, 0};
  return n / len;
}

Vec3 MeshObject::centroid_of_vertices() const {
  Vec3 c;
  for (const Vec3& v : vertices) c += v;
  return c / static_cast<double>(vertices.size());
}

void MeshObject::validate() const {
  if (faces.empty()) throw std::invalid_argument("mesh has no faces");
  uint32_t n = static_cast<uint32_t>(vertices.size());
  for (const Face& f : faces) {
    if (f.a >= n || f.b >= n || f.c >= n)
      throw std::invalid_argument("face index out of range");
    if (f.a == f.b || f.b == f.c || f.a == f.c)
      throw std::invalid_argument("face repeats a vertex index");
  }
}

namespace {

[[noreturn]] void parse_fail(const std::string& origin, size_t line, const std::string& what) {
  std::ostringstream os;
  os << origin << ":" << line << ": " << what;
  throw std::runtime_error(os.str());
}

// next non-empty, non-comment line; returns false at EOF
bool next_content_line(std::istream& in, std::string& line, size_t& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) continue;
    if (line[start] == '#') continue;
    return true;
  }
  return false;
}

}  // namespace

MeshObject parse_off(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;

  if (!next_content_line(in, line, lineno)) parse_fail(origin, lineno, "empty file");

  // The counts may share the header line ("OFF 8 12 0") or follow it.
  std::istringstream header(line);
  std::string magic;
  header >> magic;
  if (magic != "OFF") parse_fail(origin, lineno, "missing OFF header");

  long long nv = -1, nf = -1, ne = 0;
  if (!(header >> nv)) {
    if (!next_content_line(in, line, lineno)) parse_fail(origin, lineno, "missing counts line");
    std::istringstream counts(line);
    if (!(counts >> nv >> nf >> ne)) parse_fail(origin, lineno, "malformed counts line");
  } else if (!(header >> nf >> ne)) {
    parse_fail(origin, lineno, "malformed counts on header line");
  }
  if (nv < 0 || nf < 0) parse_fail(origin, lineno, "negative counts");

  MeshObject mesh;
  mesh.vertices.reserve(static_cast<size_t>(nv));
  for (long long i = 0; i < nv; ++i) {
    if (!next_content_line(in, line, lineno))
      parse_fail(origin, lineno, "unexpected end of file in vertex list");
    std::istringstream vs(line);
    Vec3 v;
    if (!(vs >> v.x >> v.y >> v.z)) parse_fail(origin, lineno, "malformed vertex line");
    mesh.vertices.push_back(v);
  }

  size_t dropped = 0;
  for (long long i = 0; i < nf; ++i) {
    if (!next_content_line(in, line, lineno))
      parse_fail(origin, lineno, "unexpected end of file in face list");
    std::istringstream fs(line);
    long long arity = 0;
    if (!(fs >> arity) || arity < 3) parse_fail(origin, lineno, "malformed face line");
    std::vector<uint32_t> poly(static_cast<size_t>(arity));
    for (long long k = 0; k < arity; ++k) {
      long long idx;
      if (!(fs >> idx)) parse_fail(origin, lineno, "face lists fewer indices than declared");
      if (idx < 0 || idx >= nv) parse_fail(origin, lineno, "face index out of range");
      poly[static_cast<size_t>(k)] = static_cast<uint32_t>(idx);
    }
    for (size_t k = 1; k + 1 < poly.size(); ++k) {
      Face f{poly[0], poly[k], poly[k + 1]};
      if (f.a == f.b || f.b == f.c || f.a == f.c) {
        ++dropped;
        continue;
      }
      mesh.faces.push_back(f);
    }
  }
  (void)dropped;

  if (mesh.faces.empty()) parse_fail(origin, lineno, "mesh has no usable faces");
  mesh.validate();
  return mesh;
}

MeshObject load_mesh(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open mesh file " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  MeshObject mesh = parse_off(buf.str(), path);
  mesh.object_id = path;
  return mesh;
}

std::vector<std::array<int32_t, 3>> face_adjacency(const MeshObject& mesh) {
  // edge (lo,hi) -> faces sharing it
  std::map<std::pair<uint32_t, uint32_t>, std::vector<int32_t>> edges;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    const uint32_t idx[3] = {t.a, t.b, t.c};
    for (int e = 0; e < 3; ++e) {
      uint32_t u = idx[e], v = idx[(e + 1) % 3];
      edges[{std::min(u, v), std::max(u, v)}].push_back(static_cast<int32_t>(f));
    }
  }
  std::vector<std::array<int32_t, 3>> nbr(mesh.faces.size());
  for (size_t f = 0; f < mesh.faces.size(); ++f)
    nbr[f] = {static_cast<int32_t>(f), static_cast<int32_t>(f), static_cast<int32_t>(f)};
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    const uint32_t idx[3] = {t.a, t.b, t.c};
    for (int e = 0; e < 3; ++e) {
      uint32_t u = idx[e], v = idx[(e + 1) % 3];
      const auto& shared = edges[{std::min(u, v), std::max(u, v)}];
      for (int32_t other : shared) {
        if (other != static_cast<int32_t>(f)) {
          nbr[f][static_cast<size_t>(e)] = other;
          break;
        }
      }
    }
  }
  return nbr;
}

FaceFeatureSet extract_face_features(const MeshObject& mesh, int64_t target_faces,
                                     uint64_t seed) {
  mesh.validate();
  if (target_faces <= 0) throw std::invalid_argument("target face count must be positive");

  // drop zero-area faces first; adjacency is built on the survivors
  std::vector<size_t> keep;
  for (size_t f = 0; f < mesh.faces.size(); ++f)
    if (mesh.face_area(f) > 0.0) keep.push_back(f);
  if (keep.empty()) throw std::runtime_error("all faces are degenerate");

  MeshObject pruned;
  pruned.vertices = mesh.vertices;
  for (size_t f : keep) pruned.faces.push_back(mesh.faces[f]);

  auto adjacency = face_adjacency(pruned);
  int64_t have = static_cast<int64_t>(pruned.faces.size());

  // base selection: the pruned faces, subsampled if over budget
  std::vector<int64_t> base(static_cast<size_t>(std::min(have, target_faces)));
  if (have > target_faces) {
    std::vector<int64_t> all(static_cast<size_t>(have));
    std::iota(all.begin(), all.end(), 0);
    Rng rng(derive_seed(seed, "face-subset"));
    rng.shuffle(all.begin(), all.end());
    all.resize(static_cast<size_t>(target_faces));
    std::sort(all.begin(), all.end());
    base = all;
  } else {
    std::iota(base.begin(), base.end(), 0);
  }
  int64_t base_count = static_cast<int64_t>(base.size());

  // old face id -> slot within the base selection (-1 when dropped)
  std::vector<int64_t> slot_of(static_cast<size_t>(have), -1);
  for (int64_t s = 0; s < base_count; ++s) slot_of[static_cast<size_t>(base[s])] = s;

  FaceFeatureSet out;
  out.count = target_faces;
  out.centers.resize(static_cast<size_t>(target_faces) * 3);
  out.corner_vectors.resize(static_cast<size_t>(target_faces) * 9);
  out.normals.resize(static_cast<size_t>(target_faces) * 3);
  out.neighbor_index.resize(static_cast<size_t>(target_faces) * 3);

  for (int64_t slot = 0; slot < target_faces; ++slot) {
    int64_t src_slot = slot % base_count;  // cyclic repeat padding
    int64_t block = (slot / base_count) * base_count;
    int64_t face_id = base[static_cast<size_t>(src_slot)];
    const Face& t = pruned.faces[static_cast<size_t>(face_id)];
    Vec3 v0 = pruned.vertices[t.a], v1 = pruned.vertices[t.b], v2 = pruned.vertices[t.c];
    Vec3 center = (v0 + v1 + v2) / 3.0;
    Vec3 n = pruned.face_normal(static_cast<size_t>(face_id));

    out.centers[slot * 3 + 0] = center.x;
    out.centers[slot * 3 + 1] = center.y;
    out.centers[slot * 3 + 2] = center.z;
    const Vec3 corners[3] = {v0 - center, v1 - center, v2 - center};
    for (int k = 0; k < 3; ++k) {
      out.corner_vectors[slot * 9 + k * 3 + 0] = corners[k].x;
      out.corner_vectors[slot * 9 + k * 3 + 1] = corners[k].y;
      out.corner_vectors[slot * 9 + k * 3 + 2] = corners[k].z;
    }
    out.normals[slot * 3 + 0] = n.x;
    out.normals[slot * 3 + 1] = n.y;
    out.normals[slot * 3 + 2] = n.z;

    for (int e = 0; e < 3; ++e) {
      int32_t nb_face = adjacency[static_cast<size_t>(face_id)][static_cast<size_t>(e)];
      int64_t nb_slot = slot_of[static_cast<size_t>(nb_face)];
      int64_t mapped;
      if (nb_slot < 0) {
        mapped = slot;  // neighbor dropped by the subsample
      } else {
        // keep neighbors inside this copy's block when the copy exists there
        int64_t candidate = block + nb_slot;
        mapped = candidate < target_faces ? candidate : slot;
      }
      out.neighbor_index[slot * 3 + e] = static_cast<int32_t>(mapped);
    }
  }
  return out;
}

}  // namespace trimodal
