// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "trimodal/archive.hpp"
#include "trimodal/augment.hpp"
#include "trimodal/dataprep.hpp"
#include "trimodal/mesh.hpp"
#include "trimodal/procgen.hpp"
#include "trimodal/render.hpp"
#include "trimodal/sampling.hpp"

using namespace trimodal;
using trimodal::testing::TempDir;
using trimodal::testing::random_tensor;

namespace {

// independent exhaustive greedy recomputation (no incremental bookkeeping)
std::vector<int64_t> fps_oracle(const Tensor& pts, int64_t n, int64_t start) {
  std::vector<int64_t> selected{start};
  auto dist2 = [&](int64_t a, int64_t b) {
    double d = 0;
    for (int64_t c = 0; c < 3; ++c) {
      double diff = pts.at(a, c) - pts.at(b, c);
      d += diff * diff;
    }
    return d;
  };
  while (static_cast<int64_t>(selected.size()) < n) {
    int64_t best = -1;
    double best_d = -1.0;
    for (int64_t i = 0; i < pts.rows(); ++i) {
      double dmin = std::numeric_limits<double>::infinity();
      for (int64_t s : selected) dmin = std::min(dmin, dist2(i, s));
      if (dmin > best_d) {
        best_d = dmin;
        best = i;
      }
    }
    selected.push_back(best);
  }
  return selected;
}

const char* kTetraOff =
    "OFF\n"
    "4 4 0\n"
    "0 0 0\n"
    "1 0 0\n"
    "0 1 0\n"
    "0 0 1\n"
    "3 0 2 1\n"
    "3 0 1 3\n"
    "3 0 3 2\n"
    "3 1 2 3\n";

MeshObject unit_cube() {
  // side 1, centered at the origin, outward-facing quads
  MeshObject m;
  for (int z = 0; z <= 1; ++z)
    for (int y = 0; y <= 1; ++y)
      for (int x = 0; x <= 1; ++x)
        m.vertices.push_back({x - 0.5, y - 0.5, z - 0.5});
  auto quad = [&](uint32_t a, uint32_t b, uint32_t c, uint32_t d) {
    m.faces.push_back({a, b, c});
    m.faces.push_back({a, c, d});
  };
  quad(4, 5, 7, 6);  // +z
  quad(1, 0, 2, 3);  // -z
  quad(5, 1, 3, 7);  // +x
  quad(0, 4, 6, 2);  // -x
  quad(6, 7, 3, 2);  // +y
  quad(0, 1, 5, 4);  // -y
  m.object_id = "cube";
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// OFF loading

TEST_CASE("off parser reads a tetrahedron") {
  MeshObject m = parse_off(kTetraOff, "tetra");
  CHECK(m.vertices.size() == 4);
  CHECK(m.faces.size() == 4);
}

TEST_CASE("off parser fan-splits a quad into two triangles") {
  const char* text =
      "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
  MeshObject m = parse_off(text, "quad");
  REQUIRE(m.faces.size() == 2);
  CHECK(m.faces[0].a == 0);
  CHECK(m.faces[0].b == 1);
  CHECK(m.faces[0].c == 2);
  CHECK(m.faces[1].a == 0);
  CHECK(m.faces[1].b == 2);
  CHECK(m.faces[1].c == 3);
}

TEST_CASE("off parser reports the line of a short vertex list") {
  const char* text = "OFF\n5 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n";
  CHECK_THROWS_WITH_AS(parse_off(text, "bad"),
                       doctest::Contains("bad:7"), std::runtime_error);
}

TEST_CASE("off parser rejects counts-only garbage and missing headers") {
  CHECK_THROWS(parse_off("PLY\n1 1 1\n", "x"));
  CHECK_THROWS(parse_off("OFF\nnot numbers\n", "x"));
  CHECK_THROWS(parse_off("OFF\n3 0 0\n0 0 0\n1 0 0\n0 1 0\n", "x"));  // no faces
}

TEST_CASE("off header may carry counts inline") {
  const char* text = "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
  CHECK(parse_off(text, "inline").faces.size() == 1);
}

// ---------------------------------------------------------------------------
// farthest point sampling

TEST_CASE("fps picks the far end of a collinear run") {
  Tensor pts({4, 3});
  for (int64_t i = 0; i < 4; ++i) pts.at(i, 0) = static_cast<double>(i);
  auto picked = farthest_point_sample(pts, 2, 0);
  CHECK(picked == std::vector<int64_t>({0, 3}));
}

TEST_CASE("fps breaks ties by the lowest index on the unit square") {
  Tensor pts({4, 3});
  // (0,0), (0,1), (1,0), (1,1)
  pts.at(1, 1) = 1;
  pts.at(2, 0) = 1;
  pts.at(3, 0) = 1;
  pts.at(3, 1) = 1;
  auto picked = farthest_point_sample(pts, 3, 0);
  REQUIRE(picked.size() == 3);
  CHECK(picked[0] == 0);
  CHECK(picked[1] == 3);  // the opposite corner
  CHECK(picked[2] == 1);  // tied pair {1,2}: lowest index
}

TEST_CASE("fps with n = M returns every index in selection order") {
  Rng rng(31);
  Tensor pts = random_tensor({6, 3}, rng);
  auto picked = farthest_point_sample(pts, 6, 2);
  std::set<int64_t> unique(picked.begin(), picked.end());
  CHECK(unique.size() == 6);
  CHECK(picked[0] == 2);
}

TEST_CASE("fps rejects n above the point count") {
  Tensor pts({3, 3});
  CHECK_THROWS(farthest_point_sample(pts, 4, 0));
}

TEST_CASE("fps equals brute-force greedy on random sets") {
  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    int64_t m = 2 + rng.below(9);  // M <= 10
    Tensor pts = random_tensor({m, 3}, rng);
    int64_t n = 1 + rng.below(m);
    int64_t start = rng.below(m);
    CHECK(farthest_point_sample(pts, n, start) == fps_oracle(pts, n, start));
  }
}

// ---------------------------------------------------------------------------
// surface sampling and normalization

TEST_CASE("surface samples of one triangle satisfy barycentric containment") {
  MeshObject m;
  m.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 2, 0}};
  m.faces = {{0, 1, 2}};
  m.object_id = "tri";
  SurfaceSamples s = sample_surface(m, 200, 5);
  for (int64_t i = 0; i < 200; ++i) {
    double x = s.points.at(i, 0), y = s.points.at(i, 1), z = s.points.at(i, 2);
    CHECK(z == 0.0);
    CHECK(x >= -1e-12);
    CHECK(y >= -1e-12);
    CHECK(x / 2 + y / 2 <= 1.0 + 1e-12);
    CHECK(s.faces[static_cast<size_t>(i)] == 0);
  }
}

TEST_CASE("sampled clouds sit centered in the unit sphere") {
  GeneratedShape shape = generate_shape({"cylinder", 77});
  PointCloud pc = sample_point_cloud(shape.mesh, 256, 4, 99);
  REQUIRE(pc.points.shape() == std::vector<int64_t>({256, 3}));

  double cx = 0, cy = 0, cz = 0, max_norm = 0;
  for (int64_t i = 0; i < 256; ++i) {
    cx += pc.points.at(i, 0);
    cy += pc.points.at(i, 1);
    cz += pc.points.at(i, 2);
    max_norm = std::max(max_norm, std::sqrt(pc.points.at(i, 0) * pc.points.at(i, 0) +
                                            pc.points.at(i, 1) * pc.points.at(i, 1) +
                                            pc.points.at(i, 2) * pc.points.at(i, 2)));
  }
  CHECK(std::abs(cx / 256) < 1e-6);
  CHECK(std::abs(cy / 256) < 1e-6);
  CHECK(std::abs(cz / 256) < 1e-6);
  CHECK(max_norm == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("same mesh and seed give bitwise-identical clouds") {
  GeneratedShape shape = generate_shape({"box", 3});
  PointCloud a = sample_point_cloud(shape.mesh, 128, 4, 123);
  PointCloud b = sample_point_cloud(shape.mesh, 128, 4, 123);
  for (int64_t i = 0; i < a.points.numel(); ++i) CHECK(a.points[i] == b.points[i]);
}

TEST_CASE("zero-area meshes cannot be sampled") {
  MeshObject m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  m.faces = {{0, 1, 2}};  // collinear
  m.object_id = "degenerate";
  CHECK_THROWS(sample_point_cloud(m, 16, 4, 0));
}

// ---------------------------------------------------------------------------
// face features

TEST_CASE("single-triangle face features match the definitions") {
  MeshObject m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  m.object_id = "tri";
  FaceFeatureSet f = extract_face_features(m, 1);
  REQUIRE(f.count == 1);
  CHECK(f.center(0)[0] == doctest::Approx(1.0 / 3));
  CHECK(f.center(0)[1] == doctest::Approx(1.0 / 3));
  double corner_sum[3] = {0, 0, 0};
  for (int k = 0; k < 3; ++k)
    for (int c = 0; c < 3; ++c) corner_sum[c] += f.corners(0)[k * 3 + c];
  for (int c = 0; c < 3; ++c) CHECK(std::abs(corner_sum[c]) < 1e-12);
  CHECK(std::abs(f.normal(0)[2]) == doctest::Approx(1.0));
  CHECK(f.neighbor_index == std::vector<int32_t>({0, 0, 0}));
}

TEST_CASE("tetrahedron faces have three distinct neighbors each") {
  MeshObject m = parse_off(kTetraOff, "tetra");
  FaceFeatureSet f = extract_face_features(m, 4);
  for (int64_t face = 0; face < 4; ++face) {
    std::set<int32_t> nbrs(f.neighbor_index.begin() + face * 3,
                           f.neighbor_index.begin() + face * 3 + 3);
    CHECK(nbrs.size() == 3);
    CHECK(nbrs.count(static_cast<int32_t>(face)) == 0);
  }
}

TEST_CASE("padding repeats faces cyclically with block-local neighbors") {
  MeshObject m = parse_off(kTetraOff, "tetra");
  FaceFeatureSet f = extract_face_features(m, 8);
  REQUIRE(f.count == 8);
  for (int64_t face = 0; face < 4; ++face) {
    for (int c = 0; c < 3; ++c)
      CHECK(f.center(face + 4)[c] == f.center(face)[c]);
    for (int e = 0; e < 3; ++e)
      CHECK(f.neighbor_index[(face + 4) * 3 + e] == f.neighbor_index[face * 3 + e] + 4);
  }
}

TEST_CASE("face features drop degenerate faces and keep normals unit") {
  MeshObject m = parse_off(kTetraOff, "tetra");
  // append a zero-area face
  m.vertices.push_back({5, 5, 5});
  m.vertices.push_back({6, 6, 6});
  m.vertices.push_back({7, 7, 7});
  m.faces.push_back({4, 5, 6});
  FaceFeatureSet f = extract_face_features(m, 4, 0);
  for (int64_t i = 0; i < f.count; ++i) {
    double n = 0;
    for (int c = 0; c < 3; ++c) n += f.normal(i)[c] * f.normal(i)[c];
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
    // the far-away degenerate face never appears
    CHECK(std::abs(f.center(i)[0]) < 2.0);
  }
}

TEST_CASE("neighbor relation is symmetric on a closed manifold") {
  GeneratedShape shape = generate_shape({"box", 11});
  auto adjacency = face_adjacency(shape.mesh);
  for (size_t f = 0; f < adjacency.size(); ++f) {
    for (int32_t nb : adjacency[f]) {
      if (nb == static_cast<int32_t>(f)) continue;
      const auto& back = adjacency[static_cast<size_t>(nb)];
      CHECK(std::count(back.begin(), back.end(), static_cast<int32_t>(f)) >= 1);
    }
  }
}

TEST_CASE("all-degenerate meshes are rejected") {
  MeshObject m;
  m.vertices = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
  m.faces = {{0, 1, 2}};
  m.object_id = "line";
  CHECK_THROWS(extract_face_features(m, 4));
}

// ---------------------------------------------------------------------------
// rendering

TEST_CASE("phong shading obeys the Lambert boundary cases") {
  PhongParams p;
  Vec3 n{0, 1, 0};
  Vec3 along{1, 0, 0};
  // light perpendicular to the normal: ambient only
  CHECK(phong_shade(n, along, along, p) == doctest::Approx(p.material_grey * p.ambient));
  // light aligned with the normal: full diffuse + specular
  Vec3 up{0, 1, 0};
  CHECK(phong_shade(n, up, up, p) ==
        doctest::Approx(p.material_grey * (p.ambient + p.diffuse) + p.specular));
}

TEST_CASE("head-on cube renders an axis-aligned centered square silhouette") {
  MeshObject cube = unit_cube();
  RenderConfig rc;
  rc.width = 64;
  rc.height = 64;
  rc.fixed_cameras = {{0, 0, rc.camera_radius}};
  ImageView view = render_views(cube, rc, 0).at(0);

  int64_t min_x = 64, max_x = -1, min_y = 64, max_y = -1;
  for (int64_t y = 0; y < 64; ++y)
    for (int64_t x = 0; x < 64; ++x)
      if (view.pixels[(y * 64 + x) * 3] > 0.0) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
  REQUIRE(max_x >= 0);

  // silhouette is the front face: half-extent = focal * 0.5 / (r - 0.5)
  double focal = 32.0 / std::tan(rc.fov_deg * M_PI / 180.0 / 2.0);
  double expected = 2.0 * focal * 0.5 / (rc.camera_radius - 0.5);
  CHECK(std::abs(static_cast<double>(max_x - min_x + 1) - expected) <= 1.5);
  CHECK(std::abs(static_cast<double>(max_y - min_y + 1) - expected) <= 1.5);
  // centered and square
  CHECK(std::abs((min_x + max_x) / 2.0 - 31.5) <= 1.0);
  CHECK(std::abs((min_y + max_y) / 2.0 - 31.5) <= 1.0);
  CHECK(max_x - min_x == max_y - min_y);

  // the whole box interior is filled
  for (int64_t y = min_y; y <= max_y; ++y)
    for (int64_t x = min_x; x <= max_x; ++x)
      CHECK(view.pixels[(y * 64 + x) * 3] > 0.0);
}

TEST_CASE("render output honors the shape contract and value range") {
  GeneratedShape shape = generate_shape({"cone", 21});
  MeshObject mesh = shape.mesh;
  TriModalSample sample = prepare_sample(mesh, [] {
    DatasetConfig c;
    c.points = 64;
    c.faces = 64;
    c.num_views = 3;
    c.width = 24;
    c.height = 24;
    return c;
  }());
  REQUIRE(sample.views.size() == 3);
  for (const ImageView& v : sample.views) {
    CHECK(v.pixels.shape() == std::vector<int64_t>({24, 24, 3}));
    for (int64_t i = 0; i < v.pixels.numel(); ++i) {
      CHECK(v.pixels[i] >= 0.0);
      CHECK(v.pixels[i] <= 1.0);
    }
  }
}

TEST_CASE("rendering is deterministic bit for bit") {
  GeneratedShape shape = generate_shape({"cylinder", 8});
  RenderConfig rc;
  rc.num_views = 2;
  rc.width = 32;
  rc.height = 32;
  MeshObject mesh = shape.mesh;
  auto a = render_views(mesh, rc, 42);
  auto b = render_views(mesh, rc, 42);
  for (size_t v = 0; v < a.size(); ++v)
    for (int64_t i = 0; i < a[v].pixels.numel(); ++i)
      CHECK(a[v].pixels[i] == b[v].pixels[i]);
}

TEST_CASE("render rejects bad resolutions and empty view counts") {
  MeshObject cube = unit_cube();
  RenderConfig rc;
  rc.width = 0;
  CHECK_THROWS(render_views(cube, rc, 0));
  rc.width = 8;
  rc.num_views = 0;
  CHECK_THROWS(render_views(cube, rc, 0));
}

// ---------------------------------------------------------------------------
// augmentation

TEST_CASE("augment with jitter off and zero angle is the identity") {
  Rng rng(41);
  PointCloud pc;
  pc.points = random_tensor({32, 3}, rng);
  AugmentConfig cfg;
  cfg.jitter_sigma = 0.0;
  cfg.forced_angle = 0.0;
  PointCloud out = augment_point_cloud(pc, cfg, 7);
  for (int64_t i = 0; i < pc.points.numel(); ++i) CHECK(out.points[i] == pc.points[i]);
}

TEST_CASE("forced pi rotation flips x and z") {
  PointCloud pc;
  pc.points = Tensor({1, 3}, {0.3, -0.2, 0.9});
  AugmentConfig cfg;
  cfg.jitter_sigma = 0.0;
  cfg.forced_angle = M_PI;
  PointCloud out = augment_point_cloud(pc, cfg, 0);
  CHECK(out.points[0] == doctest::Approx(-0.3));
  CHECK(out.points[1] == doctest::Approx(-0.2));
  CHECK(out.points[2] == doctest::Approx(-0.9));
}

TEST_CASE("mesh rotation keeps normals unit and preserves distances") {
  GeneratedShape shape = generate_shape({"box", 13});
  FaceFeatureSet f = extract_face_features(shape.mesh, 64, 0);
  AugmentConfig cfg;
  FaceFeatureSet rot = augment_mesh_features(f, cfg, 9);

  for (int64_t i = 0; i < rot.count; ++i) {
    double n = 0;
    for (int c = 0; c < 3; ++c) n += rot.normal(i)[c] * rot.normal(i)[c];
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
  }
  // pairwise center distances are preserved (rotation is an isometry)
  for (int64_t i = 0; i < 8; ++i)
    for (int64_t j = i + 1; j < 8; ++j) {
      double before = 0, after = 0;
      for (int c = 0; c < 3; ++c) {
        double db = f.center(i)[c] - f.center(j)[c];
        double da = rot.center(i)[c] - rot.center(j)[c];
        before += db * db;
        after += da * da;
      }
      CHECK(std::sqrt(before) == doctest::Approx(std::sqrt(after)).epsilon(1e-5));
    }
}

TEST_CASE("image crop keeps the resolution and the value range") {
  Rng rng(44);
  ImageView img;
  img.pixels = random_tensor({16, 16, 3}, rng, 0.0, 1.0);
  AugmentConfig cfg;
  ImageView out = augment_image(img, cfg, 3);
  CHECK(out.pixels.shape() == img.pixels.shape());
  for (int64_t i = 0; i < out.pixels.numel(); ++i) {
    CHECK(out.pixels[i] >= 0.0);
    CHECK(out.pixels[i] <= 1.0);
  }
}

// ---------------------------------------------------------------------------
// dataset archive

TEST_CASE("build_dataset keeps every manifest object and rebuilds identically") {
  TempDir dir("arch");
  std::string manifest = dir.str() + "/toy.jsonl";
  write_toy_manifest(manifest, 1, 5, "t");  // 3 objects, one per family

  DatasetConfig cfg;
  cfg.points = 64;
  cfg.faces = 32;
  cfg.num_views = 3;
  cfg.width = 16;
  cfg.height = 16;
  cfg.seed = 5;

  BuildReport r1 = build_dataset(manifest, dir.str() + "/a1", cfg);
  CHECK(r1.succeeded == 3);
  CHECK(r1.failed == 0);
  CHECK(r1.bytes > 0);

  ArchiveReader reader(dir.str() + "/a1");
  CHECK(reader.size() == 3);
  CHECK(reader.entry(0).id == "t_box_000");
  CHECK(reader.load_point_cloud(0).points.shape() == std::vector<int64_t>({64, 3}));
  CHECK(reader.load_mesh_features(1).count == 32);
  ImageView v = reader.load_view(2, 1);
  CHECK(v.pixels.shape() == std::vector<int64_t>({16, 16, 3}));
  CHECK(v.view_index == 1);

  // byte-identical rebuild
  BuildReport r2 = build_dataset(manifest, dir.str() + "/a2", cfg);
  CHECK(r2.succeeded == 3);
  for (const char* blob : {"blobs/t_box_000.points.bin", "blobs/t_cone_000.views.bin",
                           "blobs/t_cylinder_000.centers.bin"}) {
    std::ifstream f1(dir.str() + "/a1/" + blob, std::ios::binary);
    std::ifstream f2(dir.str() + "/a2/" + blob, std::ios::binary);
    REQUIRE(f1);
    REQUIRE(f2);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
  }
}

TEST_CASE("unreadable manifest entries are skipped with the rest intact") {
  TempDir dir("skip");
  std::string manifest = dir.str() + "/m.jsonl";
  {
    std::ofstream f(manifest);
    f << R"({"id": "good1", "label": 0, "generator": {"family": "box", "seed": 1}})" << "\n";
    f << R"({"id": "missing", "label": 1, "path": "no/such/file.off"})" << "\n";
    f << R"({"id": "good2", "label": 2, "generator": {"family": "cone", "seed": 2}})" << "\n";
  }
  DatasetConfig cfg;
  cfg.points = 32;
  cfg.faces = 16;
  cfg.num_views = 2;
  cfg.width = 8;
  cfg.height = 8;
  BuildReport r = build_dataset(manifest, dir.str() + "/out", cfg);
  CHECK(r.succeeded == 2);
  CHECK(r.failed == 1);
  ArchiveReader reader(dir.str() + "/out");
  CHECK(reader.size() == 2);
  CHECK_THROWS(reader.index_of("missing"));
}

TEST_CASE("a manifest with no usable objects is fatal") {
  TempDir dir("fatal");
  std::string manifest = dir.str() + "/m.jsonl";
  {
    std::ofstream f(manifest);
    f << R"({"id": "missing", "path": "no/such/file.off"})" << "\n";
  }
  DatasetConfig cfg;
  CHECK_THROWS(build_dataset(manifest, dir.str() + "/out", cfg));
}

TEST_CASE("segmentation archives round-trip with analytic labels in range") {
  TempDir dir("seg");
  build_toy_segmentation_archive(dir.str() + "/seg", 2, 64, 17);
  auto records = read_segmentation_archive(dir.str() + "/seg");
  REQUIRE(records.size() == 6);
  for (const SegmentationRecord& r : records) {
    CHECK(r.points.rows() == 64);
    auto parts = family_part_classes(r.category);
    std::set<int32_t> allowed(parts.begin(), parts.end());
    for (int32_t l : r.labels) CHECK(allowed.count(l) == 1);
  }
  // every family contributes at least two part classes somewhere
  std::set<int32_t> seen;
  for (const auto& r : records) seen.insert(r.labels.begin(), r.labels.end());
  CHECK(seen.size() >= 5);
}
