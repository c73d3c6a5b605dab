// SPDX-License-Identifier: Apache-2.0
#include "trimodal/dataprep.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "trimodal/mesh.hpp"
#include "trimodal/procgen.hpp"
#include "trimodal/render.hpp"
#include "trimodal/rng.hpp"
#include "trimodal/sampling.hpp"

namespace trimodal {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void normalize_mesh_to_unit_sphere(MeshObject& mesh) {
  Vec3 c = mesh.centroid_of_vertices();
  double max_sq = 0.0;
  for (Vec3& v : mesh.vertices) {
    v = v - c;
    max_sq = std::max(max_sq, dot(v, v));
  }
  if (max_sq == 0.0) throw std::runtime_error("mesh collapses to a point");
  double inv = 1.0 / std::sqrt(max_sq);
  for (Vec3& v : mesh.vertices) v = v * inv;
}

}  // namespace

TriModalSample prepare_sample(const MeshObject& mesh_in, const DatasetConfig& config) {
  MeshObject mesh = mesh_in;
  normalize_mesh_to_unit_sphere(mesh);

  uint64_t object_seed = derive_seed(config.seed, "object", fnv1a64(mesh.object_id));

  TriModalSample s;
  s.object_id = mesh.object_id;
  s.class_label = mesh.class_label;
  s.mesh = extract_face_features(mesh, config.faces, derive_seed(object_seed, "faces"));
  s.point_cloud = sample_point_cloud(mesh, config.points, config.oversample,
                                     derive_seed(object_seed, "points"));

  RenderConfig rc;
  rc.num_views = config.num_views;
  rc.width = config.width;
  rc.height = config.height;
  rc.camera_radius = config.camera_radius;
  rc.fov_deg = config.fov_deg;
  s.views = render_views(mesh, rc, derive_seed(object_seed, "views"));
  return s;
}

BuildReport build_dataset(const std::string& manifest_path, const std::string& out_dir,
                          const DatasetConfig& config) {
  std::ifstream mf(manifest_path);
  if (!mf) throw std::runtime_error("cannot open manifest " + manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();

  ArchiveWriter writer(out_dir, config);
  BuildReport report;

  std::string line;
  size_t lineno = 0;
  while (std::getline(mf, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string id = "<line " + std::to_string(lineno) + ">";
    try {
      json rec = json::parse(line);
      id = rec.at("id").get<std::string>();

      MeshObject mesh;
      if (rec.contains("generator")) {
        GeneratorSpec spec;
        spec.family = rec["generator"].at("family").get<std::string>();
        spec.seed = rec["generator"].value("seed", 0ULL);
        mesh = generate_shape(spec).mesh;
      } else if (rec.contains("path")) {
        fs::path p = rec["path"].get<std::string>();
        if (p.is_relative()) p = base / p;
        mesh = load_mesh(p.string());
      } else {
        throw std::runtime_error("manifest entry needs either 'path' or 'generator'");
      }
      mesh.object_id = id;
      if (rec.contains("label")) mesh.class_label = rec["label"].get<int>();

      writer.add_sample(prepare_sample(mesh, config));
      ++report.succeeded;
    } catch (const std::exception& ex) {
      ++report.failed;
      std::cerr << "warning: skipping object " << id << ": " << ex.what() << "\n";
    }
  }

  if (report.succeeded == 0) throw std::runtime_error("no objects could be prepared");
  writer.finish();
  report.bytes = writer.bytes_written();
  return report;
}

void build_toy_segmentation_archive(const std::string& dir, int per_family,
                                    int64_t points_per_shape, uint64_t seed) {
  std::vector<SegmentationRecord> records;
  const char* families[] = {"box", "cylinder", "cone"};
  int idx = 0;
  for (int i = 0; i < per_family; ++i) {
    for (int fam = 0; fam < kNumFamilies; ++fam, ++idx) {
      GeneratorSpec spec;
      spec.family = families[fam];
      spec.seed = derive_seed(seed, "seg-object", static_cast<uint64_t>(idx));
      GeneratedShape shape = generate_shape(spec);

      auto labeled = sample_point_cloud_with_faces(shape.mesh, points_per_shape,
                                                   /*oversample=*/4,
                                                   derive_seed(spec.seed, "seg-points"));
      SegmentationRecord r;
      char id[64];
      std::snprintf(id, sizeof(id), "seg_%s_%03d", families[fam], i);
      r.object_id = id;
      r.category = fam;
      r.points = std::move(labeled.cloud.points);
      r.labels.reserve(labeled.source_faces.size());
      for (int64_t f : labeled.source_faces)
        r.labels.push_back(shape.face_parts[static_cast<size_t>(f)]);
      records.push_back(std::move(r));
    }
  }
  write_segmentation_archive(dir, records, points_per_shape, seed);
}

}  // namespace trimodal
