// SPDX-License-Identifier: Apache-2.0
#include "trimodal/archive.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace trimodal {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json config_to_json(const DatasetConfig& c) {
  return json{{"points", c.points},   {"oversample", c.oversample},
              {"faces", c.faces},     {"num_views", c.num_views},
              {"width", c.width},     {"height", c.height},
              {"camera_radius", c.camera_radius}, {"fov_deg", c.fov_deg},
              {"seed", c.seed},       {"format_version", 1}};
}

DatasetConfig config_from_json(const json& j) {
  DatasetConfig c;
  c.points = j.at("points").get<int64_t>();
  c.oversample = j.at("oversample").get<int64_t>();
  c.faces = j.at("faces").get<int64_t>();
  c.num_views = j.at("num_views").get<int>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.camera_radius = j.at("camera_radius").get<double>();
  c.fov_deg = j.at("fov_deg").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

uint64_t file_size_or_zero(const std::string& path) {
  std::error_code ec;
  auto sz = fs::file_size(path, ec);
  return ec ? 0 : static_cast<uint64_t>(sz);
}

}  // namespace

DatasetConfig dataset_config_from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  json j = json::parse(f);
  return config_from_json(j);
}

ArchiveWriter::ArchiveWriter(std::string dir, const DatasetConfig& config)
    : dir_(std::move(dir)), config_(config) {
  fs::create_directories(fs::path(dir_) / "blobs");
}

void ArchiveWriter::add_sample(const TriModalSample& sample) {
  if (finished_) throw std::logic_error("archive already finished");
  const std::string& id = sample.object_id;
  if (id.empty()) throw std::invalid_argument("sample needs a non-empty object id");

  ArchiveEntry e;
  e.id = id;
  e.label = sample.class_label;

  auto rel = [&](const std::string& role) { return "blobs/" + id + "." + role + ".bin"; };
  auto abs = [&](const std::string& role) { return (fs::path(dir_) / rel(role)).string(); };

  write_blob(abs("points"), sample.point_cloud.points, Dtype::f32);
  e.blobs["points"] = rel("points");

  const FaceFeatureSet& m = sample.mesh;
  write_blob(abs("centers"), Tensor({m.count, 3}, m.centers), Dtype::f32);
  write_blob(abs("corners"), Tensor({m.count, 3, 3}, m.corner_vectors), Dtype::f32);
  write_blob(abs("normals"), Tensor({m.count, 3}, m.normals), Dtype::f32);
  write_blob_i32(abs("neighbors"), {m.count, 3}, m.neighbor_index);
  e.blobs["centers"] = rel("centers");
  e.blobs["corners"] = rel("corners");
  e.blobs["normals"] = rel("normals");
  e.blobs["neighbors"] = rel("neighbors");

  int64_t v = static_cast<int64_t>(sample.views.size());
  int64_t h = config_.height, w = config_.width;
  Tensor stacked({v, h, w, 3});
  Tensor cameras({v, 3});
  for (int64_t i = 0; i < v; ++i) {
    const ImageView& view = sample.views[static_cast<size_t>(i)];
    if (view.height() != h || view.width() != w)
      throw std::invalid_argument("view resolution does not match dataset config");
    std::copy(view.pixels.data(), view.pixels.data() + view.pixels.numel(),
              stacked.data() + i * h * w * 3);
    cameras.at(i, 0) = view.camera_position.x;
    cameras.at(i, 1) = view.camera_position.y;
    cameras.at(i, 2) = view.camera_position.z;
  }
  write_blob(abs("views"), stacked, Dtype::f32);
  write_blob(abs("cameras"), cameras, Dtype::f32);
  e.blobs["views"] = rel("views");
  e.blobs["cameras"] = rel("cameras");

  for (const auto& [role, path] : e.blobs) bytes_ += file_size_or_zero((fs::path(dir_) / path).string());
  entries_.push_back(std::move(e));
}

void ArchiveWriter::finish() {
  if (finished_) return;
  finished_ = true;
  std::ofstream mf((fs::path(dir_) / "manifest.jsonl").string(), std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot write manifest in " + dir_);
  for (const ArchiveEntry& e : entries_) {
    json rec;
    rec["id"] = e.id;
    if (e.label) rec["label"] = *e.label;
    rec["blobs"] = json::object();
    for (const auto& [role, path] : e.blobs) rec["blobs"][role] = path;
    mf << rec.dump() << "\n";
  }
  std::ofstream cf((fs::path(dir_) / "dataset.json").string(), std::ios::trunc);
  cf << config_to_json(config_).dump(2) << "\n";
}

ArchiveReader::ArchiveReader(std::string dir) : dir_(std::move(dir)) {
  config_ = dataset_config_from_json_file((fs::path(dir_) / "dataset.json").string());
  std::ifstream mf((fs::path(dir_) / "manifest.jsonl").string());
  if (!mf) throw std::runtime_error("cannot open manifest in " + dir_);
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    ArchiveEntry e;
    e.id = rec.at("id").get<std::string>();
    if (rec.contains("label")) e.label = rec.at("label").get<int>();
    for (auto& [role, path] : rec.at("blobs").items())
      e.blobs[role] = path.get<std::string>();
    by_id_[e.id] = static_cast<int64_t>(entries_.size());
    entries_.push_back(std::move(e));
  }
  if (entries_.empty()) throw std::runtime_error("archive manifest is empty: " + dir_);
}

int64_t ArchiveReader::index_of(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw std::out_of_range("no object with id " + id);
  return it->second;
}

namespace {
std::string blob_path(const std::string& dir, const ArchiveEntry& e, const std::string& role) {
  auto it = e.blobs.find(role);
  if (it == e.blobs.end())
    throw std::runtime_error("entry " + e.id + " is missing blob role " + role);
  return (fs::path(dir) / it->second).string();
}
}  // namespace

FaceFeatureSet ArchiveReader::load_mesh_features(int64_t index) const {
  const ArchiveEntry& e = entry(index);
  FaceFeatureSet m;
  Tensor centers = read_blob(blob_path(dir_, e, "centers"));
  Tensor corners = read_blob(blob_path(dir_, e, "corners"));
  Tensor normals = read_blob(blob_path(dir_, e, "normals"));
  m.count = centers.dim(0);
  m.centers = centers.vec();
  m.corner_vectors = corners.vec();
  m.normals = normals.vec();
  m.neighbor_index = read_blob_i32(blob_path(dir_, e, "neighbors"));
  return m;
}

PointCloud ArchiveReader::load_point_cloud(int64_t index) const {
  PointCloud pc;
  pc.points = read_blob(blob_path(dir_, entry(index), "points"));
  return pc;
}

ImageView ArchiveReader::load_view(int64_t index, int view) const {
  const ArchiveEntry& e = entry(index);
  if (view < 0 || view >= config_.num_views)
    throw std::out_of_range("view index exceeds stored views");
  Tensor slab = read_blob_slab(blob_path(dir_, e, "views"), view, 1);
  slab.reshape({config_.height, config_.width, 3});
  Tensor cam = read_blob_slab(blob_path(dir_, e, "cameras"), view, 1);
  ImageView out;
  out.pixels = std::move(slab);
  out.camera_position = {cam[0], cam[1], cam[2]};
  out.view_index = view;
  return out;
}

TriModalSample ArchiveReader::load_sample(int64_t index, const std::vector<int>& view_ids) const {
  const ArchiveEntry& e = entry(index);
  TriModalSample s;
  s.object_id = e.id;
  s.class_label = e.label;
  s.mesh = load_mesh_features(index);
  s.point_cloud = load_point_cloud(index);
  for (int v : view_ids) s.views.push_back(load_view(index, v));
  return s;
}

std::vector<int> ArchiveReader::labels() const {
  std::vector<int> out;
  out.reserve(entries_.size());
  for (const ArchiveEntry& e : entries_) out.push_back(e.label.value_or(-1));
  return out;
}

void write_segmentation_archive(const std::string& dir,
                                const std::vector<SegmentationRecord>& records,
                                int64_t points_per_shape, uint64_t seed) {
  fs::create_directories(fs::path(dir) / "blobs");
  std::ofstream mf((fs::path(dir) / "manifest.jsonl").string(), std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
  for (const SegmentationRecord& r : records) {
    std::string prel = "blobs/" + r.object_id + ".points.bin";
    std::string lrel = "blobs/" + r.object_id + ".labels.bin";
    write_blob((fs::path(dir) / prel).string(), r.points, Dtype::f32);
    write_blob_i32((fs::path(dir) / lrel).string(),
                   {static_cast<int64_t>(r.labels.size())}, r.labels);
    json rec{{"id", r.object_id},
             {"category", r.category},
             {"blobs", {{"points", prel}, {"labels", lrel}}}};
    mf << rec.dump() << "\n";
  }
  std::ofstream cf((fs::path(dir) / "segset.json").string(), std::ios::trunc);
  cf << json{{"points", points_per_shape}, {"seed", seed}, {"format_version", 1}}.dump(2)
     << "\n";
}

std::vector<SegmentationRecord> read_segmentation_archive(const std::string& dir) {
  std::ifstream mf((fs::path(dir) / "manifest.jsonl").string());
  if (!mf) throw std::runtime_error("cannot open manifest in " + dir);
  std::vector<SegmentationRecord> out;
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    SegmentationRecord r;
    r.object_id = rec.at("id").get<std::string>();
    r.category = rec.at("category").get<int>();
    r.points = read_blob((fs::path(dir) / rec.at("blobs").at("points").get<std::string>()).string());
    r.labels = read_blob_i32((fs::path(dir) / rec.at("blobs").at("labels").get<std::string>()).string());
    if (static_cast<int64_t>(r.labels.size()) != r.points.rows())
      throw std::runtime_error("segmentation record " + r.object_id + " label/point mismatch");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace trimodal
