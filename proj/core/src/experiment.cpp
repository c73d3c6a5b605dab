// SPDX-License-Identifier: Apache-2.0
#include "trimodal/experiment.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace trimodal {

using json = nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw std::runtime_error("config: unknown key '" + key + "' in " + where);
}

}  // namespace

TrainConfig load_train_config_file(const std::string& path) {
  std::string text = read_file_text(path);
  json j = json::parse(text);
  check_keys(j,
             {"batch_size", "iterations", "base_lr", "momentum", "weight_decay",
              "lr_decay_interval", "lr_decay_factor", "temperature", "seed",
              "checkpoint_every", "views_per_sample", "random_view_pairing", "loss_weights",
              "encoder", "augment"},
             "top level");
  if (j.contains("encoder"))
    check_keys(j["encoder"],
               {"width_scale", "knn", "face_budget", "universal_dim", "kernel_vectors",
                "kernel_sigma"},
               "encoder");
  if (j.contains("augment"))
    check_keys(j["augment"],
               {"rotate", "jitter_sigma", "crop_min_area", "crop_max_area", "flip_prob"},
               "augment");
  if (j.contains("loss_weights"))
    check_keys(j["loss_weights"], {"mesh_point", "mesh_image", "point_image", "image_image"},
               "loss_weights");
  TrainConfig cfg = train_config_from_json(text);
  cfg.validate();
  return cfg;
}

void write_result_json(const std::string& path, const std::string& task, uint64_t config_hash,
                       uint64_t seed, const std::string& metrics_json,
                       const std::string& extras_json) {
  json doc;
  doc["task"] = task;
  doc["config_hash"] = config_hash;
  doc["seed"] = seed;
  doc["timestamp"] = static_cast<int64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
  doc["metrics"] = json::parse(metrics_json);
  json extras = json::parse(extras_json);
  for (const auto& [k, v] : extras.items()) doc[k] = v;
  write_file_text(path, doc.dump(2) + "\n");
}

std::string read_file_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_file_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

}  // namespace trimodal
