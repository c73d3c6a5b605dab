// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "trimodal/dataprep.hpp"
#include "trimodal/procgen.hpp"
#include "trimodal/trainer.hpp"

using namespace trimodal;
using trimodal::testing::TempDir;
using json = nlohmann::json;

namespace {

TrainConfig mini_config() {
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.iterations = 20;
  cfg.lr_decay_interval = 20;
  cfg.checkpoint_every = 10;
  cfg.seed = 11;
  cfg.encoder.width_scale = 1.0 / 16.0;
  cfg.encoder.knn = 2;
  cfg.encoder.face_budget = 16;
  cfg.encoder.universal_dim = 8;
  cfg.encoder.kernel_vectors = 2;
  return cfg;
}

// six-object archive shared across the test cases in this binary
const std::string& mini_archive() {
  static TempDir dir("trainset");
  static std::string path = [] {
    std::string manifest = dir.str() + "/m.jsonl";
    write_toy_manifest(manifest, 2, 21, "tr");
    DatasetConfig cfg;
    cfg.points = 32;
    cfg.faces = 16;
    cfg.num_views = 3;
    cfg.width = 8;
    cfg.height = 8;
    cfg.seed = 21;
    build_dataset(manifest, dir.str() + "/arch", cfg);
    return dir.str() + "/arch";
  }();
  return path;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f);
  std::vector<json> rows;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) rows.push_back(json::parse(line));
  return rows;
}

std::vector<TriModalSample> sample_batch(const ArchiveReader& data) {
  std::vector<TriModalSample> batch;
  batch.push_back(data.load_sample(0, {0, 1}));
  batch.push_back(data.load_sample(1, {1, 2}));
  return batch;
}

}  // namespace

TEST_CASE("learning rate decays by the configured factor at each interval") {
  TrainConfig paper = TrainConfig::paper_scale();
  CHECK(lr_at(0, paper) == doctest::Approx(0.001));
  CHECK(lr_at(39999, paper) == doctest::Approx(0.001));
  CHECK(lr_at(40000, paper) == doctest::Approx(0.0001));
  CHECK(lr_at(80000, paper) == doctest::Approx(0.00001));
}

TEST_CASE("paper-scale config carries the published hyperparameters") {
  TrainConfig paper = TrainConfig::paper_scale();
  CHECK(paper.batch_size == 96);
  CHECK(paper.iterations == 160000);
  CHECK(paper.base_lr == 0.001);
  CHECK(paper.momentum == 0.9);
  CHECK(paper.weight_decay == 0.0005);
  CHECK(paper.lr_decay_interval == 40000);
  paper.validate();
}

TEST_CASE("config validation catches inconsistent cadence") {
  TrainConfig cfg = mini_config();
  cfg.checkpoint_every = 7;  // does not divide the decay interval
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("zero-gradient steps shrink parameters by exactly (1 - lr wd)") {
  Tensor theta({4}, {1.0, -2.0, 0.5, 3.0});
  Tensor original = theta;
  nn::ParamList params{{"w", &theta, true}};
  Sgd opt(0.9, 0.0005);

  nn::Session s(true, true);  // parameter never used: gradient stays zero
  opt.step(s, params, 0.2);
  for (int64_t i = 0; i < 4; ++i)
    CHECK(theta[i] == doctest::Approx(original[i] * (1.0 - 0.2 * 0.0005)).epsilon(1e-12));
}

TEST_CASE("a single step moves every one of the six networks") {
  ArchiveReader data(mini_archive());
  TrainState state(mini_config());
  auto params = state.model.collect();
  std::map<std::string, Tensor> before;
  for (const auto& p : params) before[p.name] = *p.value;

  LossBreakdown loss = train_step(state, sample_batch(data));
  CHECK(std::isfinite(loss.total));
  CHECK(loss.total >= 0.0);
  CHECK(state.iteration == 1);

  const char* nets[] = {"image.", "point.", "mesh.", "image_head.", "point_head.", "mesh_head."};
  for (const char* net : nets) {
    double delta = 0.0;
    for (const auto& p : params) {
      if (p.name.rfind(net, 0) != 0 || !p.trainable) continue;
      const Tensor& now = *p.value;
      const Tensor& then = before[p.name];
      for (int64_t i = 0; i < now.numel(); ++i) delta += std::abs(now[i] - then[i]);
    }
    INFO(net);
    CHECK(delta > 0.0);
  }
}

TEST_CASE("corrupted parameters abort with a diagnostic") {
  ArchiveReader data(mini_archive());
  TrainState state(mini_config());
  state.model.point.fuse.weight[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train_step(state, sample_batch(data)), TrainAbort);
}

TEST_CASE("fit is deterministic across runs of the same seed") {
  ArchiveReader data(mini_archive());
  TrainConfig cfg = mini_config();
  cfg.iterations = 10;
  cfg.checkpoint_every = 10;
  cfg.lr_decay_interval = 20;

  TempDir d1("fit1"), d2("fit2");
  fit(data, cfg, d1.str());
  fit(data, cfg, d2.str());

  auto r1 = read_jsonl(d1.str() + "/metrics.jsonl");
  auto r2 = read_jsonl(d2.str() + "/metrics.jsonl");
  REQUIRE(r1.size() == 10);
  REQUIRE(r2.size() == 10);
  for (size_t i = 0; i < r1.size(); ++i) {
    for (const char* key : {"L_MP", "L_MI", "L_PI", "L_II", "total", "lr"})
      CHECK(std::abs(r1[i][key].get<double>() - r2[i][key].get<double>()) < 1e-6);
    CHECK(r1[i]["iter"] == r2[i]["iter"]);
  }
}

TEST_CASE("metrics log carries one row per iteration with the five loss fields") {
  ArchiveReader data(mini_archive());
  TrainConfig cfg = mini_config();
  cfg.iterations = 5;
  cfg.checkpoint_every = 5;
  cfg.lr_decay_interval = 20;
  TempDir dir("metrics");
  fit(data, cfg, dir.str());

  auto rows = read_jsonl(dir.str() + "/metrics.jsonl");
  REQUIRE(rows.size() == 5);
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i]["iter"] == static_cast<int64_t>(i + 1));
    for (const char* key : {"L_MP", "L_MI", "L_PI", "L_II", "total"})
      CHECK(rows[i].contains(key));
    CHECK(rows[i].contains("lr"));
    CHECK(rows[i].contains("wall_ms"));
  }
}

TEST_CASE("checkpoints reload into an identical forward pass") {
  ArchiveReader data(mini_archive());
  TrainConfig cfg = mini_config();
  cfg.iterations = 10;
  cfg.checkpoint_every = 10;
  cfg.lr_decay_interval = 20;
  TempDir dir("ckpt");
  FitResult res = fit(data, cfg, dir.str());
  REQUIRE(!res.final_checkpoint.empty());

  TriModalModel reloaded = load_model_checkpoint(res.final_checkpoint);
  TrainState fresh(cfg);
  FitResult res2 = fit(data, cfg, dir.str() + "_again");
  TriModalModel original = load_model_checkpoint(res2.final_checkpoint);

  PointCloud pc = data.load_point_cloud(0);
  std::vector<const PointCloud*> ptrs{&pc};
  Tensor a = encode_point_clouds(reloaded, ptrs);
  Tensor b = encode_point_clouds(original, ptrs);
  REQUIRE(a.shape() == b.shape());
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("an interrupted run resumes into the unresumed trajectory") {
  ArchiveReader data(mini_archive());
  TrainConfig cfg = mini_config();  // 20 iterations, checkpoints every 10

  TempDir full_dir("full"), broken_dir("broken");
  fit(data, cfg, full_dir.str());

  // simulated crash right after iteration 10
  struct Interrupt {};
  CHECK_THROWS_AS(
      fit(data, cfg, broken_dir.str(), false,
          [](int64_t iter, double, const LossBreakdown&, double) {
            if (iter == 10) throw Interrupt{};
          }),
      Interrupt);

  fit(data, cfg, broken_dir.str(), /*resume=*/true);

  auto full = read_jsonl(full_dir.str() + "/metrics.jsonl");
  auto resumed = read_jsonl(broken_dir.str() + "/metrics.jsonl");
  REQUIRE(full.size() == 20);
  REQUIRE(resumed.size() == 20);
  for (size_t i = 10; i < 20; ++i) {
    CHECK(resumed[i]["iter"] == full[i]["iter"]);
    for (const char* key : {"L_MP", "L_MI", "L_PI", "L_II", "total"})
      CHECK(std::abs(resumed[i][key].get<double>() - full[i][key].get<double>()) < 1e-6);
  }
}

TEST_CASE("resume refuses a mismatched config") {
  ArchiveReader data(mini_archive());
  TrainConfig cfg = mini_config();
  cfg.iterations = 10;
  cfg.checkpoint_every = 10;
  cfg.lr_decay_interval = 20;
  TempDir dir("mismatch");
  fit(data, cfg, dir.str());

  TrainConfig other = cfg;
  other.temperature = 0.5;
  CHECK_THROWS(fit(data, other, dir.str(), /*resume=*/true));
}

TEST_CASE("train config json round-trips") {
  TrainConfig cfg = mini_config();
  cfg.random_view_pairing = true;
  cfg.loss_weights.mesh_image = 0.5;
  TrainConfig back = train_config_from_json(train_config_to_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(back.encoder.width_scale == cfg.encoder.width_scale);
  CHECK(back.loss_weights.mesh_image == 0.5);
}
