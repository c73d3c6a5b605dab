// SPDX-License-Identifier: Apache-2.0
#include "trimodal/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "trimodal/checkpoint.hpp"
#include "trimodal/rng.hpp"

namespace trimodal {

namespace fs = std::filesystem;
using json = nlohmann::json;

int64_t TrainConfig::checkpoint_cadence() const {
  if (checkpoint_every > 0) return checkpoint_every;
  return std::max<int64_t>(100, iterations / 20);
}

void TrainConfig::validate() const {
  if (batch_size < 1 || iterations < 1) throw std::invalid_argument("batch/iterations must be positive");
  if (base_lr <= 0 || temperature <= 0) throw std::invalid_argument("lr and temperature must be positive");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("momentum must be in [0,1)");
  if (weight_decay < 0) throw std::invalid_argument("weight decay must be non-negative");
  if (lr_decay_interval < 1) throw std::invalid_argument("decay interval must be positive");
  if (lr_decay_factor <= 0 || lr_decay_factor > 1)
    throw std::invalid_argument("decay factor must be in (0,1]");
  if (views_per_sample != 2) throw std::invalid_argument("training expects two views per sample");
  if (lr_decay_interval % checkpoint_cadence() != 0)
    throw std::invalid_argument("checkpoint cadence must divide the decay interval");
}

TrainConfig TrainConfig::paper_scale() {
  TrainConfig c;
  c.batch_size = 96;
  c.iterations = 160000;
  c.lr_decay_interval = 40000;
  c.checkpoint_every = 8000;
  c.encoder = EncoderConfig{};  // full width
  return c;
}

double lr_at(int64_t iteration, const TrainConfig& config) {
  if (iteration < 0) throw std::invalid_argument("iteration must be non-negative");
  int64_t decays = iteration / config.lr_decay_interval;
  return config.base_lr * std::pow(config.lr_decay_factor, static_cast<double>(decays));
}

void Sgd::step(nn::Session& session, const nn::ParamList& params, double lr) {
  for (const nn::ParamRef& p : params) {
    if (!p.trainable) continue;
    ag::Var leaf = session.leaf_of(*p.value);
    Tensor& v = velocity_[p.name];
    if (v.numel() != p.value->numel()) v = Tensor(p.value->shape());
    const Tensor* grad = nullptr;
    if (leaf.valid()) grad = &session.graph.grad(leaf);
    Tensor& theta = *p.value;
    for (int64_t i = 0; i < theta.numel(); ++i) {
      double g = (grad && grad->numel() == theta.numel() ? (*grad)[i] : 0.0) +
                 weight_decay_ * theta[i];
      v[i] = momentum_ * v[i] + g;
      theta[i] -= lr * v[i];
    }
  }
}

TrainState::TrainState(const TrainConfig& cfg)
    : model(cfg.encoder), optimizer(cfg.momentum, cfg.weight_decay), config(cfg) {
  cfg.validate();
  model.init(cfg.seed);
}

namespace {

struct AssembledBatch {
  Tensor points;                              // [k*N, 3]
  std::vector<FaceFeatureSet> meshes;         // owned copies
  Tensor images;                              // [2k*H*W, 3]
  int64_t k = 0, n = 0, h = 0, w = 0;
  std::vector<std::string> ids;
};

AssembledBatch assemble(const std::vector<TriModalSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  AssembledBatch out;
  out.k = static_cast<int64_t>(batch.size());
  out.n = batch[0].point_cloud.size();
  out.h = batch[0].views.at(0).height();
  out.w = batch[0].views.at(0).width();

  out.points = Tensor({out.k * out.n, 3});
  out.images = Tensor({2 * out.k * out.h * out.w, 3});
  for (int64_t i = 0; i < out.k; ++i) {
    const TriModalSample& s = batch[static_cast<size_t>(i)];
    if (s.views.size() < 2) throw std::invalid_argument("train_step: two views per sample required");
    if (s.point_cloud.size() != out.n) throw std::invalid_argument("train_step: point counts differ");
    std::copy(s.point_cloud.points.data(), s.point_cloud.points.data() + out.n * 3,
              out.points.data() + i * out.n * 3);
    out.meshes.push_back(s.mesh);
    int64_t img_elems = out.h * out.w * 3;
    std::copy(s.views[0].pixels.data(), s.views[0].pixels.data() + img_elems,
              out.images.data() + i * img_elems);
    std::copy(s.views[1].pixels.data(), s.views[1].pixels.data() + img_elems,
              out.images.data() + (out.k + i) * img_elems);
    out.ids.push_back(s.object_id);
  }
  return out;
}

}  // namespace

LossBreakdown train_step(TrainState& state, const std::vector<TriModalSample>& batch) {
  AssembledBatch ab = assemble(batch);
  const TrainConfig& cfg = state.config;

  nn::Session s(/*grad_enabled=*/true, /*training=*/true);
  ag::Graph& g = s.graph;

  std::vector<const FaceFeatureSet*> mesh_ptrs;
  for (const auto& m : ab.meshes) mesh_ptrs.push_back(&m);

  ag::Var mesh_feat = state.model.mesh.forward(s, mesh_ptrs);
  ag::Var point_feat =
      state.model.point.forward(s, s.constant(std::move(ab.points)), ab.k, ab.n);
  ag::Var image_feat = state.model.image.forward(s, s.constant(std::move(ab.images)),
                                                 2 * ab.k, ab.h, ab.w);

  ag::Var f_m = state.model.mesh_head.forward(s, mesh_feat);
  ag::Var f_p = state.model.point_head.forward(s, point_feat);
  ag::Var f_img = state.model.image_head.forward(s, image_feat);
  ag::Var f_i1 = ag::slice_rows(g, f_img, 0, ab.k);
  ag::Var f_i2 = ag::slice_rows(g, f_img, ab.k, 2 * ab.k);

  if (cfg.random_view_pairing) {
    Rng coin(derive_seed(cfg.seed, "view-roles", static_cast<uint64_t>(state.iteration)));
    if (coin.bernoulli(0.5)) std::swap(f_i1, f_i2);
  }

  TotalLossVars vars =
      total_loss_vars(g, f_m, f_p, f_i1, f_i2, cfg.temperature, cfg.loss_weights);

  LossBreakdown loss;
  loss.mesh_point = g.value(vars.mesh_point)[0];
  loss.mesh_image = g.value(vars.mesh_image)[0];
  loss.point_image = g.value(vars.point_image)[0];
  loss.image_image = g.value(vars.image_image)[0];
  loss.total = g.value(vars.total)[0];

  if (!std::isfinite(loss.total)) {
    std::ostringstream os;
    os << "non-finite loss at iteration " << state.iteration
       << " (mp=" << loss.mesh_point << " mi=" << loss.mesh_image
       << " pi=" << loss.point_image << " ii=" << loss.image_image << "); batch:";
    for (const auto& id : ab.ids) os << " " << id;
    throw TrainAbort(os.str());
  }

  g.backward(vars.total);
  state.optimizer.step(s, state.model.collect(), lr_at(state.iteration, cfg));
  state.iteration += 1;
  return loss;
}

// ---------------------------------------------------------------------------
// config serialization

std::string train_config_to_json(const TrainConfig& c) {
  json j{{"batch_size", c.batch_size},
         {"iterations", c.iterations},
         {"base_lr", c.base_lr},
         {"momentum", c.momentum},
         {"weight_decay", c.weight_decay},
         {"lr_decay_interval", c.lr_decay_interval},
         {"lr_decay_factor", c.lr_decay_factor},
         {"temperature", c.temperature},
         {"seed", c.seed},
         {"checkpoint_every", c.checkpoint_every},
         {"views_per_sample", c.views_per_sample},
         {"random_view_pairing", c.random_view_pairing},
         {"loss_weights",
          {{"mesh_point", c.loss_weights.mesh_point},
           {"mesh_image", c.loss_weights.mesh_image},
           {"point_image", c.loss_weights.point_image},
           {"image_image", c.loss_weights.image_image}}},
         {"encoder",
          {{"width_scale", c.encoder.width_scale},
           {"knn", c.encoder.knn},
           {"face_budget", c.encoder.face_budget},
           {"universal_dim", c.encoder.universal_dim},
           {"kernel_vectors", c.encoder.kernel_vectors},
           {"kernel_sigma", c.encoder.kernel_sigma}}},
         {"augment",
          {{"rotate", c.augment.rotate},
           {"jitter_sigma", c.augment.jitter_sigma},
           {"crop_min_area", c.augment.crop_min_area},
           {"crop_max_area", c.augment.crop_max_area},
           {"flip_prob", c.augment.flip_prob}}}};
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  json j = json::parse(text);
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.iterations = j.value("iterations", c.iterations);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.lr_decay_interval = j.value("lr_decay_interval", c.lr_decay_interval);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.temperature = j.value("temperature", c.temperature);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.views_per_sample = j.value("views_per_sample", c.views_per_sample);
  c.random_view_pairing = j.value("random_view_pairing", c.random_view_pairing);
  if (j.contains("loss_weights")) {
    const json& w = j["loss_weights"];
    c.loss_weights.mesh_point = w.value("mesh_point", 1.0);
    c.loss_weights.mesh_image = w.value("mesh_image", 1.0);
    c.loss_weights.point_image = w.value("point_image", 1.0);
    c.loss_weights.image_image = w.value("image_image", 1.0);
  }
  if (j.contains("encoder")) {
    const json& e = j["encoder"];
    c.encoder.width_scale = e.value("width_scale", c.encoder.width_scale);
    c.encoder.knn = e.value("knn", c.encoder.knn);
    c.encoder.face_budget = e.value("face_budget", c.encoder.face_budget);
    c.encoder.universal_dim = e.value("universal_dim", c.encoder.universal_dim);
    c.encoder.kernel_vectors = e.value("kernel_vectors", c.encoder.kernel_vectors);
    c.encoder.kernel_sigma = e.value("kernel_sigma", c.encoder.kernel_sigma);
  }
  if (j.contains("augment")) {
    const json& a = j["augment"];
    c.augment.rotate = a.value("rotate", c.augment.rotate);
    c.augment.jitter_sigma = a.value("jitter_sigma", c.augment.jitter_sigma);
    c.augment.crop_min_area = a.value("crop_min_area", c.augment.crop_min_area);
    c.augment.crop_max_area = a.value("crop_max_area", c.augment.crop_max_area);
    c.augment.flip_prob = a.value("flip_prob", c.augment.flip_prob);
  }
  return c;
}

uint64_t config_hash(const TrainConfig& config) {
  return fnv1a64(train_config_to_json(config));
}

// ---------------------------------------------------------------------------
// checkpoints

void save_train_checkpoint(const std::string& path, TrainState& state) {
  Checkpoint ck;
  json meta{{"format", "trimodal-checkpoint"},
            {"format_version", 1},
            {"iteration", state.iteration},
            {"seed", state.config.seed},
            {"config_hash", config_hash(state.config)},
            {"config", json::parse(train_config_to_json(state.config))}};
  ck.metadata_json = meta.dump();
  for (const nn::ParamRef& p : state.model.collect()) ck.tensors[p.name] = *p.value;
  for (const auto& [name, v] : state.optimizer.velocity()) ck.tensors["opt." + name] = v;
  save_checkpoint(path, ck);
}

TrainState load_train_checkpoint(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  json meta = json::parse(ck.metadata_json);
  TrainConfig cfg = train_config_from_json(meta.at("config").dump());
  TrainState state(cfg);
  state.iteration = meta.at("iteration").get<int64_t>();

  for (const nn::ParamRef& p : state.model.collect()) {
    auto it = ck.tensors.find(p.name);
    if (it == ck.tensors.end())
      throw std::runtime_error("checkpoint is missing tensor " + p.name);
    if (!it->second.same_shape(*p.value))
      throw std::runtime_error("checkpoint tensor has wrong shape: " + p.name);
    *p.value = it->second;
  }
  for (const auto& [name, v] : ck.tensors)
    if (name.rfind("opt.", 0) == 0) state.optimizer.velocity()[name.substr(4)] = v;
  return state;
}

TriModalModel load_model_checkpoint(const std::string& path) {
  TrainState state = load_train_checkpoint(path);
  return std::move(state.model);
}

// ---------------------------------------------------------------------------
// fit

namespace {

std::string checkpoint_name(int64_t iter) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "checkpoint_%08lld.ckpt", static_cast<long long>(iter));
  return buf;
}

// highest-numbered checkpoint in dir, empty if none
std::string latest_checkpoint(const std::string& dir) {
  std::string best;
  int64_t best_iter = -1;
  if (!fs::exists(dir)) return best;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string name = e.path().filename().string();
    long long iter = -1;
    if (std::sscanf(name.c_str(), "checkpoint_%lld.ckpt", &iter) == 1 && iter > best_iter) {
      best_iter = iter;
      best = e.path().string();
    }
  }
  return best;
}

}  // namespace

FitResult fit(const ArchiveReader& data, const TrainConfig& config, const std::string& out_dir,
              bool resume, const MetricsSink& extra_sink) {
  config.validate();
  if (data.size() < config.batch_size)
    throw std::runtime_error("dataset is smaller than one batch");
  if (data.num_views() < config.views_per_sample)
    throw std::runtime_error("dataset stores fewer views than training needs");

  fs::create_directories(out_dir);

  std::unique_ptr<TrainState> state;
  if (resume) {
    std::string latest = latest_checkpoint(out_dir);
    if (latest.empty()) throw std::runtime_error("resume requested but no checkpoint in " + out_dir);
    state = std::make_unique<TrainState>(load_train_checkpoint(latest));
    if (config_hash(state->config) != config_hash(config))
      throw std::runtime_error("resume config differs from the checkpointed config");
  } else {
    state = std::make_unique<TrainState>(config);
  }

  std::ofstream metrics((fs::path(out_dir) / "metrics.jsonl").string(),
                        resume ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot open metrics log in " + out_dir);

  {  // resolved-config echo beside the outputs
    std::ofstream cfg_echo((fs::path(out_dir) / "train_config.json").string(), std::ios::trunc);
    cfg_echo << train_config_to_json(config) << "\n";
  }

  int64_t k = config.batch_size;
  int64_t batches_per_epoch = data.size() / k;
  int64_t cadence = config.checkpoint_cadence();

  FitResult result;
  std::vector<int64_t> order(static_cast<size_t>(data.size()));

  while (state->iteration < config.iterations) {
    int64_t iter = state->iteration;
    auto t0 = std::chrono::steady_clock::now();

    int64_t epoch = iter / batches_per_epoch;
    int64_t batch_in_epoch = iter % batches_per_epoch;
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, "epoch-order", static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    std::vector<TriModalSample> batch;
    batch.reserve(static_cast<size_t>(k));
    for (int64_t slot = 0; slot < k; ++slot) {
      int64_t index = order[static_cast<size_t>(batch_in_epoch * k + slot)];
      uint64_t uid = static_cast<uint64_t>(iter) * static_cast<uint64_t>(k) +
                     static_cast<uint64_t>(slot);

      // two distinct views, uniform over the stored pool
      Rng view_rng(derive_seed(config.seed, "view-pick", uid));
      int v1 = static_cast<int>(view_rng.below(data.num_views()));
      int v2 = static_cast<int>(view_rng.below(data.num_views() - 1));
      if (v2 >= v1) ++v2;

      TriModalSample sample = data.load_sample(index, {v1, v2});
      sample.point_cloud = augment_point_cloud(sample.point_cloud, config.augment,
                                               derive_seed(config.seed, "aug-p", uid));
      sample.mesh = augment_mesh_features(sample.mesh, config.augment,
                                          derive_seed(config.seed, "aug-m", uid));
      sample.views[0] = augment_image(sample.views[0], config.augment,
                                      derive_seed(config.seed, "aug-i1", uid));
      sample.views[1] = augment_image(sample.views[1], config.augment,
                                      derive_seed(config.seed, "aug-i2", uid));
      batch.push_back(std::move(sample));
    }

    double lr = lr_at(iter, config);
    LossBreakdown loss = train_step(*state, batch);
    result.final_loss = loss;

    auto t1 = std::chrono::steady_clock::now();
    double wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    json line{{"iter", state->iteration}, {"lr", lr},
              {"L_MP", loss.mesh_point},  {"L_MI", loss.mesh_image},
              {"L_PI", loss.point_image}, {"L_II", loss.image_image},
              {"total", loss.total},      {"wall_ms", wall_ms}};
    metrics << line.dump() << "\n";

    if (state->iteration % cadence == 0 || state->iteration == config.iterations) {
      std::string path = (fs::path(out_dir) / checkpoint_name(state->iteration)).string();
      save_train_checkpoint(path, *state);
      result.final_checkpoint = path;
    }
    ++result.iterations_run;
    // after the checkpoint so an interrupting sink still finds a resume point
    if (extra_sink) extra_sink(state->iteration, lr, loss, wall_ms);
  }

  if (result.final_checkpoint.empty()) {  // resume called at completion
    std::string path = (fs::path(out_dir) / checkpoint_name(state->iteration)).string();
    save_train_checkpoint(path, *state);
    result.final_checkpoint = path;
  }
  metrics.flush();
  return result;
}

}  // namespace trimodal
