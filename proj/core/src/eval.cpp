// SPDX-License-Identifier: Apache-2.0
#include "trimodal/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "trimodal/procgen.hpp"
#include "trimodal/rng.hpp"
#include "trimodal/trainer.hpp"

namespace trimodal {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<int> FeatureTable::labels() const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const FeatureRow& r : rows) out.push_back(r.class_label);
  return out;
}

namespace {

constexpr int64_t kEvalBatch = 16;

Tensor encode_image_batch(const TriModalModel& model, const std::vector<Tensor>& images) {
  int64_t h = images[0].dim(0), w = images[0].dim(1);
  Tensor stacked({static_cast<int64_t>(images.size()), h, w, 3});
  for (size_t i = 0; i < images.size(); ++i)
    std::copy(images[i].data(), images[i].data() + images[i].numel(),
              stacked.data() + static_cast<int64_t>(i) * h * w * 3);
  return encode_images(model, stacked);
}

}  // namespace

FeatureTable extract_feature_table(const ArchiveReader& data, const TriModalModel& model,
                                   Modality modality, int views, ViewAggregate aggregate,
                                   uint64_t seed) {
  FeatureTable table;
  table.modality = modality;
  int64_t n = data.size();
  int64_t dim = model.cfg.backbone_dim();
  table.features = Tensor({n, dim});

  for (int64_t i = 0; i < n; ++i) {
    const ArchiveEntry& e = data.entry(i);
    FeatureRow row;
    row.object_id = e.id;
    row.class_label = e.label.value_or(-1);
    row.view_count = modality == Modality::image ? views : 0;
    table.rows.push_back(std::move(row));
  }

  if (modality == Modality::point) {
    for (int64_t base = 0; base < n; base += kEvalBatch) {
      int64_t stop = std::min(n, base + kEvalBatch);
      std::vector<PointCloud> clouds;
      std::vector<const PointCloud*> ptrs;
      for (int64_t i = base; i < stop; ++i) clouds.push_back(data.load_point_cloud(i));
      for (const auto& c : clouds) ptrs.push_back(&c);
      Tensor feats = encode_point_clouds(model, ptrs);
      std::copy(feats.data(), feats.data() + feats.numel(), table.features.data() + base * dim);
    }
    return table;
  }

  if (modality == Modality::mesh) {
    for (int64_t base = 0; base < n; base += kEvalBatch) {
      int64_t stop = std::min(n, base + kEvalBatch);
      std::vector<FaceFeatureSet> sets;
      std::vector<const FaceFeatureSet*> ptrs;
      for (int64_t i = base; i < stop; ++i) sets.push_back(data.load_mesh_features(i));
      for (const auto& m : sets) ptrs.push_back(&m);
      Tensor feats = encode_meshes(model, ptrs);
      std::copy(feats.data(), feats.data() + feats.numel(), table.features.data() + base * dim);
    }
    return table;
  }

  // image: aggregate over v randomly chosen stored views
  if (views < 1) throw std::invalid_argument("image features need at least one view");
  if (views > data.num_views())
    throw std::invalid_argument("requested views exceed the stored view pool");

  for (int64_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "eval-views", static_cast<uint64_t>(i)));
    std::vector<int> pool(static_cast<size_t>(data.num_views()));
    std::iota(pool.begin(), pool.end(), 0);
    rng.shuffle(pool.begin(), pool.end());
    pool.resize(static_cast<size_t>(views));

    std::vector<Tensor> imgs;
    for (int v : pool) imgs.push_back(data.load_view(i, v).pixels);
    Tensor feats = encode_image_batch(model, imgs);  // [views, dim]

    for (int64_t c = 0; c < dim; ++c) {
      double agg = feats.at(0, c);
      for (int64_t v = 1; v < feats.rows(); ++v) {
        double x = feats.at(v, c);
        agg = aggregate == ViewAggregate::mean ? agg + x : std::max(agg, x);
      }
      if (aggregate == ViewAggregate::mean) agg /= static_cast<double>(feats.rows());
      table.features.at(i, c) = agg;
    }
  }
  return table;
}

double linear_probe(const FeatureTable& train, const FeatureTable& test, double c,
                    uint64_t seed) {
  if (train.modality != test.modality)
    throw std::invalid_argument("probe: train/test modality mismatch");
  auto train_labels = train.labels();
  auto test_labels = test.labels();
  int num_classes = 0;
  for (int l : train_labels) num_classes = std::max(num_classes, l + 1);
  for (int l : test_labels) num_classes = std::max(num_classes, l + 1);

  LinearSvm svm(c, seed);
  svm.fit(train.features, train_labels, num_classes);
  return svm.accuracy(test.features, test_labels);
}

FewShotResult few_shot_probe(const FeatureTable& train, const FeatureTable& test, int shots,
                             int rounds, uint64_t seed, double c) {
  if (shots < 1 || rounds < 1) throw std::invalid_argument("few-shot: shots/rounds must be positive");
  std::map<int, std::vector<int64_t>> by_class;
  for (int64_t i = 0; i < static_cast<int64_t>(train.rows.size()); ++i)
    by_class[train.rows[static_cast<size_t>(i)].class_label].push_back(i);
  for (const auto& [cls, members] : by_class)
    if (static_cast<int>(members.size()) < shots)
      throw std::invalid_argument("few-shot: class " + std::to_string(cls) +
                                  " has fewer examples than requested shots");

  int64_t dim = train.features.cols();
  FewShotResult result;
  for (int round = 0; round < rounds; ++round) {
    Rng rng(derive_seed(seed, "fewshot-round", static_cast<uint64_t>(round)));
    std::vector<int64_t> chosen;
    for (auto& [cls, members] : by_class) {
      std::vector<int64_t> pool = members;
      rng.shuffle(pool.begin(), pool.end());
      chosen.insert(chosen.end(), pool.begin(), pool.begin() + shots);
    }
    std::sort(chosen.begin(), chosen.end());

    FeatureTable sub;
    sub.modality = train.modality;
    sub.features = Tensor({static_cast<int64_t>(chosen.size()), dim});
    for (size_t i = 0; i < chosen.size(); ++i) {
      sub.rows.push_back(train.rows[static_cast<size_t>(chosen[i])]);
      std::copy(train.features.data() + chosen[i] * dim,
                train.features.data() + (chosen[i] + 1) * dim,
                sub.features.data() + static_cast<int64_t>(i) * dim);
    }
    result.per_round.push_back(linear_probe(sub, test, c, derive_seed(seed, "fewshot-svm", round)));
  }

  double sum = std::accumulate(result.per_round.begin(), result.per_round.end(), 0.0);
  result.mean_accuracy = sum / static_cast<double>(rounds);
  double sq = 0.0;
  for (double a : result.per_round) sq += (a - result.mean_accuracy) * (a - result.mean_accuracy);
  result.std_accuracy = std::sqrt(sq / static_cast<double>(rounds));
  return result;
}

// ---------------------------------------------------------------------------
// segmentation metrics

SegmentationMetrics segmentation_metrics(const std::vector<std::vector<int32_t>>& pred,
                                         const std::vector<std::vector<int32_t>>& truth,
                                         const std::vector<int>& categories) {
  if (pred.size() != truth.size() || pred.size() != categories.size() || pred.empty())
    throw std::invalid_argument("segmentation_metrics: aligned non-empty inputs required");

  int64_t correct = 0, total = 0;
  std::vector<int64_t> inter(kNumPartClasses, 0), uni(kNumPartClasses, 0);
  std::set<int32_t> seen_classes;
  double instance_sum = 0.0;

  for (size_t s = 0; s < pred.size(); ++s) {
    const auto& p = pred[s];
    const auto& t = truth[s];
    if (p.size() != t.size())
      throw std::invalid_argument("segmentation_metrics: label count mismatch");
    auto parts = family_part_classes(categories[s]);
    std::set<int32_t> part_set(parts.begin(), parts.end());
    for (int32_t c : parts) seen_classes.insert(c);

    std::map<int32_t, std::pair<int64_t, int64_t>> shape_iou;  // class -> (inter, union)
    for (int32_t c : parts) shape_iou[c] = {0, 0};
    for (size_t i = 0; i < p.size(); ++i) {
      if (!part_set.count(p[i]) || !part_set.count(t[i]))
        throw std::invalid_argument("segmentation_metrics: label outside the category's parts");
      total += 1;
      if (p[i] == t[i]) ++correct;
      for (int32_t c : parts) {
        bool in_p = p[i] == c, in_t = t[i] == c;
        if (in_p && in_t) ++shape_iou[c].first;
        if (in_p || in_t) ++shape_iou[c].second;
      }
    }
    double iou_sum = 0.0;
    for (int32_t c : parts) {
      auto [si, su] = shape_iou[c];
      iou_sum += su == 0 ? 1.0 : static_cast<double>(si) / static_cast<double>(su);
      inter[static_cast<size_t>(c)] += si;
      uni[static_cast<size_t>(c)] += su;
    }
    instance_sum += iou_sum / static_cast<double>(parts.size());
  }

  SegmentationMetrics m;
  m.overall_accuracy = static_cast<double>(correct) / static_cast<double>(total);
  double class_sum = 0.0;
  for (int32_t c : seen_classes) {
    int64_t u = uni[static_cast<size_t>(c)];
    class_sum += u == 0 ? 1.0 : static_cast<double>(inter[static_cast<size_t>(c)]) / static_cast<double>(u);
  }
  m.class_miou = class_sum / static_cast<double>(seen_classes.size());
  m.instance_miou = instance_sum / static_cast<double>(pred.size());
  return m;
}

SegMode seg_mode_from_name(const std::string& name) {
  if (name == "frozen") return SegMode::frozen;
  if (name == "unfrozen") return SegMode::unfrozen;
  if (name == "scratch") return SegMode::scratch;
  throw std::invalid_argument("unknown segmentation mode: " + name);
}

// ---------------------------------------------------------------------------
// part segmentation transfer

namespace {

// Four stacked per-point linear layers over the EdgeConv taps plus the
// tiled global feature.
struct SegHead {
  nn::Linear fc1, fc2, fc3, fc4;

  SegHead(const EncoderConfig& cfg, int64_t num_classes) {
    int64_t per_point = 0;
    for (int64_t c : cfg.edge_channels) per_point += cfg.scaled(c);
    int64_t in = per_point + cfg.backbone_dim();
    fc1 = nn::Linear(in, cfg.scaled(256));
    fc2 = nn::Linear(cfg.scaled(256), cfg.scaled(256));
    fc3 = nn::Linear(cfg.scaled(256), cfg.scaled(128));
    fc4 = nn::Linear(cfg.scaled(128), num_classes);
  }
  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
    fc3.init(rng);
    fc4.init(rng);
  }
  nn::ParamList collect() {
    nn::ParamList out;
    fc1.collect("seg.fc1", out);
    fc2.collect("seg.fc2", out);
    fc3.collect("seg.fc3", out);
    fc4.collect("seg.fc4", out);
    return out;
  }
  ag::Var forward(nn::Session& s, ag::Var x) const {
    ag::Var h = ag::relu(s.graph, fc1.forward(s, x));
    h = ag::relu(s.graph, fc2.forward(s, h));
    h = ag::relu(s.graph, fc3.forward(s, h));
    return fc4.forward(s, h);
  }
};

// per-point logits for a batch of shapes sharing a point count
ag::Var seg_forward(nn::Session& s, const TriModalModel& model, const SegHead& head,
                    const std::vector<const SegmentationRecord*>& shapes) {
  int64_t b = static_cast<int64_t>(shapes.size());
  int64_t n = shapes[0]->points.rows();
  Tensor flat({b * n, 3});
  for (int64_t i = 0; i < b; ++i) {
    if (shapes[static_cast<size_t>(i)]->points.rows() != n)
      throw std::invalid_argument("segmentation batch must share the point count");
    std::copy(shapes[static_cast<size_t>(i)]->points.data(),
              shapes[static_cast<size_t>(i)]->points.data() + n * 3, flat.data() + i * n * 3);
  }
  ag::Var per_point;
  ag::Var global = model.point.forward(s, s.constant(std::move(flat)), b, n, &per_point);

  std::vector<int64_t> tile(static_cast<size_t>(b * n));
  for (int64_t i = 0; i < b; ++i)
    for (int64_t p = 0; p < n; ++p) tile[static_cast<size_t>(i * n + p)] = i;
  ag::Var tiled = ag::gather_rows(s.graph, global, std::move(tile));
  return head.forward(s, ag::concat_cols(s.graph, {per_point, tiled}));
}

}  // namespace

SegmentationMetrics part_segmentation(const TriModalModel& model,
                                      const std::vector<SegmentationRecord>& train,
                                      const std::vector<SegmentationRecord>& test,
                                      const SegTransferConfig& config) {
  if (train.empty() || test.empty())
    throw std::invalid_argument("part segmentation needs train and test records");

  // per-category labeled subset
  std::map<int, std::vector<int64_t>> by_cat;
  for (int64_t i = 0; i < static_cast<int64_t>(train.size()); ++i)
    by_cat[train[static_cast<size_t>(i)].category].push_back(i);

  std::vector<int64_t> labeled;
  Rng pick_rng(derive_seed(config.seed, "seg-subset"));
  for (auto& [cat, members] : by_cat) {
    int64_t want = static_cast<int64_t>(
        std::llround(config.label_fraction * static_cast<double>(members.size())));
    if (want == 0)
      throw std::runtime_error("category " + std::to_string(cat) +
                               " has no training shapes after subsampling");
    std::vector<int64_t> pool = members;
    pick_rng.shuffle(pool.begin(), pool.end());
    labeled.insert(labeled.end(), pool.begin(), pool.begin() + want);
  }
  std::sort(labeled.begin(), labeled.end());

  TriModalModel net = model;  // local copy; modes decide what trains
  if (config.mode == SegMode::scratch) {
    Rng rng(derive_seed(config.seed, "seg-scratch"));
    net.point.init(rng);
  }

  SegHead head(net.cfg, kNumPartClasses);
  {
    Rng rng(derive_seed(config.seed, "seg-head"));
    head.init(rng);
  }

  nn::ParamList trainable = head.collect();
  if (config.mode != SegMode::frozen) {
    nn::ParamList backbone;
    net.point.collect("point", backbone);
    trainable.insert(trainable.end(), backbone.begin(), backbone.end());
  }

  Sgd opt(config.momentum, /*weight_decay=*/0.0);
  Rng batch_rng(derive_seed(config.seed, "seg-batches"));
  int64_t bs = std::min<int64_t>(config.batch_shapes, static_cast<int64_t>(labeled.size()));

  for (int64_t iter = 0; iter < config.iterations; ++iter) {
    std::vector<const SegmentationRecord*> shapes;
    std::vector<int32_t> labels;
    for (int64_t i = 0; i < bs; ++i) {
      const SegmentationRecord& r =
          train[static_cast<size_t>(labeled[static_cast<size_t>(batch_rng.below(
              static_cast<int64_t>(labeled.size())))])];
      shapes.push_back(&r);
      labels.insert(labels.end(), r.labels.begin(), r.labels.end());
    }
    // frozen mode keeps the backbone in eval mode: batch statistics from
    // tiny shape batches would otherwise diverge from the running stats
    // used at test time
    nn::Session s(/*grad_enabled=*/true, /*training=*/config.mode != SegMode::frozen);
    ag::Var logits = seg_forward(s, net, head, shapes);
    ag::Var loss = ag::softmax_cross_entropy(s.graph, logits, std::move(labels));
    s.graph.backward(loss);
    opt.step(s, trainable, config.lr);
  }

  // evaluation: argmax restricted to the shape's category parts
  std::vector<std::vector<int32_t>> preds, truths;
  std::vector<int> cats;
  for (const SegmentationRecord& r : test) {
    nn::Session s(/*grad_enabled=*/false, /*training=*/false);
    ag::Var logits = seg_forward(s, net, head, {&r});
    const Tensor& lv = s.graph.value(logits);
    auto parts = family_part_classes(r.category);
    std::vector<int32_t> p(static_cast<size_t>(lv.rows()));
    for (int64_t i = 0; i < lv.rows(); ++i) {
      int32_t best = parts[0];
      double best_score = lv.at(i, parts[0]);
      for (int32_t c : parts)
        if (lv.at(i, c) > best_score) {
          best_score = lv.at(i, c);
          best = c;
        }
      p[static_cast<size_t>(i)] = best;
    }
    preds.push_back(std::move(p));
    truths.push_back(r.labels);
    cats.push_back(r.category);
  }
  return segmentation_metrics(preds, truths, cats);
}

// ---------------------------------------------------------------------------
// persistence

void save_feature_table(const std::string& dir, const FeatureTable& table) {
  fs::create_directories(dir);
  write_blob((fs::path(dir) / "features.bin").string(), table.features, Dtype::f64);
  json rows = json::array();
  for (const FeatureRow& r : table.rows)
    rows.push_back({{"id", r.object_id}, {"label", r.class_label}, {"views", r.view_count}});
  json meta{{"modality", modality_name(table.modality)}, {"rows", rows}};
  std::ofstream f((fs::path(dir) / "table.json").string(), std::ios::trunc);
  f << meta.dump(2) << "\n";
}

FeatureTable load_feature_table(const std::string& dir) {
  std::ifstream f((fs::path(dir) / "table.json").string());
  if (!f) throw std::runtime_error("cannot open feature table in " + dir);
  json meta = json::parse(f);
  FeatureTable table;
  table.modality = modality_from_name(meta.at("modality").get<std::string>());
  for (const json& r : meta.at("rows")) {
    FeatureRow row;
    row.object_id = r.at("id").get<std::string>();
    row.class_label = r.at("label").get<int>();
    row.view_count = r.at("views").get<int>();
    table.rows.push_back(std::move(row));
  }
  table.features = read_blob((fs::path(dir) / "features.bin").string());
  return table;
}

}  // namespace trimodal
