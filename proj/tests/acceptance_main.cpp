// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
// the process exits nonzero if any fail. Artifacts live in a scratch
// directory (override with TRIMODAL_ACCEPT_DIR to cache the training run
// between invocations; everything is seeded, so cached and fresh agree).
//
// Run all criteria:        ./acceptance
// Run a subset:            ./acceptance 1 4 5

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trimodal/contrastive.hpp"
#include "trimodal/dataprep.hpp"
#include "trimodal/eval.hpp"
#include "trimodal/procgen.hpp"
#include "trimodal/retrieval.hpp"
#include "trimodal/rng.hpp"
#include "trimodal/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace trimodal;

namespace {

// ---------------------------------------------------------------------------
// shared fixtures

struct Workspace {
  fs::path root;
  bool persistent = false;

  Workspace() {
    if (const char* env = std::getenv("TRIMODAL_ACCEPT_DIR")) {
      root = env;
      persistent = true;
    } else {
      root = fs::temp_directory_path() /
             ("trimodal_accept_" + std::to_string(::getpid()));
    }
    fs::create_directories(root);
  }
  ~Workspace() {
    if (!persistent) {
      std::error_code ec;
      fs::remove_all(root, ec);
    }
  }
  std::string path(const std::string& rel) const { return (root / rel).string(); }
  bool has(const std::string& rel) const { return fs::exists(root / rel); }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

// pinned desk-scale configuration for the bundled procedural corpus
DatasetConfig toy_dataset_config(uint64_t seed) {
  DatasetConfig c;
  c.points = 256;
  c.faces = 128;
  c.num_views = 8;
  c.width = 32;
  c.height = 32;
  c.seed = seed;
  return c;
}

TrainConfig toy_train_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.iterations = 2000;
  c.lr_decay_interval = 500;
  c.checkpoint_every = 100;
  c.seed = 2024;
  c.encoder.width_scale = 0.125;
  c.encoder.knn = 4;
  c.encoder.face_budget = 128;
  c.encoder.universal_dim = 32;
  c.encoder.kernel_vectors = 4;
  return c;
}

// 60 train / 30 test objects, three families with seeded deformations
void ensure_toy_archives() {
  Workspace& w = workspace();
  if (!w.has("train/manifest.jsonl")) {
    write_toy_manifest(w.path("train.jsonl"), 20, 101, "train");
    build_dataset(w.path("train.jsonl"), w.path("train"), toy_dataset_config(101));
  }
  if (!w.has("test/manifest.jsonl")) {
    write_toy_manifest(w.path("test.jsonl"), 10, 202, "test");
    build_dataset(w.path("test.jsonl"), w.path("test"), toy_dataset_config(202));
  }
}

std::string ensure_trained_checkpoint() {
  Workspace& w = workspace();
  TrainConfig cfg = toy_train_config();
  std::string expected = w.path("run/checkpoint_00002000.ckpt");
  if (!fs::exists(expected)) {
    ensure_toy_archives();
    ArchiveReader data(w.path("train"));
    FitResult res = fit(data, cfg, w.path("run"));
    if (res.final_checkpoint != expected)
      throw std::runtime_error("unexpected final checkpoint " + res.final_checkpoint);
  }
  return expected;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<json> rows;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) rows.push_back(json::parse(line));
  return rows;
}

// ---------------------------------------------------------------------------
// criterion harness

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Check {
  Outcome& o;
  // records the first failure, keeps running so all sub-results print
  void operator()(bool ok, const std::string& what) {
    if (!ok && o.pass) {
      o.pass = false;
      o.detail = what;
    } else if (!ok) {
      o.detail += "; " + what;
    }
  }
};

// ---------------------------------------------------------------------------
// criterion 1: loss oracle equivalence

double oracle_sim(const Tensor& m, int64_t i, const Tensor& n, int64_t j, double tau) {
  double dot = 0, ni = 0, nj = 0;
  for (int64_t c = 0; c < m.cols(); ++c) {
    dot += m.at(i, c) * n.at(j, c);
    ni += m.at(i, c) * m.at(i, c);
    nj += n.at(j, c) * n.at(j, c);
  }
  return dot / (tau * std::sqrt(ni) * std::sqrt(nj));
}

double oracle_pair_loss(const Tensor& a, const Tensor& p, double tau) {
  int64_t k = a.rows();
  double total = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    double numer = std::exp(oracle_sim(a, i, p, i, tau));
    double denom = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      if (j != i) denom += std::exp(oracle_sim(a, i, a, j, tau));
      denom += std::exp(oracle_sim(a, i, p, j, tau));
    }
    total += -std::log(numer / denom);
  }
  return total / static_cast<double>(k);
}

Outcome criterion1() {
  Outcome o;
  Check check{o};
  Rng rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int64_t k = 1 + rng.below(8);
    int64_t d = 2 + rng.below(15);
    double tau = rng.uniform(0.05, 2.0);
    Tensor a({k, d}), p({k, d});
    for (int64_t i = 0; i < a.numel(); ++i) {
      a[i] = rng.uniform(-1, 1);
      p[i] = rng.uniform(-1, 1);
    }
    double batched = pair_loss(a, p, tau);
    double oracle = oracle_pair_loss(a, p, tau);
    worst = std::max(worst, std::abs(batched - oracle));
    double sym = symmetric_pair_loss(a, p, tau);
    double sym_oracle = oracle_pair_loss(a, p, tau) + oracle_pair_loss(p, a, tau);
    worst = std::max(worst, std::abs(sym - sym_oracle));
  }
  check(worst <= 1e-6, "oracle gap " + std::to_string(worst));

  // hand-derived anchor values
  Tensor orth({2, 2}, {1, 0, 0, 1});
  double expect_orth = std::log(2.0 + std::exp(1.0)) - 1.0;
  check(std::abs(pair_loss(orth, orth, 1.0) - expect_orth) < 1e-9, "ln(2+e)-1 case");
  Tensor collapsed({2, 2}, {1, 0, 1, 0});
  check(std::abs(pair_loss(collapsed, collapsed, 1.0) - std::log(3.0)) < 1e-9, "ln 3 case");

  std::ostringstream os;
  os << "max |batched - oracle| = " << worst;
  if (o.pass) o.detail = os.str();
  return o;
}

// ---------------------------------------------------------------------------
// criterion 2: gradient correctness

double rel_err(double a, double b) {
  double denom = std::max({1e-8, std::abs(a), std::abs(b)});
  return std::abs(a - b) / denom;
}

Outcome criterion2() {
  Outcome o;
  Check check{o};

  // (a) loss gradients w.r.t. all four feature batches
  {
    Rng rng(2001);
    Tensor m({4, 6}), p({4, 6}), i1({4, 6}), i2({4, 6});
    for (Tensor* t : {&m, &p, &i1, &i2})
      for (int64_t i = 0; i < t->numel(); ++i) (*t)[i] = rng.uniform(-1, 1);

    ag::Graph g;
    ag::Var vm = g.leaf(m, true), vp = g.leaf(p, true);
    ag::Var v1 = g.leaf(i1, true), v2 = g.leaf(i2, true);
    auto vars = total_loss_vars(g, vm, vp, v1, v2, 0.2);
    g.backward(vars.total);

    double worst = 0.0;
    std::vector<std::pair<Tensor*, ag::Var>> probes{{&m, vm}, {&p, vp}, {&i1, v1}, {&i2, v2}};
    for (auto& [tensor, var] : probes) {
      const Tensor& analytic = g.grad(var);
      for (int64_t i = 0; i < tensor->numel(); ++i) {
        double keep = (*tensor)[i];
        (*tensor)[i] = keep + 1e-6;
        double up = total_loss(m, p, i1, i2, 0.2).total;
        (*tensor)[i] = keep - 1e-6;
        double down = total_loss(m, p, i1, i2, 0.2).total;
        (*tensor)[i] = keep;
        worst = std::max(worst, rel_err(analytic[i], (up - down) / 2e-6));
      }
    }
    check(worst <= 1e-3, "loss-gradient rel err " + std::to_string(worst));
  }

  // (b) end to end through eighth-width encoders on tiny inputs
  EncoderConfig cfg;
  cfg.width_scale = 0.125;
  cfg.knn = 4;
  cfg.face_budget = 16;
  cfg.universal_dim = 8;
  cfg.kernel_vectors = 2;

  DatasetConfig dc;
  dc.points = 32;
  dc.faces = 16;
  dc.num_views = 2;
  dc.width = 16;
  dc.height = 16;
  dc.seed = 77;
  std::vector<TriModalSample> batch;
  batch.push_back(prepare_sample(generate_shape({"box", 1}).mesh, dc));
  batch.push_back(prepare_sample(generate_shape({"cone", 2}).mesh, dc));
  for (auto& s : batch) {
    if (s.object_id.empty()) s.object_id = "sample";
  }

  int64_t k = 2, n = dc.points, h = dc.height, wdt = dc.width;
  Tensor points({k * n, 3});
  Tensor images({2 * k * h * wdt, 3});
  std::vector<FaceFeatureSet> meshes;
  for (int64_t i = 0; i < k; ++i) {
    const TriModalSample& s = batch[static_cast<size_t>(i)];
    std::copy(s.point_cloud.points.data(), s.point_cloud.points.data() + n * 3,
              points.data() + i * n * 3);
    meshes.push_back(s.mesh);
    std::copy(s.views[0].pixels.data(), s.views[0].pixels.data() + h * wdt * 3,
              images.data() + i * h * wdt * 3);
    std::copy(s.views[1].pixels.data(), s.views[1].pixels.data() + h * wdt * 3,
              images.data() + (k + i) * h * wdt * 3);
  }

  auto forward_loss = [&](TriModalModel& model, nn::Session& s) {
    std::vector<const FaceFeatureSet*> mesh_ptrs;
    for (const auto& m : meshes) mesh_ptrs.push_back(&m);
    ag::Var mesh_feat = model.mesh.forward(s, mesh_ptrs);
    ag::Var point_feat = model.point.forward(s, s.constant(points), k, n);
    ag::Var image_feat = model.image.forward(s, s.constant(images), 2 * k, h, wdt);
    ag::Var f_m = model.mesh_head.forward(s, mesh_feat);
    ag::Var f_p = model.point_head.forward(s, point_feat);
    ag::Var f_img = model.image_head.forward(s, image_feat);
    ag::Var f_i1 = ag::slice_rows(s.graph, f_img, 0, k);
    ag::Var f_i2 = ag::slice_rows(s.graph, f_img, k, 2 * k);
    return total_loss_vars(s.graph, f_m, f_p, f_i1, f_i2, 0.1);
  };

  TriModalModel model(cfg);
  model.init(4242);

  TriModalModel work = model;
  nn::Session session(true, true);
  auto vars = forward_loss(work, session);
  session.graph.backward(vars.total);

  auto loss_of = [&](TriModalModel probe) {
    nn::Session s(false, true);
    auto v = forward_loss(probe, s);
    return s.graph.value(v.total)[0];
  };

  double worst = 0.0;
  std::string worst_name;
  int64_t checked = 0;
  Rng pick(2002);
  nn::ParamList params = work.collect();
  nn::ParamList reference = model.collect();
  for (size_t t = 0; t < params.size(); ++t) {
    if (!params[t].trainable) continue;
    ag::Var leaf = session.leaf_of(*params[t].value);
    const Tensor* grad = leaf.valid() ? &session.graph.grad(leaf) : nullptr;
    int64_t numel = params[t].value->numel();
    int64_t samples = std::min<int64_t>(4, numel);
    for (int64_t s = 0; s < samples; ++s) {
      int64_t idx = pick.below(numel);
      double analytic = grad ? (*grad)[idx] : 0.0;

      TriModalModel probe = model;
      nn::ParamList probe_params = probe.collect();
      Tensor* pt = probe_params[t].value;
      double keep = (*pt)[idx];
      (*pt)[idx] = keep + 1e-5;
      double up = loss_of(probe);
      (*pt)[idx] = keep - 1e-5;
      double down = loss_of(probe);
      (*pt)[idx] = keep;
      double fd = (up - down) / 2e-5;

      // combined tolerance: an exactly-zero gradient (a bias feeding a
      // batch norm) leaves finite differences at the roundoff floor
      double err = std::abs(analytic - fd) <= 1e-6 ? 0.0 : rel_err(analytic, fd);
      ++checked;
      if (err > worst) {
        worst = err;
        worst_name = reference[t].name;
      }
    }
  }
  check(worst <= 1e-3,
        "end-to-end rel err " + std::to_string(worst) + " at " + worst_name);
  std::ostringstream os;
  os << checked << " sampled parameter entries, worst rel err " << worst << " (" << worst_name
     << ")";
  if (o.pass) o.detail = os.str();
  return o;
}

// ---------------------------------------------------------------------------
// criterion 3: structural invariants

Outcome criterion3() {
  Outcome o;
  Check check{o};
  EncoderConfig cfg;
  cfg.width_scale = 0.125;
  cfg.knn = 4;
  cfg.face_budget = 32;
  cfg.universal_dim = 8;
  cfg.kernel_vectors = 2;

  {  // point-cloud permutation invariance
    PointEncoder enc(cfg);
    Rng rng(3001);
    enc.init(rng);
    Tensor pts({64, 3});
    for (int64_t i = 0; i < pts.numel(); ++i) pts[i] = rng.uniform(-1, 1);

    nn::Session s1(false, false);
    Tensor base = s1.graph.value(enc.forward(s1, s1.constant(pts), 1, 64));
    std::vector<int64_t> perm(64);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    Tensor shuffled({64, 3});
    for (int64_t r = 0; r < 64; ++r)
      for (int64_t c = 0; c < 3; ++c)
        shuffled.at(r, c) = pts.at(perm[static_cast<size_t>(r)], c);
    nn::Session s2(false, false);
    Tensor moved = s2.graph.value(enc.forward(s2, s2.constant(shuffled), 1, 64));
    double gap = 0;
    for (int64_t i = 0; i < base.numel(); ++i) gap = std::max(gap, std::abs(base[i] - moved[i]));
    check(gap <= 1e-5, "point permutation gap " + std::to_string(gap));
  }

  {  // mesh face-relabeling invariance
    MeshEncoder enc(cfg);
    Rng rng(3002);
    enc.init(rng);
    FaceFeatureSet f =
        extract_face_features(generate_shape({"cylinder", 9}).mesh, 32, 5);

    nn::Session s1(false, false);
    Tensor base = s1.graph.value(enc.forward(s1, {&f}));

    std::vector<int64_t> perm(32);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    std::vector<int64_t> inverse(32);
    for (int64_t i = 0; i < 32; ++i)
      inverse[static_cast<size_t>(perm[static_cast<size_t>(i)])] = i;
    FaceFeatureSet g;
    g.count = 32;
    g.centers.resize(32 * 3);
    g.corner_vectors.resize(32 * 9);
    g.normals.resize(32 * 3);
    g.neighbor_index.resize(32 * 3);
    for (int64_t slot = 0; slot < 32; ++slot) {
      int64_t src = perm[static_cast<size_t>(slot)];
      std::copy(f.centers.begin() + src * 3, f.centers.begin() + src * 3 + 3,
                g.centers.begin() + slot * 3);
      std::copy(f.corner_vectors.begin() + src * 9, f.corner_vectors.begin() + src * 9 + 9,
                g.corner_vectors.begin() + slot * 9);
      std::copy(f.normals.begin() + src * 3, f.normals.begin() + src * 3 + 3,
                g.normals.begin() + slot * 3);
      for (int e = 0; e < 3; ++e)
        g.neighbor_index[slot * 3 + e] =
            static_cast<int32_t>(inverse[static_cast<size_t>(f.neighbor_index[src * 3 + e])]);
    }
    nn::Session s2(false, false);
    Tensor moved = s2.graph.value(enc.forward(s2, {&g}));
    double gap = 0;
    for (int64_t i = 0; i < base.numel(); ++i) gap = std::max(gap, std::abs(base[i] - moved[i]));
    check(gap <= 1e-5, "face relabel gap " + std::to_string(gap));
  }

  {  // loss invariances
    Rng rng(3003);
    Tensor a({6, 8}), p({6, 8});
    for (int64_t i = 0; i < a.numel(); ++i) {
      a[i] = rng.uniform(-1, 1);
      p[i] = rng.uniform(-1, 1);
    }
    double base = pair_loss(a, p, 0.5);

    std::vector<int64_t> perm{3, 0, 5, 1, 4, 2};
    Tensor ap({6, 8}), pp({6, 8});
    for (int64_t r = 0; r < 6; ++r)
      for (int64_t c = 0; c < 8; ++c) {
        ap.at(r, c) = a.at(perm[static_cast<size_t>(r)], c);
        pp.at(r, c) = p.at(perm[static_cast<size_t>(r)], c);
      }
    check(std::abs(pair_loss(ap, pp, 0.5) - base) <= 1e-9, "loss joint-permutation");

    Tensor a2 = a, p2 = p;
    for (int64_t c = 0; c < 8; ++c) {
      a2.at(1, c) *= 40.0;
      p2.at(4, c) *= 0.005;
    }
    check(std::abs(pair_loss(a2, p2, 0.5) - base) <= 1e-9, "per-row scale invariance");
  }

  if (o.pass) o.detail = "point permutation, face relabeling, loss invariances";
  return o;
}

// ---------------------------------------------------------------------------
// criterion 4: data pipeline oracles

Outcome criterion4() {
  Outcome o;
  Check check{o};

  {  // FPS vs exhaustive greedy
    Rng rng(4001);
    bool all_equal = true;
    for (int trial = 0; trial < 100; ++trial) {
      int64_t m = 2 + rng.below(9);
      Tensor pts({m, 3});
      for (int64_t i = 0; i < pts.numel(); ++i) pts[i] = rng.uniform(-1, 1);
      int64_t n = 1 + rng.below(m);
      int64_t start = rng.below(m);

      auto fast = farthest_point_sample(pts, n, start);
      // exhaustive recomputation
      std::vector<int64_t> slow{start};
      while (static_cast<int64_t>(slow.size()) < n) {
        int64_t best = -1;
        double best_d = -1;
        for (int64_t i = 0; i < m; ++i) {
          double dmin = std::numeric_limits<double>::infinity();
          for (int64_t s : slow) {
            double d = 0;
            for (int64_t c = 0; c < 3; ++c) {
              double diff = pts.at(i, c) - pts.at(s, c);
              d += diff * diff;
            }
            dmin = std::min(dmin, d);
          }
          if (dmin > best_d) {
            best_d = dmin;
            best = i;
          }
        }
        slow.push_back(best);
      }
      if (fast != slow) all_equal = false;
    }
    check(all_equal, "fps diverged from brute force");
  }

  {  // unit-sphere invariants on every generated cloud
    const char* families[] = {"box", "cylinder", "cone"};
    double worst_center = 0, worst_radius = 0;
    for (int i = 0; i < 30; ++i) {
      GeneratorSpec spec{families[i % 3], static_cast<uint64_t>(4100 + i)};
      PointCloud pc = sample_point_cloud(generate_shape(spec).mesh, 128, 4, 4200 + i);
      double cx = 0, cy = 0, cz = 0, maxn = 0;
      for (int64_t r = 0; r < 128; ++r) {
        cx += pc.points.at(r, 0);
        cy += pc.points.at(r, 1);
        cz += pc.points.at(r, 2);
        maxn = std::max(maxn, std::sqrt(pc.points.at(r, 0) * pc.points.at(r, 0) +
                                        pc.points.at(r, 1) * pc.points.at(r, 1) +
                                        pc.points.at(r, 2) * pc.points.at(r, 2)));
      }
      worst_center = std::max({worst_center, std::abs(cx / 128), std::abs(cy / 128),
                               std::abs(cz / 128)});
      worst_radius = std::max(worst_radius, std::abs(maxn - 1.0));
    }
    check(worst_center <= 1e-6, "centroid drift " + std::to_string(worst_center));
    check(worst_radius <= 1e-6, "radius drift " + std::to_string(worst_radius));
  }

  {  // AP vs exhaustive enumeration on all binary lists up to length 6
    bool all_equal = true;
    for (int len = 1; len <= 6 && all_equal; ++len) {
      for (int mask = 1; mask < (1 << len); ++mask) {
        std::vector<bool> rel(static_cast<size_t>(len));
        for (int b = 0; b < len; ++b) rel[static_cast<size_t>(b)] = (mask >> b) & 1;
        int64_t total_rel = std::count(rel.begin(), rel.end(), true);
        double sum = 0;
        for (size_t r = 0; r < rel.size(); ++r) {
          if (!rel[r]) continue;
          int64_t hits = 0;
          for (size_t i = 0; i <= r; ++i) hits += rel[i] ? 1 : 0;
          sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
        double expected = sum / static_cast<double>(total_rel);
        if (std::abs(average_precision(rel) - expected) > 1e-12) {
          all_equal = false;
          break;
        }
      }
    }
    check(all_equal, "AP enumeration mismatch");
  }

  if (o.pass) o.detail = "fps oracle, unit-sphere invariants, AP enumeration";
  return o;
}

// ---------------------------------------------------------------------------
// criterion 5: toy end-to-end learning

// mAP of ranked lists under a relabeling of objects
double map_under_labels(const RetrievalResult& result, const RetrievalIndex& gallery,
                        const std::map<std::string, int>& label_of) {
  double ap_sum = 0;
  int64_t counted = 0;
  for (const RankedList& r : result.rankings) {
    int qlabel = label_of.at(r.query_id);
    std::vector<bool> rel;
    rel.reserve(r.items.size());
    int64_t relevant = 0;
    for (const RankedItem& it : r.items) {
      bool match =
          label_of.at(gallery.entries[static_cast<size_t>(it.gallery_pos)].object_id) == qlabel;
      rel.push_back(match);
      relevant += match ? 1 : 0;
    }
    if (relevant == 0) continue;
    ap_sum += average_precision(rel);
    ++counted;
  }
  return counted == 0 ? 0.0 : ap_sum / static_cast<double>(counted);
}

// empirical chance level: mean mAP over label permutations of the same lists
double permutation_baseline(const RetrievalResult& result, const RetrievalIndex& gallery,
                            const std::vector<std::pair<std::string, int>>& id_labels,
                            int permutations, uint64_t seed) {
  std::vector<int> labels;
  for (const auto& [id, l] : id_labels) labels.push_back(l);
  Rng rng(seed);
  double sum = 0;
  for (int p = 0; p < permutations; ++p) {
    std::vector<int> shuffled = labels;
    rng.shuffle(shuffled.begin(), shuffled.end());
    std::map<std::string, int> label_of;
    for (size_t i = 0; i < id_labels.size(); ++i) label_of[id_labels[i].first] = shuffled[i];
    sum += map_under_labels(result, gallery, label_of);
  }
  return sum / permutations;
}

struct RetrievalProbe {
  double map = 0;
  double baseline = 0;
};

RetrievalProbe run_direction(const ArchiveReader& data, const TriModalModel& model,
                             Modality src, Modality dst, int views) {
  uint64_t seed = derive_seed(5001, std::string(modality_name(src)) + modality_name(dst));
  RetrievalResult r = evaluate_retrieval(data, model, src, dst, views, seed, true);
  RetrievalIndex gallery =
      src == dst ? build_retrieval_index(data, model, src, views, derive_seed(seed, "query-side"))
                 : build_retrieval_index(data, model, dst, views, derive_seed(seed, "gallery-side"));

  std::vector<std::pair<std::string, int>> id_labels;
  for (int64_t i = 0; i < data.size(); ++i)
    id_labels.push_back({data.entry(i).id, data.entry(i).label.value_or(-1)});

  RetrievalProbe probe;
  probe.map = r.map;
  probe.baseline = permutation_baseline(r, gallery, id_labels, 100, derive_seed(seed, "perm"));
  return probe;
}

Outcome criterion5() {
  Outcome o;
  Check check{o};
  ensure_toy_archives();
  std::string ckpt = ensure_trained_checkpoint();
  Workspace& w = workspace();

  // (a) the loss trend over the run
  auto rows = read_jsonl(w.path("run/metrics.jsonl"));
  check(rows.size() == 2000, "expected 2000 metric rows");
  if (!o.pass) return o;
  auto mean_total = [&](size_t begin, size_t end) {
    double s = 0;
    for (size_t i = begin; i < end; ++i) s += rows[i]["total"].get<double>();
    return s / static_cast<double>(end - begin);
  };
  double head = mean_total(0, 100), tail = mean_total(1900, 2000);
  check(tail < head, "loss did not decrease (first 5% " + std::to_string(head) +
                         ", last 5% " + std::to_string(tail) + ")");

  TriModalModel model = load_model_checkpoint(ckpt);
  ArchiveReader train(w.path("train")), test(w.path("test"));

  // (b) linear probes vs the label-permutation chance level
  std::ostringstream probe_note;
  for (Modality m : {Modality::mesh, Modality::point, Modality::image}) {
    int views = m == Modality::image ? 4 : 1;
    FeatureTable train_t = extract_feature_table(train, model, m, views, ViewAggregate::mean,
                                                 derive_seed(5002, modality_name(m)));
    FeatureTable test_t = extract_feature_table(test, model, m, views, ViewAggregate::mean,
                                                derive_seed(5003, modality_name(m)));
    double acc = linear_probe(train_t, test_t);

    Rng rng(derive_seed(5004, modality_name(m)));
    double chance = 0;
    const int kRounds = 20;
    for (int round = 0; round < kRounds; ++round) {
      FeatureTable scrambled = train_t;
      std::vector<int> labels = train_t.labels();
      rng.shuffle(labels.begin(), labels.end());
      for (size_t i = 0; i < labels.size(); ++i) scrambled.rows[i].class_label = labels[i];
      chance += linear_probe(scrambled, test_t, 1.0, derive_seed(5005, modality_name(m), round));
    }
    chance /= kRounds;
    probe_note << modality_name(m) << " " << acc << " (chance " << chance << ") ";
    check(acc - chance >= 0.25, std::string("probe margin violated for ") + modality_name(m) +
                                    ": acc " + std::to_string(acc) + " chance " +
                                    std::to_string(chance));
  }

  // (c) six cross-modal directions vs permutation chance
  std::ostringstream retr_note;
  const std::pair<Modality, Modality> directions[] = {
      {Modality::mesh, Modality::point}, {Modality::mesh, Modality::image},
      {Modality::point, Modality::mesh}, {Modality::point, Modality::image},
      {Modality::image, Modality::mesh}, {Modality::image, Modality::point}};
  for (auto [src, dst] : directions) {
    RetrievalProbe p = run_direction(test, model, src, dst, 4);
    retr_note << modality_name(src) << ">" << modality_name(dst) << " " << p.map << "/"
              << p.baseline << " ";
    check(p.map - p.baseline >= 0.2,
          std::string("cross-modal margin violated for ") + modality_name(src) + "->" +
              modality_name(dst) + ": mAP " + std::to_string(p.map) + " baseline " +
              std::to_string(p.baseline));
  }

  // (d) more image views help in-domain retrieval. A single-view feature
  // depends heavily on which view gets drawn, so each side's mAP is the
  // mean over ten seeded draws of the same evaluation.
  auto mean_map = [&](int views) {
    double sum = 0;
    for (uint64_t rep = 0; rep < 10; ++rep)
      sum += evaluate_retrieval(test, model, Modality::image, Modality::image, views,
                                derive_seed(5006, "view-sweep", rep))
                 .map;
    return sum / 10.0;
  };
  double v1 = mean_map(1), v4 = mean_map(4);
  check(v4 >= v1, "image mAP with 4 views " + std::to_string(v4) + " fell below 1 view " +
                      std::to_string(v1));

  std::ostringstream os;
  os << "loss " << head << "->" << tail << "; probes " << probe_note.str() << "; retrieval "
     << retr_note.str() << "; image mAP v1 " << v1 << " v4 " << v4;
  o.detail = os.str();
  return o;
}

// ---------------------------------------------------------------------------
// criterion 6: few-shot and segmentation directions

Outcome criterion6() {
  Outcome o;
  Check check{o};
  std::string ckpt = ensure_trained_checkpoint();
  Workspace& w = workspace();
  TriModalModel model = load_model_checkpoint(ckpt);
  ArchiveReader train(w.path("train")), test(w.path("test"));

  // few-shot trend over 5 / 10 / 20 shots
  std::ostringstream fs_note;
  for (Modality m : {Modality::mesh, Modality::point, Modality::image}) {
    int views = m == Modality::image ? 4 : 1;
    FeatureTable train_t = extract_feature_table(train, model, m, views, ViewAggregate::max,
                                                 derive_seed(6001, modality_name(m)));
    FeatureTable test_t = extract_feature_table(test, model, m, views, ViewAggregate::max,
                                                derive_seed(6002, modality_name(m)));
    double prev = -1;
    fs_note << modality_name(m) << ":";
    for (int shots : {5, 10, 20}) {
      FewShotResult fs =
          few_shot_probe(train_t, test_t, shots, 10, derive_seed(6003, modality_name(m)));
      fs_note << " " << fs.mean_accuracy;
      check(fs.mean_accuracy >= prev,
            std::string("few-shot trend broken for ") + modality_name(m) + " at " +
                std::to_string(shots) + " shots");
      prev = fs.mean_accuracy;
    }
    fs_note << "  ";
  }

  // segmentation transfer ordering at 1% labels over three seeds
  if (!w.has("seg_train/manifest.jsonl")) {
    build_toy_segmentation_archive(w.path("seg_train"), 100, 256, 606);
    build_toy_segmentation_archive(w.path("seg_test"), 20, 256, 707);
  }
  auto seg_train = read_segmentation_archive(w.path("seg_train"));
  auto seg_test = read_segmentation_archive(w.path("seg_test"));

  std::map<SegMode, double> mean_miou;
  std::ostringstream seg_note;
  for (SegMode mode : {SegMode::frozen, SegMode::unfrozen, SegMode::scratch}) {
    double sum = 0;
    for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
      SegTransferConfig cfg;
      cfg.label_fraction = 0.01;
      cfg.mode = mode;
      cfg.seed = seed;
      sum += part_segmentation(model, seg_train, seg_test, cfg).instance_miou;
    }
    mean_miou[mode] = sum / 3.0;
  }
  seg_note << "instance mIoU unfrozen " << mean_miou[SegMode::unfrozen] << " frozen "
           << mean_miou[SegMode::frozen] << " scratch " << mean_miou[SegMode::scratch];
  check(mean_miou[SegMode::unfrozen] >= mean_miou[SegMode::frozen],
        "unfrozen fell below frozen: " + seg_note.str());
  check(mean_miou[SegMode::frozen] >= mean_miou[SegMode::scratch],
        "frozen fell below scratch: " + seg_note.str());

  o.detail = "few-shot " + fs_note.str() + "; " + seg_note.str();
  return o;
}

// ---------------------------------------------------------------------------
// criterion 7: reproducibility of the whole pipeline

Outcome criterion7() {
  Outcome o;
  Check check{o};
  Workspace& w = workspace();

  auto run_pipeline = [&](const std::string& tag) {
    std::string base = w.path("repro_" + tag);
    fs::create_directories(base);
    write_toy_manifest(base + "/train.jsonl", 6, 717, "rp");
    build_dataset(base + "/train.jsonl", base + "/data", toy_dataset_config(717));

    TrainConfig cfg = toy_train_config();
    cfg.iterations = 200;
    cfg.checkpoint_every = 100;
    cfg.lr_decay_interval = 100;
    ArchiveReader data(base + "/data");
    FitResult res = fit(data, cfg, base + "/run");

    TriModalModel model = load_model_checkpoint(res.final_checkpoint);
    RetrievalResult r =
        evaluate_retrieval(data, model, Modality::point, Modality::mesh, 1, 909, true);
    RetrievalIndex gallery =
        build_retrieval_index(data, model, Modality::mesh, 1, derive_seed(909, "gallery-side"));
    export_rankings_jsonl(base + "/rankings.jsonl", r, gallery);
    return base;
  };

  std::string a = run_pipeline("a");
  std::string b = run_pipeline("b");

  auto ra = read_jsonl(a + "/run/metrics.jsonl");
  auto rb = read_jsonl(b + "/run/metrics.jsonl");
  check(ra.size() == rb.size(), "metric row counts differ");
  double worst = 0;
  for (size_t i = 0; i < std::min(ra.size(), rb.size()); ++i)
    for (const char* key : {"L_MP", "L_MI", "L_PI", "L_II", "total", "lr"})
      worst = std::max(worst,
                       std::abs(ra[i][key].get<double>() - rb[i][key].get<double>()));
  check(worst <= 1e-6, "metric divergence " + std::to_string(worst));

  auto ka = read_jsonl(a + "/rankings.jsonl");
  auto kb = read_jsonl(b + "/rankings.jsonl");
  check(ka.size() == kb.size(), "ranking row counts differ");
  bool rankings_equal = true;
  for (size_t i = 0; i < std::min(ka.size(), kb.size()); ++i)
    if (ka[i]["query"] != kb[i]["query"] || ka[i]["gallery"] != kb[i]["gallery"])
      rankings_equal = false;
  check(rankings_equal, "retrieval rankings differ between runs");

  std::ostringstream os;
  os << "metric divergence " << worst << ", rankings identical over " << ka.size() << " queries";
  if (o.pass) o.detail = os.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  struct Entry {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> criteria = {
      {1, "loss oracle equivalence", criterion1},
      {2, "gradient correctness", criterion2},
      {3, "structural invariants", criterion3},
      {4, "data pipeline oracles", criterion4},
      {5, "toy end-to-end learning", criterion5},
      {6, "few-shot and segmentation directions", criterion6},
      {7, "pipeline reproducibility", criterion7},
  };

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Entry& entry : criteria) {
    if (!selected.empty() && !selected.count(entry.id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = entry.run();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %-38s %s (%.1f s)\n", entry.id, entry.name,
                outcome.pass ? "PASS" : "FAIL", secs);
    if (!outcome.detail.empty()) std::printf("             %s\n", outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  if (failures == 0)
    std::printf("acceptance: all criteria passed\n");
  else
    std::printf("acceptance: %d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
