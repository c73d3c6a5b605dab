// SPDX-License-Identifier: Apache-2.0
#include "trimodal/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "trimodal/eval.hpp"
#include "trimodal/rng.hpp"

namespace trimodal {

namespace fs = std::filesystem;
using json = nlohmann::json;

void l1_normalize(double* x, int64_t d) {
  double sum = 0.0;
  for (int64_t i = 0; i < d; ++i) sum += std::abs(x[i]);
  if (sum == 0.0) throw std::domain_error("l1_normalize: zero vector");
  for (int64_t i = 0; i < d; ++i) x[i] /= sum;
}

Tensor l1_normalize(const Tensor& feature) {
  Tensor out = feature;
  l1_normalize(out.data(), out.numel());
  return out;
}

void RetrievalIndex::validate() const {
  for (int64_t i = 0; i < features.rows(); ++i) {
    double sum = 0.0;
    for (int64_t c = 0; c < features.cols(); ++c) sum += std::abs(features.at(i, c));
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::runtime_error("retrieval index row " + std::to_string(i) +
                               " violates the L1 invariant");
  }
}

RankedList rank_gallery(const double* query, int64_t dim, int query_label,
                        const std::string& query_id, const RetrievalIndex& index,
                        bool exclude_self) {
  if (index.features.rows() == 0) throw std::invalid_argument("rank_gallery: empty index");
  if (index.features.cols() != dim)
    throw std::invalid_argument("rank_gallery: feature dimension mismatch");

  RankedList out;
  out.query_id = query_id;
  for (int64_t i = 0; i < index.features.rows(); ++i) {
    const IndexEntry& e = index.entries[static_cast<size_t>(i)];
    if (exclude_self && e.object_id == query_id) continue;
    double d = 0.0;
    const double* g = index.features.data() + i * dim;
    for (int64_t c = 0; c < dim; ++c) {
      double diff = query[c] - g[c];
      d += diff * diff;
    }
    out.items.push_back({i, std::sqrt(d), e.class_label == query_label});
  }
  std::stable_sort(out.items.begin(), out.items.end(),
                   [&](const RankedItem& a, const RankedItem& b) {
                     if (a.distance != b.distance) return a.distance < b.distance;
                     return index.entries[static_cast<size_t>(a.gallery_pos)].object_id <
                            index.entries[static_cast<size_t>(b.gallery_pos)].object_id;
                   });
  return out;
}

double average_precision(const std::vector<bool>& relevance) {
  int64_t relevant = std::count(relevance.begin(), relevance.end(), true);
  if (relevant == 0) throw std::invalid_argument("average_precision: no relevant items");
  double sum = 0.0;
  int64_t hits = 0;
  for (size_t r = 0; r < relevance.size(); ++r) {
    if (!relevance[r]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(relevant);
}

RetrievalIndex build_retrieval_index(const ArchiveReader& data, const TriModalModel& model,
                                     Modality modality, int views, uint64_t seed) {
  // backbone features (images: mean over views), projected, L1-normalized
  FeatureTable table =
      extract_feature_table(data, model, modality, views, ViewAggregate::mean, seed);
  Tensor projected = project_features(model, modality, table.features);

  RetrievalIndex index;
  index.modality = modality;
  index.features = Tensor({projected.rows(), projected.cols()});
  for (int64_t i = 0; i < projected.rows(); ++i) {
    IndexEntry e;
    e.object_id = table.rows[static_cast<size_t>(i)].object_id;
    e.class_label = table.rows[static_cast<size_t>(i)].class_label;
    index.entries.push_back(std::move(e));
    std::copy(projected.data() + i * projected.cols(),
              projected.data() + (i + 1) * projected.cols(),
              index.features.data() + i * projected.cols());
    l1_normalize(index.features.data() + i * projected.cols(), projected.cols());
  }
  return index;
}

RetrievalResult evaluate_retrieval(const ArchiveReader& data, const TriModalModel& model,
                                   Modality source, Modality target, int views, uint64_t seed,
                                   bool keep_rankings) {
  RetrievalIndex query_index =
      build_retrieval_index(data, model, source, views, derive_seed(seed, "query-side"));
  RetrievalIndex gallery =
      source == target ? query_index
                       : build_retrieval_index(data, model, target, views,
                                               derive_seed(seed, "gallery-side"));
  bool exclude_self = source == target;

  RetrievalResult result;
  double ap_sum = 0.0;
  int64_t dim = gallery.features.cols();
  for (int64_t q = 0; q < query_index.features.rows(); ++q) {
    const IndexEntry& qe = query_index.entries[static_cast<size_t>(q)];
    RankedList ranked = rank_gallery(query_index.features.data() + q * dim, dim,
                                     qe.class_label, qe.object_id, gallery, exclude_self);
    std::vector<bool> rel;
    rel.reserve(ranked.items.size());
    for (const RankedItem& it : ranked.items) rel.push_back(it.relevant);
    if (std::count(rel.begin(), rel.end(), true) == 0) {
      ++result.skipped;
      continue;
    }
    ap_sum += average_precision(rel);
    ++result.queries;
    if (keep_rankings) result.rankings.push_back(std::move(ranked));
  }
  if (result.queries == 0) throw std::runtime_error("retrieval: every query was skipped");
  result.map = ap_sum / static_cast<double>(result.queries);
  return result;
}

void save_retrieval_index(const std::string& dir, const RetrievalIndex& index) {
  fs::create_directories(dir);
  write_blob((fs::path(dir) / "features.bin").string(), index.features, Dtype::f64);
  std::ofstream f((fs::path(dir) / "entries.jsonl").string(), std::ios::trunc);
  f << json{{"modality", modality_name(index.modality)}}.dump() << "\n";
  for (const IndexEntry& e : index.entries)
    f << json{{"id", e.object_id}, {"label", e.class_label}}.dump() << "\n";
}

RetrievalIndex load_retrieval_index(const std::string& dir) {
  std::ifstream f((fs::path(dir) / "entries.jsonl").string());
  if (!f) throw std::runtime_error("cannot open retrieval index in " + dir);
  RetrievalIndex index;
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("retrieval index header missing");
  index.modality = modality_from_name(json::parse(line).at("modality").get<std::string>());
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    index.entries.push_back({rec.at("id").get<std::string>(), rec.at("label").get<int>()});
  }
  index.features = read_blob((fs::path(dir) / "features.bin").string());
  index.validate();
  return index;
}

void export_rankings_jsonl(const std::string& path, const RetrievalResult& result,
                           const RetrievalIndex& gallery) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write rankings to " + path);
  for (const RankedList& r : result.rankings) {
    json rec;
    rec["query"] = r.query_id;
    json ids = json::array(), dists = json::array(), rel = json::array();
    for (const RankedItem& it : r.items) {
      ids.push_back(gallery.entries[static_cast<size_t>(it.gallery_pos)].object_id);
      dists.push_back(it.distance);
      rel.push_back(it.relevant);
    }
    rec["gallery"] = ids;
    rec["distances"] = dists;
    rec["relevant"] = rel;
    f << rec.dump() << "\n";
  }
}

}  // namespace trimodal
