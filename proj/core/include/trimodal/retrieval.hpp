// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trimodal/archive.hpp"
#include "trimodal/encoders.hpp"

namespace trimodal {

// x / sum|x_d|; throws on the zero vector. Idempotent.
void l1_normalize(double* x, int64_t d);
Tensor l1_normalize(const Tensor& feature);

struct IndexEntry {
  std::string object_id;
  int class_label = -1;
};

// Gallery of L1-normalized universal-space features for one modality.
struct RetrievalIndex {
  Modality modality = Modality::point;
  std::vector<IndexEntry> entries;
  Tensor features;  // [n, D], each row L1-normalized

  void validate() const;  // checks the L1 invariant
};

struct RankedItem {
  int64_t gallery_pos;
  double distance;
  bool relevant;
};

struct RankedList {
  std::string query_id;
  std::vector<RankedItem> items;  // ascending distance, ties by gallery id
};

// Euclidean ranking of the gallery against one query feature.
RankedList rank_gallery(const double* query, int64_t dim, int query_label,
                        const std::string& query_id, const RetrievalIndex& index,
                        bool exclude_self);

// AP over an ordered relevance list: mean of precision@rank at each relevant
// rank. Throws when nothing is relevant.
double average_precision(const std::vector<bool>& relevance);

struct RetrievalResult {
  double map = 0.0;
  int64_t queries = 0;
  int64_t skipped = 0;  // queries with no relevant gallery entries
  std::vector<RankedList> rankings;
};

// Builds a gallery index from the archive. Image features average the
// backbone over `views` random stored views before projection.
RetrievalIndex build_retrieval_index(const ArchiveReader& data, const TriModalModel& model,
                                     Modality modality, int views, uint64_t seed);

// Every object queries once from `source` against the full `target` gallery;
// self-matches are excluded only in-domain. Relevance is shared class label.
RetrievalResult evaluate_retrieval(const ArchiveReader& data, const TriModalModel& model,
                                   Modality source, Modality target, int views, uint64_t seed,
                                   bool keep_rankings = false);

void save_retrieval_index(const std::string& dir, const RetrievalIndex& index);
RetrievalIndex load_retrieval_index(const std::string& dir);

// One JSON line per query: gallery ids in rank order with distances.
void export_rankings_jsonl(const std::string& path, const RetrievalResult& result,
                           const RetrievalIndex& gallery);

}  // namespace trimodal
