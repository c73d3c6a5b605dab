// SPDX-License-Identifier: Apache-2.0
#include "trimodal/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "trimodal/rng.hpp"

namespace trimodal {

namespace {

// Dual coordinate descent for min_w 1/2 w.w + C sum max(0, 1 - y_i w.x_i),
// bias handled through an appended constant feature.
std::vector<double> solve_binary(const Tensor& x, const std::vector<double>& y, double c,
                                 uint64_t seed, int max_epochs, double tol) {
  int64_t n = x.rows(), d = x.cols();
  std::vector<double> w(static_cast<size_t>(d) + 1, 0.0);
  std::vector<double> alpha(static_cast<size_t>(n), 0.0);
  std::vector<double> qii(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double q = 1.0;  // bias feature
    const double* xi = x.data() + i * d;
    for (int64_t f = 0; f < d; ++f) q += xi[f] * xi[f];
    qii[static_cast<size_t>(i)] = q;
  }

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "svm-order"));

  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double max_violation = 0.0;
    for (int64_t i : order) {
      const double* xi = x.data() + i * d;
      double margin = w[static_cast<size_t>(d)];
      for (int64_t f = 0; f < d; ++f) margin += w[static_cast<size_t>(f)] * xi[f];
      double yi = y[static_cast<size_t>(i)];
      double g = yi * margin - 1.0;

      double a = alpha[static_cast<size_t>(i)];
      double pg = g;
      if (a <= 0.0) pg = std::min(g, 0.0);
      else if (a >= c) pg = std::max(g, 0.0);
      if (pg == 0.0) continue;

      max_violation = std::max(max_violation, std::abs(pg));
      double a_new = std::clamp(a - g / qii[static_cast<size_t>(i)], 0.0, c);
      double delta = (a_new - a) * yi;
      alpha[static_cast<size_t>(i)] = a_new;
      for (int64_t f = 0; f < d; ++f) w[static_cast<size_t>(f)] += delta * xi[f];
      w[static_cast<size_t>(d)] += delta;
    }
    if (max_violation < tol) break;
  }
  return w;
}

}  // namespace

void LinearSvm::fit(const Tensor& features, const std::vector<int>& labels, int num_classes) {
  if (features.rank() != 2 || features.rows() != static_cast<int64_t>(labels.size()))
    throw std::invalid_argument("svm: one label per feature row required");
  if (num_classes < 2) throw std::invalid_argument("svm: need at least two classes");

  std::vector<int64_t> per_class(static_cast<size_t>(num_classes), 0);
  for (int l : labels) {
    if (l < 0 || l >= num_classes) throw std::invalid_argument("svm: label out of range");
    ++per_class[static_cast<size_t>(l)];
  }
  for (int cls = 0; cls < num_classes; ++cls)
    if (per_class[static_cast<size_t>(cls)] == 0)
      throw std::invalid_argument("svm: class " + std::to_string(cls) + " has no training examples");

  num_classes_ = num_classes;
  dim_ = features.cols();
  weights_.clear();
  for (int cls = 0; cls < num_classes; ++cls) {
    std::vector<double> y(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == cls ? 1.0 : -1.0;
    weights_.push_back(solve_binary(features, y, c_, derive_seed(seed_, "svm-class", cls),
                                    max_epochs_, tol_));
  }
}

int LinearSvm::predict(const double* x, int64_t d) const {
  if (d != dim_) throw std::invalid_argument("svm: feature dimension mismatch");
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int cls = 0; cls < num_classes_; ++cls) {
    const auto& w = weights_[static_cast<size_t>(cls)];
    double score = w[static_cast<size_t>(d)];
    for (int64_t f = 0; f < d; ++f) score += w[static_cast<size_t>(f)] * x[f];
    if (score > best_score) {
      best_score = score;
      best = cls;
    }
  }
  return best;
}

std::vector<int> LinearSvm::predict(const Tensor& features) const {
  std::vector<int> out(static_cast<size_t>(features.rows()));
  for (int64_t i = 0; i < features.rows(); ++i)
    out[static_cast<size_t>(i)] = predict(features.data() + i * features.cols(), features.cols());
  return out;
}

double LinearSvm::accuracy(const Tensor& features, const std::vector<int>& labels) const {
  auto preds = predict(features);
  int64_t hit = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

}  // namespace trimodal
