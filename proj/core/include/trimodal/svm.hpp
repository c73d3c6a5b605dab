// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "trimodal/tensor.hpp"

namespace trimodal {

// Linear one-vs-rest SVM with L1 hinge loss, solved by dual coordinate
// descent. The bias rides along as an augmented constant feature. Training
// is deterministic for a fixed seed.
class LinearSvm {
 public:
  explicit LinearSvm(double c = 1.0, uint64_t seed = 0, int max_epochs = 1000,
                     double tol = 1e-6)
      : c_(c), seed_(seed), max_epochs_(max_epochs), tol_(tol) {}

  // features: [n, d]; labels in [0, num_classes)
  void fit(const Tensor& features, const std::vector<int>& labels, int num_classes);

  int predict(const double* x, int64_t d) const;
  std::vector<int> predict(const Tensor& features) const;
  double accuracy(const Tensor& features, const std::vector<int>& labels) const;

  int num_classes() const { return num_classes_; }

 private:
  double c_;
  uint64_t seed_;
  int max_epochs_;
  double tol_;
  int num_classes_ = 0;
  int64_t dim_ = 0;
  std::vector<std::vector<double>> weights_;  // per class, length dim+1 (bias last)
};

}  // namespace trimodal
