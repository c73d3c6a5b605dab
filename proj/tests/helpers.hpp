// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "trimodal/rng.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal::testing {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("trimodal_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::filesystem::path path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Central finite difference of a scalar function at one coordinate.
inline double central_difference(const std::function<double(const Tensor&)>& f, Tensor x,
                                 int64_t index, double h = 1e-5) {
  double keep = x[index];
  x[index] = keep + h;
  double up = f(x);
  x[index] = keep - h;
  double down = f(x);
  x[index] = keep;
  return (up - down) / (2.0 * h);
}

inline double rel_error(double a, double b) {
  double denom = std::max({1e-8, std::abs(a), std::abs(b)});
  return std::abs(a - b) / denom;
}

}  // namespace trimodal::testing
