// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "trimodal/autodiff.hpp"
#include "trimodal/rng.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal::nn {

// Named reference to a module tensor. Trainable params receive gradients and
// optimizer updates; buffers (batch-norm running stats) are serialized but
// never updated by the optimizer.
struct ParamRef {
  std::string name;
  Tensor* value;
  bool trainable;
};

using ParamList = std::vector<ParamRef>;

// One forward (+ optional backward) episode. Parameters are turned into
// graph leaves at most once per session so gradient accumulation and the
// optimizer see a single node per tensor.
struct Session {
  ag::Graph graph;
  bool training = false;

  explicit Session(bool grad_enabled = true, bool training_mode = false)
      : graph(grad_enabled), training(training_mode) {}

  ag::Var use(Tensor& param) {
    auto it = leaves_.find(&param);
    if (it != leaves_.end()) return it->second;
    ag::Var v = graph.leaf(param, /*requires_grad=*/true);
    leaves_.emplace(&param, v);
    return v;
  }

  ag::Var constant(Tensor value) { return graph.leaf(std::move(value), false); }

  // Leaf lookup after forward; invalid Var if the tensor was never used.
  ag::Var leaf_of(const Tensor& param) const {
    auto it = leaves_.find(const_cast<Tensor*>(&param));
    return it == leaves_.end() ? ag::Var{} : it->second;
  }

 private:
  std::unordered_map<const Tensor*, ag::Var> leaves_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(int64_t in, int64_t out) : weight({in, out}), bias({out}) {}

  void init(Rng& rng);
  ag::Var forward(Session& s, ag::Var x) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Normalizes each column over all rows (points/faces/pixels flattened into
// rows). Running statistics follow the usual EMA convention.
struct BatchNorm {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm() = default;
  explicit BatchNorm(int64_t channels)
      : gamma(Tensor::full({channels}, 1.0)),
        beta({channels}),
        running_mean({channels}),
        running_var(Tensor::full({channels}, 1.0)) {}

  ag::Var forward(Session& s, ag::Var x);
  void collect(const std::string& prefix, ParamList& out);
};

// 2-D feature maps are stored as rank-2 tensors with rows = B*H*W (NHWC
// flattened) and cols = channels; the spatial extent travels alongside.
struct Conv2d {
  int64_t in_c = 0, out_c = 0, ksize = 0, stride = 1, pad = 0;
  Tensor weight;  // [ksize*ksize*in_c, out_c]
  Tensor bias;    // [out_c]

  Conv2d() = default;
  Conv2d(int64_t in, int64_t out, int64_t k, int64_t s, int64_t p)
      : in_c(in), out_c(out), ksize(k), stride(s), pad(p),
        weight({k * k * in, out}), bias({out}) {}

  void init(Rng& rng);
  // Returns features for the output extent; out_h/out_w are written back.
  ag::Var forward(Session& s, ag::Var x, int64_t batch, int64_t h, int64_t w,
                  int64_t& out_h, int64_t& out_w) const;
  void collect(const std::string& prefix, ParamList& out);
};

int64_t conv_out_extent(int64_t in, int64_t ksize, int64_t stride, int64_t pad);

ag::Var max_pool2d(Session& s, ag::Var x, int64_t batch, int64_t h, int64_t w,
                   int64_t ksize, int64_t stride, int64_t pad,
                   int64_t& out_h, int64_t& out_w);

// Global average pool over each image's H*W rows.
ag::Var global_avg_pool(Session& s, ag::Var x, int64_t h, int64_t w);

void kaiming_uniform(Tensor& w, int64_t fan_in, Rng& rng);

}  // namespace trimodal::nn
