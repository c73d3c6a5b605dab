// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "trimodal/tensor.hpp"

namespace trimodal::ag {

// Reverse-mode autodiff on a flat tape. A Graph owns all node values and
// gradients for one forward/backward episode; Vars are cheap handles into it.
//
// Ops treat tensors as 2-D row-major matrices unless noted. Gradients are
// allocated lazily, so inference-only graphs never pay for them.

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var leaf(Tensor value, bool requires_grad = false);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  Tensor& mutable_value(Var v) { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }

  // Gradient of the last backward() w.r.t. v; zeros if v was unreachable.
  const Tensor& grad(Var v);
  Tensor& grad_buffer(Var v);  // lazily allocated, zero-initialized

  void backward(Var scalar_loss);

  size_t size() const { return nodes_.size(); }

  // Internal: ops use this to append computed nodes. The closure receives
  // the emitted node as `self` so it can read its own output gradient.
  Var emit(Tensor value, std::vector<Var> parents, std::function<void(Graph&, Var)> backward);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Graph&, Var)> backward;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

// ---- elementwise / scalar ----
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var add_scalar(Graph& g, Var a, double s);
Var relu(Graph& g, Var a);
Var leaky_relu(Graph& g, Var a, double slope);
Var exp_of(Graph& g, Var a);
Var sin_of(Graph& g, Var a);
Var cos_of(Graph& g, Var a);

// ---- linear algebra ----
Var matmul(Graph& g, Var a, Var b);     // [m,k] x [k,n] -> [m,n]
Var matmul_nt(Graph& g, Var a, Var b);  // [m,k] x [n,k]^T -> [m,n]
Var add_rowvec(Graph& g, Var x, Var bias);  // bias length = cols(x)

// ---- shape / indexing (all on rows) ----
Var concat_cols(Graph& g, const std::vector<Var>& xs);
Var slice_rows(Graph& g, Var x, int64_t begin, int64_t end);
Var gather_rows(Graph& g, Var x, std::vector<int64_t> idx);

// Contiguous equal-size row groups; output has rows/group_size rows.
Var segment_max(Graph& g, Var x, int64_t group_size);
Var segment_mean(Graph& g, Var x, int64_t group_size);

// ---- reductions ----
Var sum_all(Graph& g, Var x);   // -> [1,1]
Var mean_all(Graph& g, Var x);  // -> [1,1]

// Rows scaled to unit L2 norm. Throws on a zero-norm row.
Var l2_normalize_rows(Graph& g, Var x);

// Per-row contrastive alignment term. Inputs are the anchor-anchor and
// anchor-positive similarity matrices (k x k, already temperature-scaled).
// Row i contributes logsumexp over {aa[i,j], j != i} u {ap[i,*]} minus
// ap[i,i]; the result is the mean over rows. Stable under large entries.
Var info_nce_rows(Graph& g, Var sim_aa, Var sim_ap);

// Mean softmax cross-entropy over rows of `logits` against integer labels.
Var softmax_cross_entropy(Graph& g, Var logits, std::vector<int32_t> labels);

}  // namespace trimodal::ag
