// SPDX-License-Identifier: Apache-2.0
#include "trimodal/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace trimodal::ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

namespace {

ConstMatMap as_mat(const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("op expects a rank-2 tensor");
  return ConstMatMap(t.data(), t.rows(), t.cols());
}

MatMap as_mat(Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("op expects a rank-2 tensor");
  return MatMap(t.data(), t.rows(), t.cols());
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::emit(Tensor value, std::vector<Var> parents,
                std::function<void(Graph&, Var)> backward) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (Var p : parents)
      if (nodes_[p.id].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.numel() != n.value.numel()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

const Tensor& Graph::grad(Var v) { return grad_buffer(v); }

void Graph::backward(Var scalar_loss) {
  if (!grad_enabled_) throw std::logic_error("backward on a no-grad graph");
  Node& loss = nodes_[scalar_loss.id];
  if (loss.value.numel() != 1) throw std::invalid_argument("backward expects a scalar loss");
  grad_buffer(scalar_loss)[0] = 1.0;
  for (int id = scalar_loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward) continue;
    if (n.grad.numel() == 0) continue;  // not reached from the loss
    n.backward(*this, Var{id});
  }
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

// grad(parent) += weight_fn(i) * grad(self), for elementwise ops
template <typename WeightFn>
std::function<void(Graph&, Var)> elementwise_backward(Var parent, WeightFn w) {
  return [parent, w](Graph& g, Var self) {
    if (!g.requires_grad(parent)) return;
    const Tensor& go = g.grad_buffer(self);
    Tensor& gp = g.grad_buffer(parent);
    for (int64_t i = 0; i < go.numel(); ++i) gp[i] += w(i) * go[i];
  };
}

}  // namespace

Var add(Graph& g, Var a, Var b) {
  check_same_shape(g.value(a), g.value(b), "add");
  Tensor out = g.value(a);
  const Tensor& bv = g.value(b);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  return g.emit(std::move(out), {a, b}, [a, b](Graph& gg, Var self) {
    const Tensor& go = gg.grad_buffer(self);
    for (Var p : {a, b}) {
      if (!gg.requires_grad(p)) continue;
      Tensor& gp = gg.grad_buffer(p);
      for (int64_t i = 0; i < go.numel(); ++i) gp[i] += go[i];
    }
  });
}

Var sub(Graph& g, Var a, Var b) {
  check_same_shape(g.value(a), g.value(b), "sub");
  Tensor out = g.value(a);
  const Tensor& bv = g.value(b);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  return g.emit(std::move(out), {a, b}, [a, b](Graph& gg, Var self) {
    const Tensor& go = gg.grad_buffer(self);
    if (gg.requires_grad(a)) {
      Tensor& ga = gg.grad_buffer(a);
      for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
    }
    if (gg.requires_grad(b)) {
      Tensor& gb = gg.grad_buffer(b);
      for (int64_t i = 0; i < go.numel(); ++i) gb[i] -= go[i];
    }
  });
}

Var mul(Graph& g, Var a, Var b) {
  check_same_shape(g.value(a), g.value(b), "mul");
  Tensor out = g.value(a);
  const Tensor& bv = g.value(b);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return g.emit(std::move(out), {a, b}, [a, b](Graph& gg, Var self) {
    const Tensor& go = gg.grad_buffer(self);
    const Tensor& av = gg.value(a);
    const Tensor& bv2 = gg.value(b);
    if (gg.requires_grad(a)) {
      Tensor& ga = gg.grad_buffer(a);
      for (int64_t i = 0; i < go.numel(); ++i) ga[i] += bv2[i] * go[i];
    }
    if (gg.requires_grad(b)) {
      Tensor& gb = gg.grad_buffer(b);
      for (int64_t i = 0; i < go.numel(); ++i) gb[i] += av[i] * go[i];
    }
  });
}

Var scale(Graph& g, Var a, double s) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return g.emit(std::move(out), {a}, elementwise_backward(a, [s](int64_t) { return s; }));
}

Var add_scalar(Graph& g, Var a, double s) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
  return g.emit(std::move(out), {a}, elementwise_backward(a, [](int64_t) { return 1.0; }));
}

Var relu(Graph& g, Var a) {
  Tensor out = g.value(a);
  // keep NaN transparent so a poisoned parameter surfaces in the loss
  for (int64_t i = 0; i < out.numel(); ++i)
    if (out[i] < 0.0) out[i] = 0.0;
  return g.emit(std::move(out), {a}, [a](Graph& gg, Var self) {
    if (!gg.requires_grad(a)) return;
    const Tensor& go = gg.grad_buffer(self);
    const Tensor& av = gg.value(a);
    Tensor& ga = gg.grad_buffer(a);
    for (int64_t i = 0; i < go.numel(); ++i)
      if (av[i] > 0.0) ga[i] += go[i];
  });
}

Var leaky_relu(Graph& g, Var a, double slope) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i)
    if (out[i] < 0.0) out[i] *= slope;
  return g.emit(std::move(out), {a}, [a, slope](Graph& gg, Var self) {
    if (!gg.requires_grad(a)) return;
    const Tensor& go = gg.grad_buffer(self);
    const Tensor& av = gg.value(a);
    Tensor& ga = gg.grad_buffer(a);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += (av[i] > 0.0 ? 1.0 : slope) * go[i];
  });
}

Var exp_of(Graph& g, Var a) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  return g.emit(std::move(out), {a}, [a](Graph& gg, Var self) {
    if (!gg.requires_grad(a)) return;
    const Tensor& go = gg.grad_buffer(self);
    const Tensor& ov = gg.value(self);
    Tensor& ga = gg.grad_buffer(a);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += ov[i] * go[i];
  });
}

Var sin_of(Graph& g, Var a) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::sin(out[i]);
  return g.emit(std::move(out), {a}, [a](Graph& gg, Var self) {
    if (!gg.requires_grad(a)) return;
    const Tensor& go = gg.grad_buffer(self);
    const Tensor& av = gg.value(a);
    Tensor& ga = gg.grad_buffer(a);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += std::cos(av[i]) * go[i];
  });
}

Var cos_of(Graph& g, Var a) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::cos(out[i]);
  return g.emit(std::move(out), {a}, [a](Graph& gg, Var self) {
    if (!gg.requires_grad(a)) return;
    const Tensor& go = gg.grad_buffer(self);
    const Tensor& av = gg.value(a);
    Tensor& ga = gg.grad_buffer(a);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] -= std::sin(av[i]) * go[i];
  });
}

// ---------------------------------------------------------------------------
// linear algebra

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    throw std::invalid_argument("matmul: incompatible shapes");
  Tensor out({av.rows(), bv.cols()});
  as_mat(out) = as_mat(av) * as_mat(bv);
  return g.emit(std::move(out), {a, b}, [a, b](Graph& gg, Var self) {
    const Tensor& go = gg.grad_buffer(self);
    if (gg.requires_grad(a)) {
      Tensor& ga = gg.grad_buffer(a);
      as_mat(ga) += as_mat(go) * as_mat(gg.value(b)).transpose();
    }
    if (gg.requires_grad(b)) {
      Tensor& gb = gg.grad_buffer(b);
      as_mat(gb) += as_mat(gg.value(a)).transpose() * as_mat(go);
    }
  });
}

Var matmul_nt(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols())
    throw std::invalid_argument("matmul_nt: incompatible shapes");
  Tensor out({av.rows(), bv.rows()});
  as_mat(out) = as_mat(av) * as_mat(bv).transpose();
  return g.emit(std::move(out), {a, b}, [a, b](Graph& gg, Var self) {
    const Tensor& go = gg.grad_buffer(self);
    if (gg.requires_grad(a)) {
      Tensor& ga = gg.grad_buffer(a);
      as_mat(ga) += as_mat(go) * as_mat(gg.value(b));
    }
    if (gg.requires_grad(b)) {
      Tensor& gb = gg.grad_buffer(b);
      as_mat(gb) += as_mat(go).transpose() * as_mat(gg.value(a));
    }
  });
}

Var add_rowvec(Graph& g, Var x, Var bias) {
  const Tensor& xv = g.value(x);
  const Tensor& bv = g.value(bias);
  if (xv.rank() != 2 || bv.numel() != xv.cols())
    throw std::invalid_argument("add_rowvec: bias length must equal cols");
  Tensor out = xv;
  for (int64_t r = 0; r < xv.rows(); ++r)
    for (int64_t c = 0; c < xv.cols(); ++c) out.at(r, c) += bv[c];
  return g.emit(std::move(out), {x, bias}, [x, bias](Graph& gg, Var self) {
    const Tensor& go = gg.grad_buffer(self);
    if (gg.requires_grad(x)) {
      Tensor& gx = gg.grad_buffer(x);
      for (int64_t i = 0; i < go.numel(); ++i) gx[i] += go[i];
    }
    if (gg.requires_grad(bias)) {
      Tensor& gb = gg.grad_buffer(bias);
      int64_t cols = go.cols();
      for (int64_t r = 0; r < go.rows(); ++r)
        for (int64_t c = 0; c < cols; ++c) gb[c] += go.at(r, c);
    }
  });
}

// ---------------------------------------------------------------------------
// shape / indexing

Var concat_cols(Graph& g, const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
  int64_t rows = g.value(xs[0]).rows();
  int64_t cols = 0;
  for (Var v : xs) {
    if (g.value(v).rank() != 2 || g.value(v).rows() != rows)
      throw std::invalid_argument("concat_cols: row count mismatch");
    cols += g.value(v).cols();
  }
  Tensor out({rows, cols});
  int64_t off = 0;
  for (Var v : xs) {
    const Tensor& t = g.value(v);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < t.cols(); ++c) out.at(r, off + c) = t.at(r, c);
    off += t.cols();
  }
  std::vector<Var> parents = xs;
  return g.emit(std::move(out), parents, [parents](Graph& gg, Var self) {
    const Tensor& go = gg.grad_buffer(self);
    int64_t off = 0;
    for (Var v : parents) {
      const Tensor& t = gg.value(v);
      if (gg.requires_grad(v)) {
        Tensor& gv = gg.grad_buffer(v);
        for (int64_t r = 0; r < go.rows(); ++r)
          for (int64_t c = 0; c < t.cols(); ++c) gv.at(r, c) += go.at(r, off + c);
      }
      off += t.cols();
    }
  });
}

Var slice_rows(Graph& g, Var x, int64_t begin, int64_t end) {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2 || begin < 0 || end > xv.rows() || begin > end)
    throw std::invalid_argument("slice_rows: bad range");
  Tensor out({end - begin, xv.cols()});
  std::copy(xv.data() + begin * xv.cols(), xv.data() + end * xv.cols(), out.data());
  return g.emit(std::move(out), {x}, [x, begin](Graph& gg, Var self) {
    if (!gg.requires_grad(x)) return;
    const Tensor& go = gg.grad_buffer(self);
    Tensor& gx = gg.grad_buffer(x);
    int64_t cols = go.cols();
    for (int64_t r = 0; r < go.rows(); ++r)
      for (int64_t c = 0; c < cols; ++c) gx.at(begin + r, c) += go.at(r, c);
  });
}

Var gather_rows(Graph& g, Var x, std::vector<int64_t> idx) {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2) throw std::invalid_argument("gather_rows: rank-2 input required");
  for (int64_t i : idx)
    if (i < 0 || i >= xv.rows()) throw std::out_of_range("gather_rows: index out of range");
  Tensor out({static_cast<int64_t>(idx.size()), xv.cols()});
  int64_t cols = xv.cols();
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy(xv.data() + idx[r] * cols, xv.data() + (idx[r] + 1) * cols,
              out.data() + static_cast<int64_t>(r) * cols);
  auto shared = std::make_shared<std::vector<int64_t>>(std::move(idx));
  return g.emit(std::move(out), {x}, [x, shared](Graph& gg, Var self) {
    if (!gg.requires_grad(x)) return;
    const Tensor& go = gg.grad_buffer(self);
    Tensor& gx = gg.grad_buffer(x);
    int64_t cols = go.cols();
    for (size_t r = 0; r < shared->size(); ++r) {
      const double* src = go.data() + static_cast<int64_t>(r) * cols;
      double* dst = gx.data() + (*shared)[r] * cols;
      for (int64_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  });
}

Var segment_max(Graph& g, Var x, int64_t group_size) {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2 || group_size <= 0 || xv.rows() % group_size != 0)
    throw std::invalid_argument("segment_max: rows must split into equal groups");
  int64_t groups = xv.rows() / group_size;
  int64_t cols = xv.cols();
  Tensor out({groups, cols});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(groups * cols));
  for (int64_t s = 0; s < groups; ++s) {
    for (int64_t c = 0; c < cols; ++c) {
      int64_t best = s * group_size;
      double bv = xv.at(best, c);
      for (int64_t r = 1; r < group_size; ++r) {
        double v = xv.at(s * group_size + r, c);
        if (v > bv || std::isnan(v)) {
          bv = v;
          best = s * group_size + r;
          if (std::isnan(v)) break;
        }
      }
      out.at(s, c) = bv;
      (*argmax)[static_cast<size_t>(s * cols + c)] = best;
    }
  }
  return g.emit(std::move(out), {x}, [x, argmax, cols](Graph& gg, Var self) {
    if (!gg.requires_grad(x)) return;
    const Tensor& go = gg.grad_buffer(self);
    Tensor& gx = gg.grad_buffer(x);
    for (int64_t s = 0; s < go.rows(); ++s)
      for (int64_t c = 0; c < cols; ++c)
        gx.at((*argmax)[static_cast<size_t>(s * cols + c)], c) += go.at(s, c);
  });
}

Var segment_mean(Graph& g, Var x, int64_t group_size) {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2 || group_size <= 0 || xv.rows() % group_size != 0)
    throw std::invalid_argument("segment_mean: rows must split into equal groups");
  int64_t groups = xv.rows() / group_size;
  int64_t cols = xv.cols();
  Tensor out({groups, cols});
  for (int64_t s = 0; s < groups; ++s)
    for (int64_t r = 0; r < group_size; ++r)
      for (int64_t c = 0; c < cols; ++c) out.at(s, c) += xv.at(s * group_size + r, c);
  double inv = 1.0 / static_cast<double>(group_size);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= inv;
  return g.emit(std::move(out), {x}, [x, group_size, inv](Graph& gg, Var self) {
    if (!gg.requires_grad(x)) return;
    const Tensor& go = gg.grad_buffer(self);
    Tensor& gx = gg.grad_buffer(x);
    int64_t cols = go.cols();
    for (int64_t s = 0; s < go.rows(); ++s)
      for (int64_t r = 0; r < group_size; ++r)
        for (int64_t c = 0; c < cols; ++c) gx.at(s * group_size + r, c) += inv * go.at(s, c);
  });
}

// ---------------------------------------------------------------------------
// reductions

Var sum_all(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  double s = 0.0;
  for (int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
  Tensor out({1, 1});
  out[0] = s;
  return g.emit(std::move(out), {x}, [x](Graph& gg, Var self) {
    if (!gg.requires_grad(x)) return;
    double go = gg.grad_buffer(self)[0];
    Tensor& gx = gg.grad_buffer(x);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += go;
  });
}

Var mean_all(Graph& g, Var x) {
  int64_t n = g.value(x).numel();
  if (n == 0) throw std::invalid_argument("mean_all: empty tensor");
  return scale(g, sum_all(g, x), 1.0 / static_cast<double>(n));
}

Var l2_normalize_rows(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2) throw std::invalid_argument("l2_normalize_rows: rank-2 input required");
  int64_t rows = xv.rows(), cols = xv.cols();
  Tensor out({rows, cols});
  auto inv_norm = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (int64_t c = 0; c < cols; ++c) sq += xv.at(r, c) * xv.at(r, c);
    double norm = std::sqrt(sq);
    if (norm == 0.0) throw std::domain_error("l2_normalize_rows: zero-norm row");
    (*inv_norm)[static_cast<size_t>(r)] = 1.0 / norm;
    for (int64_t c = 0; c < cols; ++c) out.at(r, c) = xv.at(r, c) / norm;
  }
  return g.emit(std::move(out), {x}, [x, inv_norm](Graph& gg, Var self) {
    if (!gg.requires_grad(x)) return;
    const Tensor& go = gg.grad_buffer(self);
    const Tensor& y = gg.value(self);
    Tensor& gx = gg.grad_buffer(x);
    int64_t cols = go.cols();
    for (int64_t r = 0; r < go.rows(); ++r) {
      double dot = 0.0;
      for (int64_t c = 0; c < cols; ++c) dot += go.at(r, c) * y.at(r, c);
      double inv = (*inv_norm)[static_cast<size_t>(r)];
      for (int64_t c = 0; c < cols; ++c)
        gx.at(r, c) += inv * (go.at(r, c) - dot * y.at(r, c));
    }
  });
}

Var info_nce_rows(Graph& g, Var sim_aa, Var sim_ap) {
  const Tensor& aa = g.value(sim_aa);
  const Tensor& ap = g.value(sim_ap);
  if (aa.rank() != 2 || aa.rows() != aa.cols() || !aa.same_shape(ap))
    throw std::invalid_argument("info_nce_rows: expects square k x k inputs of equal shape");
  int64_t k = aa.rows();

  // Denominator softmax weights are kept for the backward pass. Column
  // layout per row: [aa entries (diag masked), ap entries].
  auto w_aa = std::make_shared<Tensor>(Tensor({k, k}));
  auto w_ap = std::make_shared<Tensor>(Tensor({k, k}));
  double loss = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < k; ++j) {
      if (j != i) m = std::max(m, aa.at(i, j));
      m = std::max(m, ap.at(i, j));
    }
    double z = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      if (j != i) z += std::exp(aa.at(i, j) - m);
      z += std::exp(ap.at(i, j) - m);
    }
    double lse = m + std::log(z);
    loss += lse - ap.at(i, i);
    for (int64_t j = 0; j < k; ++j) {
      w_aa->at(i, j) = (j == i) ? 0.0 : std::exp(aa.at(i, j) - m) / z;
      w_ap->at(i, j) = std::exp(ap.at(i, j) - m) / z;
    }
  }
  Tensor out({1, 1});
  out[0] = loss / static_cast<double>(k);
  return g.emit(std::move(out), {sim_aa, sim_ap},
                [sim_aa, sim_ap, w_aa, w_ap, k](Graph& gg, Var self) {
    double go = gg.grad_buffer(self)[0] / static_cast<double>(k);
    if (gg.requires_grad(sim_aa)) {
      Tensor& ga = gg.grad_buffer(sim_aa);
      for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j) ga.at(i, j) += go * w_aa->at(i, j);
    }
    if (gg.requires_grad(sim_ap)) {
      Tensor& gp = gg.grad_buffer(sim_ap);
      for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j)
          gp.at(i, j) += go * (w_ap->at(i, j) - (i == j ? 1.0 : 0.0));
    }
  });
}

Var softmax_cross_entropy(Graph& g, Var logits, std::vector<int32_t> labels) {
  const Tensor& lv = g.value(logits);
  if (lv.rank() != 2 || lv.rows() != static_cast<int64_t>(labels.size()))
    throw std::invalid_argument("softmax_cross_entropy: one label per row required");
  int64_t rows = lv.rows(), cols = lv.cols();
  auto probs = std::make_shared<Tensor>(Tensor({rows, cols}));
  double loss = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    int32_t y = labels[static_cast<size_t>(r)];
    if (y < 0 || y >= cols) throw std::out_of_range("softmax_cross_entropy: label out of range");
    double m = lv.at(r, 0);
    for (int64_t c = 1; c < cols; ++c) m = std::max(m, lv.at(r, c));
    double z = 0.0;
    for (int64_t c = 0; c < cols; ++c) z += std::exp(lv.at(r, c) - m);
    for (int64_t c = 0; c < cols; ++c) probs->at(r, c) = std::exp(lv.at(r, c) - m) / z;
    loss += (m + std::log(z)) - lv.at(r, y);
  }
  Tensor out({1, 1});
  out[0] = loss / static_cast<double>(rows);
  auto shared_labels = std::make_shared<std::vector<int32_t>>(std::move(labels));
  return g.emit(std::move(out), {logits},
                [logits, probs, shared_labels, rows, cols](Graph& gg, Var self) {
    if (!gg.requires_grad(logits)) return;
    double go = gg.grad_buffer(self)[0] / static_cast<double>(rows);
    Tensor& gl = gg.grad_buffer(logits);
    for (int64_t r = 0; r < rows; ++r) {
      int32_t y = (*shared_labels)[static_cast<size_t>(r)];
      for (int64_t c = 0; c < cols; ++c)
        gl.at(r, c) += go * (probs->at(r, c) - (c == y ? 1.0 : 0.0));
    }
  });
}

}  // namespace trimodal::ag
