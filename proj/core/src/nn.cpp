// SPDX-License-Identifier: Apache-2.0
#include "trimodal/nn.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace trimodal::nn {

using ag::Var;

void kaiming_uniform(Tensor& w, int64_t fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(std::max<int64_t>(fan_in, 1)));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
}

void Linear::init(Rng& rng) {
  kaiming_uniform(weight, weight.rows(), rng);
  double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(weight.rows(), 1)));
  for (int64_t i = 0; i < bias.numel(); ++i) bias[i] = rng.uniform(-bound, bound);
}

Var Linear::forward(Session& s, Var x) const {
  auto& self = const_cast<Linear&>(*this);
  Var w = s.use(self.weight);
  Var b = s.use(self.bias);
  return ag::add_rowvec(s.graph, ag::matmul(s.graph, x, w), b);
}

void Linear::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &weight, true});
  out.push_back({prefix + ".bias", &bias, true});
}

Var BatchNorm::forward(Session& s, Var x) {
  const Tensor& xv = s.graph.value(x);
  if (xv.rank() != 2 || xv.cols() != gamma.numel())
    throw std::invalid_argument("batchnorm: channel mismatch");
  int64_t rows = xv.rows(), cols = xv.cols();

  auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(cols), 0.0);
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(cols), 0.0);

  if (s.training) {
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) (*mean)[c] += xv.at(r, c);
    for (int64_t c = 0; c < cols; ++c) (*mean)[c] /= static_cast<double>(rows);
    std::vector<double> var(static_cast<size_t>(cols), 0.0);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        double d = xv.at(r, c) - (*mean)[c];
        var[c] += d * d;
      }
    for (int64_t c = 0; c < cols; ++c) var[c] /= static_cast<double>(rows);
    for (int64_t c = 0; c < cols; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + eps);
    // unbiased variance feeds the running estimate
    double unbias = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
    for (int64_t c = 0; c < cols; ++c) {
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * (*mean)[c];
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c] * unbias;
    }
  } else {
    for (int64_t c = 0; c < cols; ++c) {
      (*mean)[c] = running_mean[c];
      (*inv_std)[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }

  auto xhat = std::make_shared<Tensor>(Tensor({rows, cols}));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      xhat->at(r, c) = (xv.at(r, c) - (*mean)[c]) * (*inv_std)[c];

  Tensor out({rows, cols});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out.at(r, c) = gamma[c] * xhat->at(r, c) + beta[c];

  Var vg = s.use(gamma);
  Var vb = s.use(beta);
  bool training = s.training;
  return s.graph.emit(std::move(out), {x, vg, vb},
                      [x, vg, vb, xhat, inv_std, training, rows, cols](ag::Graph& g, Var self) {
    const Tensor& go = g.grad_buffer(self);
    const Tensor& gamma_v = g.value(vg);
    if (g.requires_grad(vg)) {
      Tensor& gg = g.grad_buffer(vg);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) gg[c] += go.at(r, c) * xhat->at(r, c);
    }
    if (g.requires_grad(vb)) {
      Tensor& gb = g.grad_buffer(vb);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) gb[c] += go.at(r, c);
    }
    if (!g.requires_grad(x)) return;
    Tensor& gx = g.grad_buffer(x);
    if (!training) {
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c)
          gx.at(r, c) += go.at(r, c) * gamma_v[c] * (*inv_std)[c];
      return;
    }
    // train mode: gradients flow through the batch statistics
    std::vector<double> sum_g(static_cast<size_t>(cols), 0.0);
    std::vector<double> sum_gx(static_cast<size_t>(cols), 0.0);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        double gy = go.at(r, c) * gamma_v[c];
        sum_g[c] += gy;
        sum_gx[c] += gy * xhat->at(r, c);
      }
    double n = static_cast<double>(rows);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        double gy = go.at(r, c) * gamma_v[c];
        gx.at(r, c) +=
            (*inv_std)[c] * (gy - sum_g[c] / n - xhat->at(r, c) * sum_gx[c] / n);
      }
  });
}

void BatchNorm::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".gamma", &gamma, true});
  out.push_back({prefix + ".beta", &beta, true});
  out.push_back({prefix + ".running_mean", &running_mean, false});
  out.push_back({prefix + ".running_var", &running_var, false});
}

int64_t conv_out_extent(int64_t in, int64_t ksize, int64_t stride, int64_t pad) {
  return (in + 2 * pad - ksize) / stride + 1;
}

void Conv2d::init(Rng& rng) {
  kaiming_uniform(weight, ksize * ksize * in_c, rng);
  double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(ksize * ksize * in_c, 1)));
  for (int64_t i = 0; i < bias.numel(); ++i) bias[i] = rng.uniform(-bound, bound);
}

Var Conv2d::forward(Session& s, Var x, int64_t batch, int64_t h, int64_t w,
                    int64_t& out_h, int64_t& out_w) const {
  const Tensor& xv = s.graph.value(x);
  if (xv.rank() != 2 || xv.rows() != batch * h * w || xv.cols() != in_c)
    throw std::invalid_argument("conv2d: input extent mismatch");
  out_h = conv_out_extent(h, ksize, stride, pad);
  out_w = conv_out_extent(w, ksize, stride, pad);
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("conv2d: empty output extent");

  int64_t out_rows = batch * out_h * out_w;
  int64_t patch = ksize * ksize;

  // source row per (output row, kernel tap); -1 marks zero padding
  auto taps = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out_rows * patch));
  {
    size_t t = 0;
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t oy = 0; oy < out_h; ++oy)
        for (int64_t ox = 0; ox < out_w; ++ox)
          for (int64_t ky = 0; ky < ksize; ++ky)
            for (int64_t kx = 0; kx < ksize; ++kx) {
              int64_t iy = oy * stride - pad + ky;
              int64_t ix = ox * stride - pad + kx;
              (*taps)[t++] = (iy < 0 || iy >= h || ix < 0 || ix >= w)
                                 ? -1
                                 : (b * h + iy) * w + ix;
            }
  }

  Tensor cols({out_rows, patch * in_c});
  for (int64_t r = 0; r < out_rows; ++r) {
    double* dst = cols.data() + r * patch * in_c;
    for (int64_t p = 0; p < patch; ++p) {
      int64_t src = (*taps)[static_cast<size_t>(r * patch + p)];
      if (src < 0) {
        for (int64_t c = 0; c < in_c; ++c) dst[p * in_c + c] = 0.0;
      } else {
        const double* sp = xv.data() + src * in_c;
        for (int64_t c = 0; c < in_c; ++c) dst[p * in_c + c] = sp[c];
      }
    }
  }

  int64_t in_channels = in_c;
  Var col_var = s.graph.emit(std::move(cols), {x},
                             [x, taps, patch, in_channels](ag::Graph& g, Var self) {
    if (!g.requires_grad(x)) return;
    const Tensor& go = g.grad_buffer(self);
    Tensor& gx = g.grad_buffer(x);
    int64_t rows = go.rows();
    for (int64_t r = 0; r < rows; ++r) {
      const double* src = go.data() + r * patch * in_channels;
      for (int64_t p = 0; p < patch; ++p) {
        int64_t dst = (*taps)[static_cast<size_t>(r * patch + p)];
        if (dst < 0) continue;
        double* dp = gx.data() + dst * in_channels;
        for (int64_t c = 0; c < in_channels; ++c) dp[c] += src[p * in_channels + c];
      }
    }
  });

  auto& self = const_cast<Conv2d&>(*this);
  Var wv = s.use(self.weight);
  Var bv = s.use(self.bias);
  return ag::add_rowvec(s.graph, ag::matmul(s.graph, col_var, wv), bv);
}

void Conv2d::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &weight, true});
  out.push_back({prefix + ".bias", &bias, true});
}

Var max_pool2d(Session& s, Var x, int64_t batch, int64_t h, int64_t w,
               int64_t ksize, int64_t stride, int64_t pad,
               int64_t& out_h, int64_t& out_w) {
  const Tensor& xv = s.graph.value(x);
  int64_t channels = xv.cols();
  if (xv.rows() != batch * h * w) throw std::invalid_argument("max_pool2d: extent mismatch");
  out_h = conv_out_extent(h, ksize, stride, pad);
  out_w = conv_out_extent(w, ksize, stride, pad);
  int64_t out_rows = batch * out_h * out_w;

  Tensor out({out_rows, channels});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out_rows * channels));
  int64_t r = 0;
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t oy = 0; oy < out_h; ++oy)
      for (int64_t ox = 0; ox < out_w; ++ox, ++r) {
        for (int64_t c = 0; c < channels; ++c) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t best_row = -1;
          for (int64_t ky = 0; ky < ksize && !std::isnan(best); ++ky)
            for (int64_t kx = 0; kx < ksize; ++kx) {
              int64_t iy = oy * stride - pad + ky;
              int64_t ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              int64_t row = (b * h + iy) * w + ix;
              double v = xv.at(row, c);
              if (v > best || std::isnan(v)) {
                best = v;
                best_row = row;
                if (std::isnan(v)) break;
              }
            }
          // fully padded window clamps to zero
          out.at(r, c) = best_row < 0 ? 0.0 : best;
          (*argmax)[static_cast<size_t>(r * channels + c)] = best_row;
        }
      }

  return s.graph.emit(std::move(out), {x}, [x, argmax, channels](ag::Graph& g, Var self) {
    if (!g.requires_grad(x)) return;
    const Tensor& go = g.grad_buffer(self);
    Tensor& gx = g.grad_buffer(x);
    for (int64_t rr = 0; rr < go.rows(); ++rr)
      for (int64_t c = 0; c < channels; ++c) {
        int64_t src = (*argmax)[static_cast<size_t>(rr * channels + c)];
        if (src >= 0) gx.at(src, c) += go.at(rr, c);
      }
  });
}

Var global_avg_pool(Session& s, Var x, int64_t h, int64_t w) {
  return ag::segment_mean(s.graph, x, h * w);
}

}  // namespace trimodal::nn
