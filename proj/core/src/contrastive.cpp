// SPDX-License-Identifier: Apache-2.0
#include "trimodal/contrastive.hpp"

#include <cmath>
#include <stdexcept>

namespace trimodal {

double similarity(const Tensor& a, const Tensor& b, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (a.numel() != b.numel() || a.numel() == 0)
    throw std::invalid_argument("similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::domain_error("similarity: zero-norm vector");
  return dot / (tau * std::sqrt(na) * std::sqrt(nb));
}

namespace {

void check_batch_pair(const Tensor& a, const Tensor& b, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (a.rank() != 2 || b.rank() != 2 || !a.same_shape(b))
    throw std::invalid_argument("anchor/positive batches must share shape [k,D]");
  if (a.rows() < 1) throw std::invalid_argument("batch must hold at least one row");
}

}  // namespace

ag::Var pair_loss(ag::Graph& g, ag::Var anchors, ag::Var positives, double tau) {
  check_batch_pair(g.value(anchors), g.value(positives), tau);
  ag::Var an = ag::l2_normalize_rows(g, anchors);
  ag::Var pn = ag::l2_normalize_rows(g, positives);
  ag::Var sim_aa = ag::scale(g, ag::matmul_nt(g, an, an), 1.0 / tau);
  ag::Var sim_ap = ag::scale(g, ag::matmul_nt(g, an, pn), 1.0 / tau);
  return ag::info_nce_rows(g, sim_aa, sim_ap);
}

ag::Var symmetric_pair_loss(ag::Graph& g, ag::Var a, ag::Var b, double tau) {
  return ag::add(g, pair_loss(g, a, b, tau), pair_loss(g, b, a, tau));
}

TotalLossVars total_loss_vars(ag::Graph& g, ag::Var f_mesh, ag::Var f_point,
                              ag::Var f_image1, ag::Var f_image2, double tau,
                              const LossWeights& weights) {
  const Tensor& m = g.value(f_mesh);
  if (!m.same_shape(g.value(f_point)) || !m.same_shape(g.value(f_image1)) ||
      !m.same_shape(g.value(f_image2)))
    throw std::invalid_argument("all four feature batches must share shape [k,D]");

  // components carry their weights so total always equals their sum
  TotalLossVars out;
  out.mesh_point = ag::scale(g, symmetric_pair_loss(g, f_mesh, f_point, tau), weights.mesh_point);
  out.mesh_image = ag::scale(g, symmetric_pair_loss(g, f_mesh, f_image1, tau), weights.mesh_image);
  out.point_image =
      ag::scale(g, symmetric_pair_loss(g, f_point, f_image2, tau), weights.point_image);
  out.image_image =
      ag::scale(g, symmetric_pair_loss(g, f_image1, f_image2, tau), weights.image_image);
  ag::Var sum = ag::add(g, out.mesh_point, out.mesh_image);
  sum = ag::add(g, sum, out.point_image);
  out.total = ag::add(g, sum, out.image_image);
  return out;
}

double pair_loss(const Tensor& anchors, const Tensor& positives, double tau) {
  ag::Graph g(/*grad_enabled=*/false);
  return g.value(pair_loss(g, g.leaf(anchors), g.leaf(positives), tau))[0];
}

double symmetric_pair_loss(const Tensor& a, const Tensor& b, double tau) {
  ag::Graph g(false);
  return g.value(symmetric_pair_loss(g, g.leaf(a), g.leaf(b), tau))[0];
}

LossBreakdown total_loss(const Tensor& f_mesh, const Tensor& f_point,
                         const Tensor& f_image1, const Tensor& f_image2, double tau,
                         const LossWeights& weights) {
  ag::Graph g(false);
  TotalLossVars vars = total_loss_vars(g, g.leaf(f_mesh), g.leaf(f_point), g.leaf(f_image1),
                                       g.leaf(f_image2), tau, weights);
  LossBreakdown out;
  out.mesh_point = g.value(vars.mesh_point)[0];
  out.mesh_image = g.value(vars.mesh_image)[0];
  out.point_image = g.value(vars.point_image)[0];
  out.image_image = g.value(vars.image_image)[0];
  out.total = g.value(vars.total)[0];
  return out;
}

}  // namespace trimodal
