// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trimodal/autodiff.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal {

// Temperature-scaled cosine similarity between two feature vectors.
// Symmetric; range [-1/tau, 1/tau]. Throws on a zero-norm input.
double similarity(const Tensor& a, const Tensor& b, double tau);

struct LossBreakdown {
  double mesh_point = 0.0;
  double mesh_image = 0.0;
  double point_image = 0.0;
  double image_image = 0.0;
  double total = 0.0;
};

// Differentiable building blocks. Anchor and positive batches are k x D
// feature matrices; rows are matched by index.
//
// pair_loss: mean over anchors of -log(exp(s(A_i,P_i)) / Z_i) with
// Z_i = sum_{j!=i} exp(s(A_i,A_j)) + sum_j exp(s(A_i,P_j)); the positive
// term itself is part of Z_i, so k = 1 gives exactly zero.
ag::Var pair_loss(ag::Graph& g, ag::Var anchors, ag::Var positives, double tau);

// pair_loss(A,P) + pair_loss(P,A); symmetric in its arguments.
ag::Var symmetric_pair_loss(ag::Graph& g, ag::Var a, ag::Var b, double tau);

struct TotalLossVars {
  ag::Var mesh_point, mesh_image, point_image, image_image, total;
};

// Joint objective over one minibatch: mesh<->point, mesh<->view1,
// point<->view2, view1<->view2, summed with the given weights.
struct LossWeights {
  double mesh_point = 1.0;
  double mesh_image = 1.0;
  double point_image = 1.0;
  double image_image = 1.0;
};

TotalLossVars total_loss_vars(ag::Graph& g, ag::Var f_mesh, ag::Var f_point,
                              ag::Var f_image1, ag::Var f_image2, double tau,
                              const LossWeights& weights = {});

// Convenience evaluation on plain tensors (no gradients retained).
double pair_loss(const Tensor& anchors, const Tensor& positives, double tau);
double symmetric_pair_loss(const Tensor& a, const Tensor& b, double tau);
LossBreakdown total_loss(const Tensor& f_mesh, const Tensor& f_point,
                         const Tensor& f_image1, const Tensor& f_image2, double tau,
                         const LossWeights& weights = {});

}  // namespace trimodal
