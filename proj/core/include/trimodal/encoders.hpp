// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trimodal/mesh.hpp"
#include "trimodal/nn.hpp"
#include "trimodal/render.hpp"
#include "trimodal/sampling.hpp"

namespace trimodal {

enum class Modality { mesh, point, image };
const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);

// Channel plan for the three backbones and their projection heads. The
// defaults give 512-d global features; width_scale shrinks every learned
// channel count (floor 1) for desk-scale runs while keeping the topology.
struct EncoderConfig {
  double width_scale = 1.0;
  int knn = 20;                 // EdgeConv neighborhood
  int64_t face_budget = 1024;
  int64_t universal_dim = 128;  // projection head output
  int kernel_vectors = 4;       // unit vectors per correlation kernel
  double kernel_sigma = 0.2;

  int64_t scaled(int64_t channels) const;
  int64_t backbone_dim() const { return scaled(512); }

  // per-block channel lists (before scaling)
  std::array<int64_t, 4> edge_channels{64, 64, 64, 128};
  std::array<int64_t, 4> image_stage_channels{64, 128, 256, 512};
};

// ---------------------------------------------------------------------------
// point cloud branch (dynamic-graph EdgeConv stack)

struct EdgeConvLayer {
  nn::Linear mlp;       // [2*C_in -> C_out] shared across edges
  nn::BatchNorm norm;
  int64_t in_c = 0, out_c = 0;

  EdgeConvLayer() = default;
  EdgeConvLayer(int64_t in, int64_t out) : mlp(2 * in, out), norm(out), in_c(in), out_c(out) {}
  void init(Rng& rng) { mlp.init(rng); }
  void collect(const std::string& prefix, nn::ParamList& out);
};

// kNN in the current feature space (self excluded, ties to the lowest
// index), edge features (x_i, x_j - x_i), shared MLP, max over neighbors.
ag::Var edge_conv(nn::Session& s, ag::Var features, int64_t batch, int64_t n, int knn,
                  const EdgeConvLayer& layer);

// Brute-force neighbor lists for [N,C] features of one sample.
std::vector<int64_t> knn_indices(const Tensor& features, int64_t n_points, int64_t row_offset,
                                 int knn);

struct PointEncoder {
  EncoderConfig cfg;
  std::vector<EdgeConvLayer> layers;
  nn::Linear fuse;  // concat of all layer outputs -> backbone dim
  nn::BatchNorm fuse_norm;

  explicit PointEncoder(const EncoderConfig& cfg = {});
  void init(Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out);

  // points: [B*N, 3]; returns [B, backbone]; per_point (optional out)
  // receives the concatenated EdgeConv features [B*N, sum(C_l)].
  ag::Var forward(nn::Session& s, ag::Var points, int64_t batch, int64_t n,
                  ag::Var* per_point = nullptr) const;
};

// ---------------------------------------------------------------------------
// mesh branch (spatial + structural descriptors, neighborhood blocks)

struct MeshConvBlock {
  nn::Linear combine;    // [spatial+structural -> spatial_out]
  nn::BatchNorm combine_norm;
  nn::Linear aggregate;  // [4*structural -> structural_out]
  nn::BatchNorm aggregate_norm;

  MeshConvBlock() = default;
  MeshConvBlock(int64_t spatial_in, int64_t structural_in, int64_t spatial_out,
                int64_t structural_out);
  void init(Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out);
};

struct MeshEncoder {
  EncoderConfig cfg;
  // spatial descriptor on face centers
  nn::Linear spatial1, spatial2;
  nn::BatchNorm spatial1_norm, spatial2_norm;
  // face rotate convolution on cyclic corner pairs
  nn::Linear rotate1, rotate2, rotate3, rotate4;
  nn::BatchNorm rotate1_norm, rotate2_norm, rotate3_norm, rotate4_norm;
  // face kernel correlation: learnable unit vectors through spherical angles
  Tensor kernel_theta;  // [num_kernels * vectors_per_kernel, 1]
  Tensor kernel_phi;    // [num_kernels * vectors_per_kernel, 1]
  nn::BatchNorm kernel_norm;
  MeshConvBlock block1, block2;
  nn::Linear fusion;
  nn::BatchNorm fusion_norm;
  nn::Linear global_head;

  explicit MeshEncoder(const EncoderConfig& cfg = {});
  void init(Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out);

  // Batched face sets must share the face budget; neighbor indices are
  // sample-local and re-based internally.
  ag::Var forward(nn::Session& s, const std::vector<const FaceFeatureSet*>& batch) const;
};

// ---------------------------------------------------------------------------
// image branch (residual four-stage CNN, global average pool)

struct ResidualBlock {
  nn::Conv2d conv1, conv2;
  nn::BatchNorm norm1, norm2;
  nn::Conv2d shortcut_conv;  // 1x1 when shape changes
  nn::BatchNorm shortcut_norm;
  bool projected = false;

  ResidualBlock() = default;
  ResidualBlock(int64_t in_c, int64_t out_c, int64_t stride);
  void init(Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out);
  ag::Var forward(nn::Session& s, ag::Var x, int64_t batch, int64_t& h, int64_t& w) const;
};

struct ImageEncoder {
  EncoderConfig cfg;
  nn::Conv2d stem;
  nn::BatchNorm stem_norm;
  std::vector<ResidualBlock> blocks;  // two per stage

  explicit ImageEncoder(const EncoderConfig& cfg = {});
  void init(Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out);

  // images: [B, H, W, 3] values in [0,1] flattened row-major
  ag::Var forward(nn::Session& s, const Tensor& images) const;
  ag::Var forward(nn::Session& s, ag::Var pixels, int64_t batch, int64_t h, int64_t w) const;
};

// ---------------------------------------------------------------------------

struct ProjectionHead {
  nn::Linear fc1, fc2;

  ProjectionHead() = default;
  ProjectionHead(int64_t in, int64_t out) : fc1(in, in), fc2(in, out) {}
  void init(Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out);
  ag::Var forward(nn::Session& s, ag::Var x) const;
};

// The six networks trained jointly.
struct TriModalModel {
  EncoderConfig cfg;
  ImageEncoder image;
  PointEncoder point;
  MeshEncoder mesh;
  ProjectionHead image_head, point_head, mesh_head;

  explicit TriModalModel(const EncoderConfig& cfg = {});
  void init(uint64_t seed);
  nn::ParamList collect();  // stable order: drives optimizer and checkpoints

  ProjectionHead& head(Modality m);
  const ProjectionHead& head(Modality m) const;
};

// Convenience single-batch helpers used by evaluation code (no gradients).
Tensor encode_images(const TriModalModel& model, const Tensor& images);  // [B,H,W,3] -> [B,F]
Tensor encode_point_clouds(const TriModalModel& model, const std::vector<const PointCloud*>& batch);
Tensor encode_meshes(const TriModalModel& model, const std::vector<const FaceFeatureSet*>& batch);
Tensor project_features(const TriModalModel& model, Modality m, const Tensor& backbone);

}  // namespace trimodal
