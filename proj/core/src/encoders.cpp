// SPDX-License-Identifier: Apache-2.0
#include "trimodal/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "trimodal/rng.hpp"

namespace trimodal {

using ag::Var;
using nn::Session;

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::mesh: return "mesh";
    case Modality::point: return "point";
    case Modality::image: return "image";
  }
  return "?";
}

Modality modality_from_name(const std::string& name) {
  if (name == "mesh") return Modality::mesh;
  if (name == "point") return Modality::point;
  if (name == "image") return Modality::image;
  throw std::invalid_argument("unknown modality: " + name);
}

int64_t EncoderConfig::scaled(int64_t channels) const {
  int64_t c = static_cast<int64_t>(std::llround(static_cast<double>(channels) * width_scale));
  return std::max<int64_t>(1, c);
}

// ---------------------------------------------------------------------------
// point branch

void EdgeConvLayer::collect(const std::string& prefix, nn::ParamList& out) {
  mlp.collect(prefix + ".mlp", out);
  norm.collect(prefix + ".norm", out);
}

std::vector<int64_t> knn_indices(const Tensor& features, int64_t n_points, int64_t row_offset,
                                 int knn) {
  if (knn >= n_points) throw std::invalid_argument("edge_conv: k must be below the point count");
  int64_t c = features.cols();
  std::vector<int64_t> out(static_cast<size_t>(n_points) * static_cast<size_t>(knn));
  std::vector<std::pair<double, int64_t>> dist(static_cast<size_t>(n_points));
  for (int64_t i = 0; i < n_points; ++i) {
    const double* xi = features.data() + (row_offset + i) * c;
    for (int64_t j = 0; j < n_points; ++j) {
      const double* xj = features.data() + (row_offset + j) * c;
      double d = 0.0;
      for (int64_t f = 0; f < c; ++f) {
        double diff = xi[f] - xj[f];
        d += diff * diff;
      }
      dist[static_cast<size_t>(j)] = {d, j};
    }
    dist[static_cast<size_t>(i)].first = std::numeric_limits<double>::infinity();  // no self edge
    std::partial_sort(dist.begin(), dist.begin() + knn, dist.end());  // ties: lowest index first
    for (int k = 0; k < knn; ++k)
      out[static_cast<size_t>(i * knn + k)] = row_offset + dist[static_cast<size_t>(k)].second;
  }
  return out;
}

Var edge_conv(Session& s, Var features, int64_t batch, int64_t n, int knn,
              const EdgeConvLayer& layer) {
  const Tensor& fv = s.graph.value(features);
  if (fv.rows() != batch * n || fv.cols() != layer.in_c)
    throw std::invalid_argument("edge_conv: feature extent mismatch");
  if (knn >= n) throw std::invalid_argument("edge_conv: k must be below the point count");

  // neighbors come from the current values; gradient flows through the
  // gathered features, not through the discrete choice
  std::vector<int64_t> neighbor_rows;
  neighbor_rows.reserve(static_cast<size_t>(batch * n * knn));
  for (int64_t b = 0; b < batch; ++b) {
    auto idx = knn_indices(fv, n, b * n, knn);
    neighbor_rows.insert(neighbor_rows.end(), idx.begin(), idx.end());
  }

  std::vector<int64_t> center_rows(static_cast<size_t>(batch * n * knn));
  for (int64_t r = 0; r < batch * n; ++r)
    for (int k = 0; k < knn; ++k) center_rows[static_cast<size_t>(r * knn + k)] = r;

  Var centers = ag::gather_rows(s.graph, features, std::move(center_rows));
  Var neighbors = ag::gather_rows(s.graph, features, std::move(neighbor_rows));
  Var edge = ag::concat_cols(s.graph, {centers, ag::sub(s.graph, neighbors, centers)});
  Var h = layer.mlp.forward(s, edge);
  h = const_cast<EdgeConvLayer&>(layer).norm.forward(s, h);
  h = ag::leaky_relu(s.graph, h, 0.2);
  return ag::segment_max(s.graph, h, knn);
}

PointEncoder::PointEncoder(const EncoderConfig& cfg_in) : cfg(cfg_in) {
  int64_t in = 3;
  int64_t total = 0;
  for (int64_t c : cfg.edge_channels) {
    int64_t out = cfg.scaled(c);
    layers.emplace_back(in, out);
    in = out;
    total += out;
  }
  fuse = nn::Linear(total, cfg.backbone_dim());
  fuse_norm = nn::BatchNorm(cfg.backbone_dim());
}

void PointEncoder::init(Rng& rng) {
  for (auto& l : layers) l.init(rng);
  fuse.init(rng);
}

void PointEncoder::collect(const std::string& prefix, nn::ParamList& out) {
  for (size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(prefix + ".edge" + std::to_string(i + 1), out);
  fuse.collect(prefix + ".fuse", out);
  fuse_norm.collect(prefix + ".fuse_norm", out);
}

Var PointEncoder::forward(Session& s, Var points, int64_t batch, int64_t n,
                          Var* per_point) const {
  Var x = points;
  std::vector<Var> taps;
  for (const auto& layer : layers) {
    x = edge_conv(s, x, batch, n, cfg.knn, layer);
    taps.push_back(x);
  }
  Var cat = ag::concat_cols(s.graph, taps);
  if (per_point) *per_point = cat;
  Var h = fuse.forward(s, cat);
  h = const_cast<PointEncoder*>(this)->fuse_norm.forward(s, h);
  h = ag::leaky_relu(s.graph, h, 0.2);
  return ag::segment_max(s.graph, h, n);
}

// ---------------------------------------------------------------------------
// mesh branch

MeshConvBlock::MeshConvBlock(int64_t spatial_in, int64_t structural_in, int64_t spatial_out,
                             int64_t structural_out)
    : combine(spatial_in + structural_in, spatial_out),
      combine_norm(spatial_out),
      aggregate(4 * structural_in, structural_out),
      aggregate_norm(structural_out) {}

void MeshConvBlock::init(Rng& rng) {
  combine.init(rng);
  aggregate.init(rng);
}

void MeshConvBlock::collect(const std::string& prefix, nn::ParamList& out) {
  combine.collect(prefix + ".combine", out);
  combine_norm.collect(prefix + ".combine_norm", out);
  aggregate.collect(prefix + ".aggregate", out);
  aggregate_norm.collect(prefix + ".aggregate_norm", out);
}

MeshEncoder::MeshEncoder(const EncoderConfig& cfg_in) : cfg(cfg_in) {
  int64_t s64 = cfg.scaled(64), s32 = cfg.scaled(32);
  spatial1 = nn::Linear(3, s64);
  spatial2 = nn::Linear(s64, s64);
  spatial1_norm = nn::BatchNorm(s64);
  spatial2_norm = nn::BatchNorm(s64);
  rotate1 = nn::Linear(6, s32);
  rotate2 = nn::Linear(s32, s32);
  rotate3 = nn::Linear(s32, s64);
  rotate4 = nn::Linear(s64, s64);
  rotate1_norm = nn::BatchNorm(s32);
  rotate2_norm = nn::BatchNorm(s32);
  rotate3_norm = nn::BatchNorm(s64);
  rotate4_norm = nn::BatchNorm(s64);
  kernel_theta = Tensor({s64 * cfg.kernel_vectors, 1});
  kernel_phi = Tensor({s64 * cfg.kernel_vectors, 1});
  kernel_norm = nn::BatchNorm(s64);

  // structural input: rotate features + kernel correlation + raw centers
  int64_t structural_in = 2 * s64 + 3;
  int64_t s256 = cfg.scaled(256), s512 = cfg.scaled(512), s1024 = cfg.scaled(1024);
  block1 = MeshConvBlock(s64, structural_in, s256, s256);
  block2 = MeshConvBlock(s256, s256, s512, s512);
  fusion = nn::Linear(2 * s512, s1024);
  fusion_norm = nn::BatchNorm(s1024);
  global_head = nn::Linear(s1024, cfg.backbone_dim());
}

void MeshEncoder::init(Rng& rng) {
  spatial1.init(rng);
  spatial2.init(rng);
  rotate1.init(rng);
  rotate2.init(rng);
  rotate3.init(rng);
  rotate4.init(rng);
  for (int64_t i = 0; i < kernel_theta.rows(); ++i) {
    kernel_theta[i] = rng.uniform(0.0, M_PI);
    kernel_phi[i] = rng.uniform(0.0, 2.0 * M_PI);
  }
  block1.init(rng);
  block2.init(rng);
  fusion.init(rng);
  global_head.init(rng);
}

void MeshEncoder::collect(const std::string& prefix, nn::ParamList& out) {
  spatial1.collect(prefix + ".spatial1", out);
  spatial2.collect(prefix + ".spatial2", out);
  spatial1_norm.collect(prefix + ".spatial1_norm", out);
  spatial2_norm.collect(prefix + ".spatial2_norm", out);
  rotate1.collect(prefix + ".rotate1", out);
  rotate2.collect(prefix + ".rotate2", out);
  rotate3.collect(prefix + ".rotate3", out);
  rotate4.collect(prefix + ".rotate4", out);
  rotate1_norm.collect(prefix + ".rotate1_norm", out);
  rotate2_norm.collect(prefix + ".rotate2_norm", out);
  rotate3_norm.collect(prefix + ".rotate3_norm", out);
  rotate4_norm.collect(prefix + ".rotate4_norm", out);
  out.push_back({prefix + ".kernel_theta", &kernel_theta, true});
  out.push_back({prefix + ".kernel_phi", &kernel_phi, true});
  kernel_norm.collect(prefix + ".kernel_norm", out);
  block1.collect(prefix + ".block1", out);
  block2.collect(prefix + ".block2", out);
  fusion.collect(prefix + ".fusion", out);
  fusion_norm.collect(prefix + ".fusion_norm", out);
  global_head.collect(prefix + ".global_head", out);
}

Var MeshEncoder::forward(Session& s, const std::vector<const FaceFeatureSet*>& batch) const {
  if (batch.empty()) throw std::invalid_argument("mesh encoder: empty batch");
  int64_t faces = batch[0]->count;
  int64_t b = static_cast<int64_t>(batch.size());
  for (const FaceFeatureSet* f : batch)
    if (f->count != faces) throw std::invalid_argument("mesh encoder: face budgets differ");

  // pack the batch; neighbor rows get per-sample offsets
  Tensor centers({b * faces, 3});
  Tensor normals({b * faces, 3});
  Tensor pairs({b * faces * 3, 6});  // cyclic corner pairs (v1v2, v2v3, v3v1)
  std::vector<int64_t> nbr[3];
  for (auto& v : nbr) v.resize(static_cast<size_t>(b * faces));

  for (int64_t i = 0; i < b; ++i) {
    const FaceFeatureSet& f = *batch[static_cast<size_t>(i)];
    std::copy(f.centers.begin(), f.centers.end(), centers.data() + i * faces * 3);
    std::copy(f.normals.begin(), f.normals.end(), normals.data() + i * faces * 3);
    for (int64_t r = 0; r < faces; ++r) {
      const double* c9 = f.corners(r);
      double* dst = pairs.data() + ((i * faces + r) * 3) * 6;
      for (int p = 0; p < 3; ++p) {
        const double* first = c9 + 3 * p;
        const double* second = c9 + 3 * ((p + 1) % 3);
        std::copy(first, first + 3, dst + 6 * p);
        std::copy(second, second + 3, dst + 6 * p + 3);
      }
      for (int e = 0; e < 3; ++e) {
        int32_t nb = f.neighbor_index[static_cast<size_t>(r * 3 + e)];
        if (nb < 0 || nb >= faces)
          throw std::out_of_range("mesh encoder: neighbor index out of range");
        nbr[e][static_cast<size_t>(i * faces + r)] = i * faces + nb;
      }
    }
  }

  Var vcenters = s.constant(std::move(centers));
  Var vnormals = s.constant(std::move(normals));
  Var vpairs = s.constant(std::move(pairs));
  auto* self = const_cast<MeshEncoder*>(this);
  ag::Graph& g = s.graph;

  // spatial descriptor
  Var spatial = ag::relu(g, self->spatial1_norm.forward(s, spatial1.forward(s, vcenters)));
  spatial = ag::relu(g, self->spatial2_norm.forward(s, spatial2.forward(s, spatial)));

  // face rotate convolution: shared MLP per pair, mean over the 3 pairs
  Var rc = ag::relu(g, self->rotate1_norm.forward(s, rotate1.forward(s, vpairs)));
  rc = ag::relu(g, self->rotate2_norm.forward(s, rotate2.forward(s, rc)));
  rc = ag::segment_mean(g, rc, 3);
  rc = ag::relu(g, self->rotate3_norm.forward(s, rotate3.forward(s, rc)));
  rc = ag::relu(g, self->rotate4_norm.forward(s, rotate4.forward(s, rc)));

  // face kernel correlation: Gaussian similarity between the face normal
  // and each kernel's unit vectors, averaged per kernel
  Var theta = s.use(self->kernel_theta);
  Var phi = s.use(self->kernel_phi);
  Var sin_t = ag::sin_of(g, theta), cos_t = ag::cos_of(g, theta);
  Var sin_p = ag::sin_of(g, phi), cos_p = ag::cos_of(g, phi);
  Var kx = ag::mul(g, sin_t, cos_p);
  Var ky = ag::mul(g, sin_t, sin_p);
  Var kz = cos_t;
  Var kernels = ag::concat_cols(g, {kx, ky, kz});  // [K*M, 3]

  int64_t num_kernels = cfg.scaled(64);
  int64_t m = cfg.kernel_vectors;
  Var sims = ag::matmul_nt(g, vnormals, kernels);  // [rows, K*M]
  double inv_sigma_sq = 1.0 / (cfg.kernel_sigma * cfg.kernel_sigma);
  // |n - v|^2 = 2 - 2 n.v for unit vectors
  Var gauss = ag::exp_of(g, ag::scale(g, ag::add_scalar(g, sims, -1.0), inv_sigma_sq));
  Tensor averer({num_kernels * m, num_kernels});
  for (int64_t k = 0; k < num_kernels; ++k)
    for (int64_t j = 0; j < m; ++j) averer.at(k * m + j, k) = 1.0 / static_cast<double>(m);
  Var kc = ag::matmul(g, gauss, s.constant(std::move(averer)));
  kc = ag::relu(g, self->kernel_norm.forward(s, kc));

  Var structural = ag::concat_cols(g, {rc, kc, vcenters});

  auto run_block = [&](MeshConvBlock& blk, Var sp, Var st) -> std::pair<Var, Var> {
    Var combined = blk.combine.forward(s, ag::concat_cols(g, {sp, st}));
    combined = ag::relu(g, blk.combine_norm.forward(s, combined));
    Var n0 = ag::gather_rows(g, st, nbr[0]);
    Var n1 = ag::gather_rows(g, st, nbr[1]);
    Var n2 = ag::gather_rows(g, st, nbr[2]);
    Var agg = blk.aggregate.forward(s, ag::concat_cols(g, {st, n0, n1, n2}));
    agg = ag::relu(g, blk.aggregate_norm.forward(s, agg));
    return {combined, agg};
  };

  auto [sp1, st1] = run_block(self->block1, spatial, structural);
  auto [sp2, st2] = run_block(self->block2, sp1, st1);

  Var fused = fusion.forward(s, ag::concat_cols(g, {sp2, st2}));
  fused = ag::relu(g, self->fusion_norm.forward(s, fused));
  Var pooled = ag::segment_max(g, fused, faces);
  return global_head.forward(s, pooled);
}

// ---------------------------------------------------------------------------
// image branch

ResidualBlock::ResidualBlock(int64_t in_c, int64_t out_c, int64_t stride)
    : conv1(in_c, out_c, 3, stride, 1),
      conv2(out_c, out_c, 3, 1, 1),
      norm1(out_c),
      norm2(out_c) {
  if (stride != 1 || in_c != out_c) {
    projected = true;
    shortcut_conv = nn::Conv2d(in_c, out_c, 1, stride, 0);
    shortcut_norm = nn::BatchNorm(out_c);
  }
}

void ResidualBlock::init(Rng& rng) {
  conv1.init(rng);
  conv2.init(rng);
  if (projected) shortcut_conv.init(rng);
}

void ResidualBlock::collect(const std::string& prefix, nn::ParamList& out) {
  conv1.collect(prefix + ".conv1", out);
  norm1.collect(prefix + ".norm1", out);
  conv2.collect(prefix + ".conv2", out);
  norm2.collect(prefix + ".norm2", out);
  if (projected) {
    shortcut_conv.collect(prefix + ".shortcut", out);
    shortcut_norm.collect(prefix + ".shortcut_norm", out);
  }
}

Var ResidualBlock::forward(Session& s, Var x, int64_t batch, int64_t& h, int64_t& w) const {
  auto* self = const_cast<ResidualBlock*>(this);
  int64_t h1 = 0, w1 = 0, h2 = 0, w2 = 0;
  Var y = conv1.forward(s, x, batch, h, w, h1, w1);
  y = ag::relu(s.graph, self->norm1.forward(s, y));
  y = conv2.forward(s, y, batch, h1, w1, h2, w2);
  y = self->norm2.forward(s, y);

  Var skip = x;
  if (projected) {
    int64_t hs = 0, ws = 0;
    skip = shortcut_conv.forward(s, x, batch, h, w, hs, ws);
    skip = self->shortcut_norm.forward(s, skip);
  }
  h = h2;
  w = w2;
  return ag::relu(s.graph, ag::add(s.graph, y, skip));
}

ImageEncoder::ImageEncoder(const EncoderConfig& cfg_in) : cfg(cfg_in) {
  int64_t w0 = cfg.scaled(cfg.image_stage_channels[0]);
  stem = nn::Conv2d(3, w0, 7, 2, 3);
  stem_norm = nn::BatchNorm(w0);
  int64_t in = w0;
  for (int stage = 0; stage < 4; ++stage) {
    int64_t out = cfg.scaled(cfg.image_stage_channels[static_cast<size_t>(stage)]);
    int64_t stride = stage == 0 ? 1 : 2;
    blocks.emplace_back(in, out, stride);
    blocks.emplace_back(out, out, 1);
    in = out;
  }
}

void ImageEncoder::init(Rng& rng) {
  stem.init(rng);
  for (auto& b : blocks) b.init(rng);
}

void ImageEncoder::collect(const std::string& prefix, nn::ParamList& out) {
  stem.collect(prefix + ".stem", out);
  stem_norm.collect(prefix + ".stem_norm", out);
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(prefix + ".block" + std::to_string(i + 1), out);
}

Var ImageEncoder::forward(Session& s, ag::Var pixels, int64_t batch, int64_t h,
                          int64_t w) const {
  auto* self = const_cast<ImageEncoder*>(this);
  int64_t oh = 0, ow = 0;
  Var x = stem.forward(s, pixels, batch, h, w, oh, ow);
  x = ag::relu(s.graph, self->stem_norm.forward(s, x));
  int64_t ph = 0, pw = 0;
  x = nn::max_pool2d(s, x, batch, oh, ow, 3, 2, 1, ph, pw);
  int64_t ch = ph, cw = pw;
  for (const auto& block : blocks) x = block.forward(s, x, batch, ch, cw);
  return nn::global_avg_pool(s, x, ch, cw);
}

Var ImageEncoder::forward(Session& s, const Tensor& images) const {
  if (images.rank() != 4 || images.dim(3) != 3)
    throw std::invalid_argument("image encoder: expects [B,H,W,3] input");
  int64_t batch = images.dim(0), h = images.dim(1), w = images.dim(2);
  Tensor flat = images;
  flat.reshape({batch * h * w, 3});
  return forward(s, s.constant(std::move(flat)), batch, h, w);
}

// ---------------------------------------------------------------------------

void ProjectionHead::init(Rng& rng) {
  fc1.init(rng);
  fc2.init(rng);
}

void ProjectionHead::collect(const std::string& prefix, nn::ParamList& out) {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

Var ProjectionHead::forward(Session& s, Var x) const {
  return fc2.forward(s, ag::relu(s.graph, fc1.forward(s, x)));
}

TriModalModel::TriModalModel(const EncoderConfig& cfg_in)
    : cfg(cfg_in),
      image(cfg_in),
      point(cfg_in),
      mesh(cfg_in),
      image_head(cfg_in.backbone_dim(), cfg_in.universal_dim),
      point_head(cfg_in.backbone_dim(), cfg_in.universal_dim),
      mesh_head(cfg_in.backbone_dim(), cfg_in.universal_dim) {}

void TriModalModel::init(uint64_t seed) {
  Rng rng(derive_seed(seed, "model-init"));
  image.init(rng);
  point.init(rng);
  mesh.init(rng);
  image_head.init(rng);
  point_head.init(rng);
  mesh_head.init(rng);
}

nn::ParamList TriModalModel::collect() {
  nn::ParamList out;
  image.collect("image", out);
  point.collect("point", out);
  mesh.collect("mesh", out);
  image_head.collect("image_head", out);
  point_head.collect("point_head", out);
  mesh_head.collect("mesh_head", out);
  return out;
}

ProjectionHead& TriModalModel::head(Modality m) {
  switch (m) {
    case Modality::mesh: return mesh_head;
    case Modality::point: return point_head;
    case Modality::image: return image_head;
  }
  throw std::invalid_argument("unknown projection head");
}

const ProjectionHead& TriModalModel::head(Modality m) const {
  return const_cast<TriModalModel*>(this)->head(m);
}

// ---------------------------------------------------------------------------
// inference helpers

Tensor encode_images(const TriModalModel& model, const Tensor& images) {
  Session s(/*grad_enabled=*/false, /*training=*/false);
  return s.graph.value(model.image.forward(s, images));
}

Tensor encode_point_clouds(const TriModalModel& model,
                           const std::vector<const PointCloud*>& batch) {
  if (batch.empty()) throw std::invalid_argument("point encoder: empty batch");
  int64_t n = batch[0]->size();
  Tensor flat({static_cast<int64_t>(batch.size()) * n, 3});
  for (size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->size() != n)
      throw std::invalid_argument("point encoder: batches must share the point count");
    std::copy(batch[i]->points.data(), batch[i]->points.data() + n * 3,
              flat.data() + static_cast<int64_t>(i) * n * 3);
  }
  Session s(false, false);
  Var v = model.point.forward(s, s.constant(std::move(flat)),
                              static_cast<int64_t>(batch.size()), n);
  return s.graph.value(v);
}

Tensor encode_meshes(const TriModalModel& model,
                     const std::vector<const FaceFeatureSet*>& batch) {
  Session s(false, false);
  return s.graph.value(model.mesh.forward(s, batch));
}

Tensor project_features(const TriModalModel& model, Modality m, const Tensor& backbone) {
  Session s(false, false);
  return s.graph.value(model.head(m).forward(s, s.constant(backbone)));
}

}  // namespace trimodal
