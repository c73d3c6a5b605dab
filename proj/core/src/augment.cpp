// SPDX-License-Identifier: Apache-2.0
#include "trimodal/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "trimodal/rng.hpp"

namespace trimodal {

void rotate_y_rows(Tensor& rows, double angle) {
  if (rows.rank() != 2 || rows.cols() != 3)
    throw std::invalid_argument("rotate_y_rows: expects [N,3]");
  double c = std::cos(angle), s = std::sin(angle);
  for (int64_t i = 0; i < rows.rows(); ++i) {
    double x = rows.at(i, 0), z = rows.at(i, 2);
    rows.at(i, 0) = c * x + s * z;
    rows.at(i, 2) = -s * x + c * z;
  }
}

namespace {

double draw_angle(const AugmentConfig& cfg, Rng& rng) {
  if (cfg.forced_angle) return *cfg.forced_angle;
  if (!cfg.rotate) return 0.0;
  return rng.uniform(0.0, 2.0 * M_PI);
}

}  // namespace

PointCloud augment_point_cloud(const PointCloud& pc, const AugmentConfig& cfg, uint64_t seed) {
  Rng rng(derive_seed(seed, "aug-point"));
  PointCloud out;
  out.points = pc.points;
  rotate_y_rows(out.points, draw_angle(cfg, rng));
  if (cfg.jitter_sigma > 0.0) {
    for (int64_t i = 0; i < out.points.numel(); ++i)
      out.points[i] += rng.normal(0.0, cfg.jitter_sigma);
  }
  return out;
}

Tensor resize_bilinear(const Tensor& pixels, int64_t out_h, int64_t out_w) {
  if (pixels.rank() != 3 || pixels.dim(2) != 3)
    throw std::invalid_argument("resize_bilinear: expects [H,W,3]");
  int64_t in_h = pixels.dim(0), in_w = pixels.dim(1);
  Tensor out({out_h, out_w, 3});
  double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
  double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
  for (int64_t y = 0; y < out_h; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    int64_t y0 = static_cast<int64_t>(std::floor(fy));
    double wy = fy - static_cast<double>(y0);
    int64_t y0c = std::clamp<int64_t>(y0, 0, in_h - 1);
    int64_t y1c = std::clamp<int64_t>(y0 + 1, 0, in_h - 1);
    for (int64_t x = 0; x < out_w; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      int64_t x0 = static_cast<int64_t>(std::floor(fx));
      double wx = fx - static_cast<double>(x0);
      int64_t x0c = std::clamp<int64_t>(x0, 0, in_w - 1);
      int64_t x1c = std::clamp<int64_t>(x0 + 1, 0, in_w - 1);
      for (int64_t c = 0; c < 3; ++c) {
        double v00 = pixels[(y0c * in_w + x0c) * 3 + c];
        double v01 = pixels[(y0c * in_w + x1c) * 3 + c];
        double v10 = pixels[(y1c * in_w + x0c) * 3 + c];
        double v11 = pixels[(y1c * in_w + x1c) * 3 + c];
        out[(y * out_w + x) * 3 + c] =
            (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
      }
    }
  }
  return out;
}

ImageView augment_image(const ImageView& img, const AugmentConfig& cfg, uint64_t seed) {
  Rng rng(derive_seed(seed, "aug-image"));
  int64_t h = img.height(), w = img.width();

  double area = rng.uniform(cfg.crop_min_area, cfg.crop_max_area);
  double side_frac = std::sqrt(area);
  int64_t ch = std::max<int64_t>(1, static_cast<int64_t>(std::round(side_frac * static_cast<double>(h))));
  int64_t cw = std::max<int64_t>(1, static_cast<int64_t>(std::round(side_frac * static_cast<double>(w))));
  ch = std::min(ch, h);
  cw = std::min(cw, w);
  int64_t oy = ch == h ? 0 : rng.below(h - ch + 1);
  int64_t ox = cw == w ? 0 : rng.below(w - cw + 1);
  bool flip = rng.bernoulli(cfg.flip_prob);

  ImageView out;
  out.camera_position = img.camera_position;
  out.view_index = img.view_index;

  Tensor crop({ch, cw, 3});
  for (int64_t y = 0; y < ch; ++y)
    for (int64_t x = 0; x < cw; ++x)
      for (int64_t c = 0; c < 3; ++c)
        crop[(y * cw + x) * 3 + c] = img.pixels[((oy + y) * w + (ox + x)) * 3 + c];

  out.pixels = (ch == h && cw == w) ? std::move(crop) : resize_bilinear(crop, h, w);

  if (flip) {
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w / 2; ++x)
        for (int64_t c = 0; c < 3; ++c)
          std::swap(out.pixels[(y * w + x) * 3 + c],
                    out.pixels[(y * w + (w - 1 - x)) * 3 + c]);
  }
  return out;
}

FaceFeatureSet augment_mesh_features(const FaceFeatureSet& faces, const AugmentConfig& cfg,
                                     uint64_t seed) {
  Rng rng(derive_seed(seed, "aug-mesh"));
  double angle = draw_angle(cfg, rng);
  double c = std::cos(angle), s = std::sin(angle);
  auto rot = [c, s](double* v) {
    double x = v[0], z = v[2];
    v[0] = c * x + s * z;
    v[2] = -s * x + c * z;
  };

  FaceFeatureSet out = faces;
  for (int64_t f = 0; f < out.count; ++f) {
    rot(out.centers.data() + 3 * f);
    rot(out.normals.data() + 3 * f);
    for (int k = 0; k < 3; ++k) rot(out.corner_vectors.data() + 9 * f + 3 * k);
  }
  return out;
}

}  // namespace trimodal
