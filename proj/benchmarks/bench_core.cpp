// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "trimodal/contrastive.hpp"
#include "trimodal/encoders.hpp"
#include "trimodal/procgen.hpp"
#include "trimodal/render.hpp"
#include "trimodal/rng.hpp"
#include "trimodal/sampling.hpp"

using namespace trimodal;

namespace {

Tensor random_matrix(int64_t rows, int64_t cols, uint64_t seed) {
  Rng rng(seed);
  Tensor t({rows, cols});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_PairLoss(benchmark::State& state) {
  int64_t k = state.range(0);
  Tensor a = random_matrix(k, 128, 1);
  Tensor p = random_matrix(k, 128, 2);
  for (auto _ : state) {
    double v = pair_loss(a, p, 0.1);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_PairLoss)->Arg(8)->Arg(32)->Arg(96);

void BM_TotalLossBackward(benchmark::State& state) {
  int64_t k = state.range(0);
  Tensor m = random_matrix(k, 128, 3), p = random_matrix(k, 128, 4);
  Tensor i1 = random_matrix(k, 128, 5), i2 = random_matrix(k, 128, 6);
  for (auto _ : state) {
    ag::Graph g;
    auto vars = total_loss_vars(g, g.leaf(m, true), g.leaf(p, true), g.leaf(i1, true),
                                g.leaf(i2, true), 0.1);
    g.backward(vars.total);
    benchmark::DoNotOptimize(g.value(vars.total)[0]);
  }
}
BENCHMARK(BM_TotalLossBackward)->Arg(8)->Arg(96);

void BM_FarthestPointSample(benchmark::State& state) {
  int64_t m = state.range(0);
  Tensor pts = random_matrix(m, 3, 7);
  for (auto _ : state) {
    auto idx = farthest_point_sample(pts, m / 4, 0);
    benchmark::DoNotOptimize(idx.data());
  }
}
BENCHMARK(BM_FarthestPointSample)->Arg(1024)->Arg(8192);

void BM_EdgeConvForward(benchmark::State& state) {
  int64_t n = state.range(0);
  EncoderConfig cfg;
  cfg.width_scale = 1.0 / 8.0;
  cfg.knn = 4;
  EdgeConvLayer layer(3, cfg.scaled(64));
  Rng rng(9);
  layer.init(rng);
  Tensor pts = random_matrix(n, 3, 8);
  for (auto _ : state) {
    nn::Session s(false, false);
    ag::Var out = edge_conv(s, s.constant(pts), 1, n, cfg.knn, layer);
    benchmark::DoNotOptimize(s.graph.value(out).data());
  }
}
BENCHMARK(BM_EdgeConvForward)->Arg(256)->Arg(1024);

void BM_RenderView(benchmark::State& state) {
  GeneratedShape shape = generate_shape({"cylinder", 5});
  RenderConfig rc;
  rc.width = static_cast<int>(state.range(0));
  rc.height = rc.width;
  rc.fixed_cameras = {{0, 0, rc.camera_radius}};
  for (auto _ : state) {
    auto views = render_views(shape.mesh, rc, 0);
    benchmark::DoNotOptimize(views[0].pixels.data());
  }
}
BENCHMARK(BM_RenderView)->Arg(32)->Arg(128);

void BM_ImageEncoderForward(benchmark::State& state) {
  EncoderConfig cfg;
  cfg.width_scale = 1.0 / 8.0;
  ImageEncoder enc(cfg);
  Rng rng(10);
  enc.init(rng);
  Tensor imgs = random_matrix(2 * 32 * 32, 3, 11);
  imgs.reshape({2, 32, 32, 3});
  for (auto _ : state) {
    nn::Session s(false, false);
    ag::Var out = enc.forward(s, imgs);
    benchmark::DoNotOptimize(s.graph.value(out).data());
  }
}
BENCHMARK(BM_ImageEncoderForward);

}  // namespace

BENCHMARK_MAIN();
