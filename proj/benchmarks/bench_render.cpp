// SPDX-License-Identifier: Apache-2.0
#include "degs/compositor.hpp"
#include "degs/splat_renderer.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace degs;

PrimitiveCloud bench_cloud(std::size_t n) {
  RandomCloudOptions opts;
  opts.embedding_dim = 0;
  opts.initial_opacity = 0.6;
  return init_random_cloud(n, Aabb{Vec3(-1, -1, -0.5), Vec3(1, 1, 0.5)}, 7, opts);
}

Camera bench_camera(int size) {
  return Camera::looking_forward(size, size, 1.25 * size, Vec3(0, 0, -3.2));
}

// args: splats, image size
void BM_RenderForward(benchmark::State& state) {
  const PrimitiveCloud cloud = bench_cloud(static_cast<std::size_t>(state.range(0)));
  const Camera cam = bench_camera(static_cast<int>(state.range(1)));
  RenderOptions ro;
  ro.retain_records = false;
  for (auto _ : state) benchmark::DoNotOptimize(render(cloud, cam, Vec3::Zero(), ro));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RenderForward)->Args({1000, 64})->Args({10000, 128})->Args({10000, 256})->Unit(benchmark::kMillisecond);

void BM_RenderForwardBackward(benchmark::State& state) {
  const PrimitiveCloud cloud = bench_cloud(static_cast<std::size_t>(state.range(0)));
  const Camera cam = bench_camera(static_cast<int>(state.range(1)));
  const Image grad(cam.width, cam.height, 3, 1e-3);
  for (auto _ : state) {
    const RenderOutput out = render(cloud, cam, Vec3::Zero());
    benchmark::DoNotOptimize(render_backward(out, grad));
  }
}
BENCHMARK(BM_RenderForwardBackward)->Args({1000, 64})->Args({5000, 128})->Unit(benchmark::kMillisecond);

void BM_Fuse(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  PortraitLayers l;
  l.hair_color = Image(s, s, 3, 0.1);
  l.face_color = Image(s, s, 3, 0.5);
  l.face_opacity = Image(s, s, 1, 0.7);
  l.mouth_color = Image(s, s, 3, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(fuse(l));
}
BENCHMARK(BM_Fuse)->Arg(256)->Arg(512);

}  // namespace
