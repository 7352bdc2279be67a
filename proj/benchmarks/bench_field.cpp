// SPDX-License-Identifier: Apache-2.0
#include "degs/deform_field.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

using namespace degs;

void BM_FieldPredictBatch(benchmark::State& state) {
  const Aabb box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  RandomCloudOptions opts;
  opts.embedding_dim = 32;
  const PrimitiveCloud cloud = init_random_cloud(static_cast<std::size_t>(state.range(0)), box, 3, opts);
  FieldConfig fc;
  fc.layout = {32, 16, 20};
  const DeformField field(fc, box, 5);
  const std::vector<double> audio(16, 0.1), expr(20, -0.2);
  for (auto _ : state) benchmark::DoNotOptimize(predict_batch(field, cloud, audio, expr));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FieldPredictBatch)->Arg(500)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
