#include <benchmark/benchmark.h>

#include "dyffpad/fusion.hpp"
#include "dyffpad/nn/ops.hpp"
#include "dyffpad/rng.hpp"

using namespace dyffpad;
using nn::Tensor;

namespace {

Tensor<float> random(nn::Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform());
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random({8, c, 32, 32}, 1);
  const auto w = random({c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_forward<float>(x, w, nullptr, {1, 1}));
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(16)->Arg(32);

void BM_ModelForward(benchmark::State& state) {
  auto model = fusion::build_model(fusion::DyffpadConfig::desk(), 1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto images = random({n, 1, 64, 64}, 3);
  const auto feats = random({n, 269}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(images, feats, nn::Mode::Infer));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(32);

void BM_TrainStep(benchmark::State& state) {
  auto model = fusion::build_model(fusion::DyffpadConfig::desk(), 1);
  fusion::TensorDataset batch;
  batch.images = random({32, 1, 64, 64}, 5);
  batch.features = random({32, 269}, 6);
  for (std::size_t i = 0; i < 32; ++i) batch.labels.push_back(i % 2 ? 1.0f : 0.0f);
  nn::Adam<float> opt(model.parameters());
  for (auto _ : state) benchmark::DoNotOptimize(fusion::backward_step(model, batch, opt));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_TrainStep);

}  // namespace
