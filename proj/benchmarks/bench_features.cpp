#include <benchmark/benchmark.h>

#include "dyffpad/data.hpp"
#include "dyffpad/lpq.hpp"
#include "dyffpad/quality.hpp"

using namespace dyffpad;

namespace {

GrayImage fingerprint(int side) {
  data::SynthParams p;
  p.side = side;
  p.seed = 3;
  return data::synth_fingerprint(p, data::Label::Live);
}

void BM_LpqHistogram(benchmark::State& state) {
  const auto img = fingerprint(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(lpq::lpq_histogram(img));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_LpqHistogram)->Arg(64)->Arg(128)->Arg(256);

void BM_QualityVector(benchmark::State& state) {
  const auto img = fingerprint(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(quality::quality_vector(img));
}
BENCHMARK(BM_QualityVector)->Arg(128)->Arg(256);

void BM_BlockQuality(benchmark::State& state) {
  const auto img = fingerprint(128);
  const quality::QualityConfig cfg;
  const quality::GaborBank bank(cfg.gabor_orientations, cfg.gabor_frequency, cfg.gabor_sigma);
  const Block b = extract_block(img, 48, 48, 32, 32);
  for (auto _ : state) benchmark::DoNotOptimize(quality::block_quality(b, cfg, bank));
}
BENCHMARK(BM_BlockQuality);

void BM_ExtractFeatures(benchmark::State& state) {
  const auto img = fingerprint(128);
  const data::ExtractionConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(data::extract_features(img, cfg));
}
BENCHMARK(BM_ExtractFeatures);

}  // namespace
