#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "abfp/abfp.hpp"
#include "abfp/matrix.hpp"

namespace {

abfp::Matrix random_matrix(std::size_t rows, std::size_t cols, unsigned seed) {
  abfp::Matrix m(rows, cols);
  std::mt19937 rng(seed);
  std::normal_distribution<float> n;
  for (float& v : m.data()) v = n(rng);
  return m;
}

abfp::DeviceConfig device(int tile, double noise) {
  return abfp::DeviceConfig::make(tile, 8.0, abfp::QuantSpec::make(8, 8, 8), abfp::NoiseModel{noise}, 1);
}

// Square d x d weights times a d x 64 batch.
void BM_MatmulF32(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const abfp::Matrix w = random_matrix(d, d, 1), x = random_matrix(d, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(abfp::matmul_f32(w, x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d * d * 64));
}
BENCHMARK(BM_MatmulF32)->Arg(64)->Arg(256);

// Args: dimension, tile width, noise on.
void BM_AbfpMatmul(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const abfp::Matrix w = random_matrix(d, d, 1), x = random_matrix(d, 64, 2);
  const abfp::DeviceConfig cfg = device(static_cast<int>(state.range(1)), state.range(2) ? 1.0 : 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(abfp::abfp_matmul(w, x, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d * d * 64));
}
BENCHMARK(BM_AbfpMatmul)->ArgsProduct({{64, 256}, {8, 128}, {0, 1}});

void BM_EncodeRows(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const abfp::Matrix w = random_matrix(d, d, 1);
  for (auto _ : state) benchmark::DoNotOptimize(abfp::EncodedOperand::rows_of(w, static_cast<int>(state.range(1)), 8));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d * d));
}
BENCHMARK(BM_EncodeRows)->ArgsProduct({{256}, {8, 128}});

// Encoded operands reused; Args: number of gains evaluated together.
void BM_MatmulMulti(benchmark::State& state) {
  const std::size_t d = 256;
  const abfp::Matrix w = random_matrix(d, d, 1), x = random_matrix(d, 64, 2);
  const auto ew = abfp::EncodedOperand::rows_of(w, 32, 8);
  const auto ex = abfp::EncodedOperand::cols_of(x, 32, 8);
  std::vector<abfp::DeviceConfig> configs;
  for (int g = 0; g < state.range(0); ++g) {
    configs.push_back(abfp::DeviceConfig::make(32, double(1 << g), abfp::QuantSpec::make(8, 8, 8),
                                               abfp::NoiseModel{1.0}, 1));
  }
  for (auto _ : state) benchmark::DoNotOptimize(abfp::abfp_matmul_multi(ew, ex, configs));
  state.SetItemsProcessed(state.iterations() * state.range(0) * static_cast<std::int64_t>(d * d * 64));
}
BENCHMARK(BM_MatmulMulti)->Arg(1)->Arg(5);

}  // namespace

BENCHMARK_MAIN();
