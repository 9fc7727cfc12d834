#include <random>

#include <benchmark/benchmark.h>

#include "attn_atlas/headlens.hpp"
#include "attn_atlas/model.hpp"
#include "attn_atlas/piling.hpp"

using namespace attn_atlas;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = unit(rng);
  return m;
}

void BM_MultiHeadAttention(benchmark::State& state) {
  ModelConfig config;
  config.n_layers = 1;
  const WeightSet w = init_weights(config, 1);
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(rng, state.range(0), config.d_model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        multi_head_attention(x, x, w.encoder[0].self_attention, config.attention_scale()));
  }
}
BENCHMARK(BM_MultiHeadAttention)->Arg(8)->Arg(32)->Arg(128);

void BM_EncoderForward(benchmark::State& state) {
  const ModelConfig config;
  const WeightSet w = init_weights(config, 100);
  std::vector<int> tokens(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<int>(i % 100);
  for (auto _ : state) benchmark::DoNotOptimize(encoder_forward(tokens, w));
}
BENCHMARK(BM_EncoderForward)->Arg(12)->Arg(48);

void BM_KMeansPlusPlus(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const Matrix points = random_matrix(rng, state.range(0), 8);
  for (auto _ : state) benchmark::DoNotOptimize(kmeans_pp(points, 16, 0));
}
BENCHMARK(BM_KMeansPlusPlus)->Arg(500)->Arg(5000);

void BM_AgglomerativePiling(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::vector<Vector> features;
  for (int h = 0; h < state.range(0); ++h) features.push_back(random_matrix(rng, 147, 1).col(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(agglomerative_cluster(std::span<const Vector>(features), 1.0));
  }
}
BENCHMARK(BM_AgglomerativePiling)->Arg(8)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
