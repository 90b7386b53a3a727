#include <random>

#include <benchmark/benchmark.h>

#include "advchar/attack.hpp"
#include "advchar/baseline.hpp"
#include "advchar/model.hpp"

namespace advchar {
namespace {

// Default-sized model over a 200-character alphabet.
constexpr std::size_t kVocab = 203;

const Model& bench_model() {
  static const Model model = [] {
    ModelConfig cfg;
    cfg.num_classes = 4;
    cfg.seed = 1;
    return Model(cfg, kVocab);
  }();
  return model;
}

TokenSequence random_text(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<TokenId> id(kNumSpecials, static_cast<TokenId>(kVocab - 1));
  TokenSequence x{kClsId};
  for (std::size_t i = 0; i < n; ++i) x.push_back(id(rng));
  return x;
}

void BM_Forward(benchmark::State& state) {
  const auto x = random_text(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(bench_model().forward(x));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64);

void BM_InputGradient(benchmark::State& state) {
  const auto x = random_text(static_cast<std::size_t>(state.range(0)), 2);
  const auto e = bench_model().embed(x);
  const LogitObjective<Real> objective = [](const Logits<Real>& z, Logits<Real>& grad) {
    return g_untargeted(z, 0, Real(5), &grad);
  };
  for (auto _ : state) benchmark::DoNotOptimize(bench_model().input_gradient(e, objective));
}
BENCHMARK(BM_InputGradient)->Arg(16)->Arg(64);

void BM_Substitute(benchmark::State& state) {
  const auto x = random_text(static_cast<std::size_t>(state.range(0)), 3);
  EmbeddingSeq<Real> e = bench_model().embed(x);
  e.array() += Real(0.3);
  for (auto _ : state) benchmark::DoNotOptimize(substitute(bench_model(), e, x));
}
BENCHMARK(BM_Substitute)->Arg(16)->Arg(64);

void BM_Attack(benchmark::State& state) {
  const auto x = random_text(32, 4);
  AttackConfig cfg;
  cfg.max_steps = static_cast<int>(state.range(0));
  cfg.early_stop = false;
  for (auto _ : state) benchmark::DoNotOptimize(attack(bench_model(), x, 0, cfg, 1));
}
BENCHMARK(BM_Attack)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_ClusterEmbeddings(benchmark::State& state) {
  const auto& table = bench_model().params().token_embedding;
  for (auto _ : state)
    benchmark::DoNotOptimize(cluster_embeddings(table, default_cluster_count(kVocab), 1));
}
BENCHMARK(BM_ClusterEmbeddings)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace advchar

BENCHMARK_MAIN();
