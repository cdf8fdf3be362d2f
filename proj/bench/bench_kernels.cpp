// Serial reference vs OpenMP kernels on synthetic inputs.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "lesr/common.hpp"
#include "lesr/grounding.hpp"
#include "lesr/kb.hpp"
#include "lesr/rules.hpp"
#include "lesr/sparse.hpp"

using namespace lesr;

namespace {

SparseMatrix random_matrix(std::size_t n, std::size_t per_row, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> col(0, n - 1);
  std::vector<MatrixEntry> entries;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < per_row; ++k) entries.push_back({r, col(rng), 1});
  return SparseMatrix::from_entries(n, n, std::move(entries));
}

KnowledgeBase random_kb(std::size_t entities, std::size_t relations, std::size_t facts, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> e(0, entities - 1), r(0, relations - 1);
  std::vector<RawTriple> train;
  for (std::size_t i = 0; i < facts; ++i)
    train.push_back({"e" + std::to_string(e(rng)), "r" + std::to_string(r(rng)), "e" + std::to_string(e(rng))});
  return KnowledgeBase::build(train, {}, {});
}

std::vector<Rule> all_two_hop_rules(const KnowledgeBase& kb) {
  TrigramSimilarity sim;
  std::vector<Rule> rules;
  const std::size_t nr = kb.num_relations();
  for (std::size_t h = 0; h < nr; ++h)
    for (std::size_t a = 0; a < nr; ++a)
      for (std::size_t b = 0; b < nr; ++b) {
        const auto name = [&](std::size_t i) { return kb.name(relation(i)); };
        const auto parsed = parse_rule("IF (A, " + name(a) + ", B) AND (B, " + name(b) + ", C) THEN (A, " + name(h) + ", C)");
        rules.push_back(classify_case(map_relations(*parsed.rule, kb, sim)));
      }
  return rules;
}

void BM_MultiplySerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 8, 1), b = random_matrix(n, 8, 2);
  for (auto _ : state) benchmark::DoNotOptimize(sparse::reference::multiply(a, b));
}

void BM_MultiplyParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 8, 1), b = random_matrix(n, 8, 2);
  for (auto _ : state) benchmark::DoNotOptimize(sparse::multiply(a, b));
}

void BM_GroundAllSerial(benchmark::State& state) {
  const auto kb = random_kb(static_cast<std::size_t>(state.range(0)), 6, static_cast<std::size_t>(state.range(0)) * 6, 3);
  const auto rules = all_two_hop_rules(kb);
  for (auto _ : state) benchmark::DoNotOptimize(reference::ground_all(kb, rules));
}

void BM_GroundAllParallel(benchmark::State& state) {
  const auto kb = random_kb(static_cast<std::size_t>(state.range(0)), 6, static_cast<std::size_t>(state.range(0)) * 6, 3);
  const auto rules = all_two_hop_rules(kb);
  for (auto _ : state) benchmark::DoNotOptimize(ground_all(kb, rules));
}

}  // namespace

BENCHMARK(BM_MultiplySerial)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MultiplyParallel)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GroundAllSerial)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GroundAllParallel)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  set_log_level(LogLevel::kQuiet);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
