// Serial reference vs OpenMP campaign drivers.

#include <benchmark/benchmark.h>

#include "confir/harness/harness.hpp"

using namespace confir::harness;

namespace {

constexpr std::uint64_t kSeed = 0xBE7C;

const std::vector<CorpusItem>& corpus() {
    static const auto c = build_corpus(kSeed, 64, {}, {true, 0});
    return c;
}

Exec exec_for(const benchmark::State& state) { return {state.range(0) != 0, 0}; }

void BM_BuildCorpus(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_corpus(kSeed, 64, {}, exec_for(state)));
    }
}

void BM_NiCampaign(benchmark::State& state) {
    const auto trusted = confir::machine::TrustedRegistry::builtins();
    const auto& items = corpus();
    for (auto _ : state) {
        benchmark::DoNotOptimize(ni_campaign(items, trusted, 8, 10000, exec_for(state)));
    }
}

void BM_MutationAudit(benchmark::State& state) {
    const auto& items = corpus();
    for (auto _ : state) {
        benchmark::DoNotOptimize(mutation_audit(items, exec_for(state)));
    }
}

} // namespace

// Arg 0: serial reference; arg 1: OpenMP.
BENCHMARK(BM_BuildCorpus)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NiCampaign)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MutationAudit)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
