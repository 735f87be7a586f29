// Serial reference vs OpenMP kernels. Arg 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include "ace/learner.hpp"
#include "ace/oracle.hpp"
#include "ace/parallel.hpp"

using namespace ace;

namespace {

spiders::GridConfig grid(int side) {
    spiders::GridConfig g;
    g.side = side;
    return g;
}

void BM_value_iteration(benchmark::State& st) {
    const auto exec = st.range(0) ? oracle::Exec::parallel : oracle::Exec::serial;
    const auto g = grid(static_cast<int>(st.range(1)));
    for (auto _ : st) benchmark::DoNotOptimize(oracle::value_iteration_mmdp(g, 0.99 * 0.99, 1e-10, exec));
}

void BM_bellman_targets(benchmark::State& st) {
    const auto exec = st.range(0) ? learner::Exec::parallel : learner::Exec::serial;
    learner::TrainConfig cfg;
    cfg.collector_env_num = 4;
    cfg.sample_per_collect = 256;
    learner::AceLearner l(cfg, 5.62);
    l.collect(256);
    auto replay = l.replay();
    const auto batch = replay.sample(256);
    const learner::NetworkEvaluator ev(l.snapshot(), cfg.grid.side);
    for (auto _ : st) benchmark::DoNotOptimize(learner::bellman_targets(batch, ev, 0.99, exec));
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(batch.size()));
}

void BM_evaluate_policy(benchmark::State& st) {
    const auto exec = st.range(0) ? learner::Exec::parallel : learner::Exec::serial;
    const auto g = grid(5);
    const auto sol = oracle::value_iteration_mmdp(g, 0.99 * 0.99, 1e-10);
    const auto pol = oracle::table_policy(g, sol.policy);
    const learner::EvalPolicy policy = [&](const spiders::EnvState& s, Rng&) { return pol(s); };
    for (auto _ : st) benchmark::DoNotOptimize(learner::evaluate_policy(g, policy, 1000, 7, 5.62, 10, exec));
    st.SetItemsProcessed(st.iterations() * 1000);
}

}  // namespace

BENCHMARK(BM_value_iteration)->ArgsProduct({{0, 1}, {3, 5}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bellman_targets)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_evaluate_policy)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
    parallel::apply_env_threads();
    benchmark::Initialize(&argc, argv);
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
}
