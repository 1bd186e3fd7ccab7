#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "sce/commutators.hpp"
#include "sce/fixtures.hpp"
#include "sce/harness.hpp"
#include "sce/regularization.hpp"
#include "sce/spde.hpp"

using namespace sce;

namespace {

constexpr double kPi = std::numbers::pi;

PreparedRun prepared(int resolution) {
    SimulationSetup s;
    s.atlas = std::make_shared<const Atlas>(load_fixture("torus2"));
    s.resolution = resolution;
    return prepare_run(s);
}

void ito_step_generic(benchmark::State& st) {
    const PreparedRun run = prepared(static_cast<int>(st.range(0)));
    SolutionState s = initial_state(run.rho0);
    const std::vector<double> dW(run.coeffs.noises(), 0.01);
    for (auto _ : st) {
        s = ito_step(s, run.coeffs, dW, run.dt);
        benchmark::DoNotOptimize(s.rho.v.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(s.rho.v.size()));
}
BENCHMARK(ito_step_generic)->Arg(32)->Arg(64)->Arg(128);

void brownian_table(benchmark::State& st) {
    for (auto _ : st) {
        BrownianDriver d(2, 1e-4, 1.0, 1, 0);
        benchmark::DoNotOptimize(d.dW(0, 0));
    }
}
BENCHMARK(brownian_table);

void geometry_identity_suite(benchmark::State& st) {
    const Atlas a = load_fixture("sphere");
    const int res = static_cast<int>(st.range(0));
    for (auto _ : st) benchmark::DoNotOptimize(geometry_identities(a, res));
}
BENCHMARK(geometry_identity_suite)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void mollifier_convolve(benchmark::State& st) {
    const ChartPtr c = regrid(*load_fixture("torus2").charts[0], {128, 128});
    const ScalarField f = make_scalar(c, [](const Point& x) { return std::sin(2 * kPi * x[0]) * std::cos(2 * kPi * x[1]); });
    const Mollifier m(1.0 / static_cast<double>(st.range(0)), 2);
    for (auto _ : st) benchmark::DoNotOptimize(convolve(c->grid, f.v, m));
}
BENCHMARK(mollifier_convolve)->Arg(64)->Arg(16)->Unit(benchmark::kMillisecond);

void commutator_r(benchmark::State& st) {
    const CommutatorFixture fx = commutator_fixture(load_fixture("torus2"), 96);
    for (auto _ : st) benchmark::DoNotOptimize(run_commutator(CommutatorKind::r, fx, 0.04).l2);
}
BENCHMARK(commutator_r)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
