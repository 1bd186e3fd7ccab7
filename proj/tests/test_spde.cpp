#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>

#include "sce/errors.hpp"
#include "sce/fixtures.hpp"
#include "sce/spde.hpp"

using namespace sce;

namespace {

constexpr double kPi = std::numbers::pi;

ChartPtr torus(int n, int dim = 2) {
    const Atlas a = load_fixture(dim == 2 ? "torus2" : "torus1");
    return regrid(*a.charts[0], {n, dim == 2 ? n : 1});
}

VectorField cellular(const ChartPtr& c, double amp) {
    return make_vector(c, [amp](const Point& x) {
        const double s = 2 * kPi * x[0], t = 2 * kPi * x[1];
        return std::array<double, 2>{amp * std::sin(s) * std::cos(t), -amp * std::cos(s) * std::sin(t)};
    });
}

ScalarField smooth_density(const ChartPtr& c) {
    return make_scalar(c, [](const Point& x) {
        return 1.5 + std::sin(2 * kPi * x[0]) * std::cos(2 * kPi * x[1]) + 0.3 * std::cos(4 * kPi * x[1]);
    });
}

SimulationSetup setup(const std::string& manifold, int res, double T, int paths, const std::string& preset,
                      const std::string& rho0) {
    SimulationSetup s;
    s.atlas = std::make_shared<const Atlas>(load_fixture(manifold));
    s.resolution = res;
    s.T = T;
    s.paths = paths;
    s.seed = 11;
    s.preset = preset;
    s.rho0 = rho0;
    return s;
}

}  // namespace

TEST_CASE("Brownian driver: regeneration is bit-exact and coarsening sums increments") {
    const BrownianDriver a(2, 0.01, 1.0, 42, 3), b(2, 0.01, 1.0, 42, 3), other(2, 0.01, 1.0, 42, 4);
    REQUIRE(a.steps() == 100);
    bool differs = false;
    for (int k = 0; k < a.steps(); ++k)
        for (int i = 0; i < 2; ++i) {
            CHECK(a.dW(k, i) == b.dW(k, i));
            differs = differs || a.dW(k, i) != other.dW(k, i);
        }
    CHECK(differs);
    const BrownianDriver c = a.coarsen(4);
    CHECK(c.steps() == 25);
    CHECK(c.dt() == doctest::Approx(0.04));
    for (int k = 0; k < c.steps(); ++k)
        CHECK(c.dW(k, 1) == a.dW(4 * k, 1) + a.dW(4 * k + 1, 1) + a.dW(4 * k + 2, 1) + a.dW(4 * k + 3, 1));
    CHECK(a.W(a.steps(), 0) == doctest::Approx(c.W(c.steps(), 0)).epsilon(1e-12));
}

TEST_CASE("Brownian increments have mean zero and variance dt") {
    const double dt = 1e-3;
    const BrownianDriver d(4, dt, 50.0, 9);
    const double n = 4.0 * d.steps();
    double s = 0.0, s2 = 0.0;
    for (int k = 0; k < d.steps(); ++k)
        for (int i = 0; i < 4; ++i) {
            s += d.dW(k, i);
            s2 += d.dW(k, i) * d.dW(k, i);
        }
    // 5 sigma bands for the sample mean and the sample variance.
    CHECK(std::abs(s / n) <= 5.0 * std::sqrt(dt / n));
    CHECK(std::abs(s2 / n - dt) <= 5.0 * dt * std::sqrt(2.0 / n));
}

TEST_CASE("ito_step: no coefficients leaves rho unchanged") {
    const ChartPtr c = torus(16);
    const auto cs = make_coefficients(c, zero_vector(c), {zero_vector(c)});
    const auto s0 = initial_state(smooth_density(c));
    const double dW = 0.1;
    const auto s1 = ito_step(s0, cs, std::span<const double>(&dW, 1), 0.01);
    CHECK(s1.rho.v == s0.rho.v);
    CHECK(s1.step == 1);
}

TEST_CASE("ito_step: constants are preserved by divergence-free transport and constant noise with dW = 0") {
    const ChartPtr c = torus(32);
    const VectorField a = make_vector(c, [](const Point&) { return std::array<double, 2>{0.2, -0.1}; });
    const auto cs = make_coefficients(c, cellular(c, 0.5), {a});
    const auto s1 = ito_step(initial_state(constant_scalar(c, 2.0)), cs, std::vector<double>{0.0}, 0.5 * dt_max(cs));
    double err = 0.0;
    const Samples w = volume_weights(*c);
    for (std::size_t n = 0; n < w.size(); ++n) err += w[n] * std::abs(s1.rho.v[n] - 2.0);
    CHECK(err <= 1e-12);
}

TEST_CASE("property: mass is conserved to 1e-12 per step for random data and noise") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N(0.0, 1.0);
    const ChartPtr c = torus(24);
    const VectorField u = make_vector(c, [](const Point& x) { return std::array<double, 2>{0.3 * std::sin(2 * kPi * x[1]), 0.2}; });
    const VectorField a1 = make_vector(c, [](const Point& x) { return std::array<double, 2>{0.2 + 0.1 * std::cos(2 * kPi * x[0]), 0.0}; });
    const VectorField a2 = make_vector(c, [](const Point& x) { return std::array<double, 2>{0.0, 0.15 * std::sin(2 * kPi * x[0])}; });
    const auto cs = make_coefficients(c, u, {a1, a2});
    const double dt = 0.9 * dt_max(cs);
    Samples r(c->grid.size());
    for (auto& v : r) v = 1.0 + 0.2 * N(rng);
    auto s = initial_state(ScalarField{c, r});
    for (int k = 0; k < 50; ++k) {
        const std::vector<double> dW{std::sqrt(dt) * N(rng), std::sqrt(dt) * N(rng)};
        const auto next = ito_step(s, cs, dW, dt);
        CHECK(std::abs(next.mass - s.mass) <= 1e-12);
        CHECK(next.mass == doctest::Approx(mass_of(next.rho)).epsilon(1e-15));
        s = next;
    }
}

TEST_CASE("ito_step errors: step above dt_max and non-finite states") {
    const ChartPtr c = torus(16);
    const auto cs = make_coefficients(c, cellular(c, 0.5), {cellular(c, 0.2)});
    const auto s0 = initial_state(smooth_density(c));
    CHECK_THROWS_AS(ito_step(s0, cs, std::vector<double>{0.0}, 1.01 * dt_max(cs)), CFLViolation);
    Samples bad = s0.rho.v;
    bad[3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(ito_step(initial_state(ScalarField{c, bad}), cs, std::vector<double>{0.0}, 0.5 * dt_max(cs)),
                    NonFiniteState);
}

TEST_CASE("zero data stays exactly zero on every path") {
    const auto s = setup("torus2", 16, 0.2, 1, "generic", "zero");
    const PreparedRun run = prepare_run(s);
    for (std::uint64_t p = 0; p < 3; ++p) {
        const BrownianDriver d(run.coeffs.noises(), run.dt, s.T, s.seed, p);
        const auto last = simulate_stream(run.rho0, run.coeffs, d, {});
        for (double v : last.rho.v) CHECK(v == 0.0);
    }
}

TEST_CASE("strat_to_ito_correction: constant field on the flat circle and psi = 1") {
    const ChartPtr c = torus(256, 1);
    const double k = 0.7;
    const VectorField a = make_vector(c, [k](const Point&) { return std::array<double, 2>{k, 0.0}; });
    const ScalarField psi = make_scalar(c, [](const Point& x) { return std::sin(2 * kPi * x[0]); });
    const ScalarField corr = strat_to_ito_correction(psi, a);
    const ScalarField ref = (-4 * kPi * kPi * k * k) * psi;
    CHECK(l2_norm(corr - ref) < 1e-6);
    CHECK(l2_norm(strat_to_ito_correction(constant_scalar(c, 1.0), a)) == 0.0);
}

TEST_CASE("weak form with psi = 1 reduces to the mass balance") {
    const auto s = setup("torus2", 16, 0.25, 1, "generic", "wave");
    const PreparedRun run = prepare_run(s);
    const BrownianDriver d(run.coeffs.noises(), run.dt, s.T, s.seed);
    const Trajectory traj = simulate(run.rho0, run.coeffs, d);
    const ScalarField one = constant_scalar(run.coeffs.chart, 1.0);
    const double r = weak_form_residual(traj, one, run.coeffs, d, WeakForm::ito);
    CHECK(r <= run.steps * 1e-12);
    CHECK(r == doctest::Approx(std::abs(traj.back().mass - traj.front().mass)).epsilon(1e-6));
}

TEST_CASE("divergence-free transport without noise conserves energy within 1 percent") {
    const ChartPtr c = torus(48);
    const auto cs = make_coefficients(c, cellular(c, 0.3), {zero_vector(c)});
    const BrownianDriver d(1, 0.01, 1.0, 1);
    const ScalarField rho0 = smooth_density(c);
    const auto last = simulate_stream(rho0, cs, d, {});
    CHECK(std::abs(energy_of(last.rho) / energy_of(rho0) - 1.0) <= 0.01);
}

TEST_CASE("Lambda_i(1) computed both ways agrees") {
    const auto s = setup("torus2", 48, 1.0, 1, "generic", "wave");
    const PreparedRun run = prepare_run(s);
    for (int i = 0; i < run.coeffs.noises(); ++i)
        CHECK(l2_norm(run.coeffs.lambda1[i] - run.coeffs.lambda1_alt[i]) <= 1e-4);
}

TEST_CASE("paths are independent of the thread count") {
    const auto s = setup("torus2", 16, 0.1, 6, "generic", "wave");
    const PreparedRun run = prepare_run(s);
    auto finals = [&](int threads) {
        std::vector<Samples> out(6);
        run_paths(6, threads, [&](int p) {
            const BrownianDriver d(run.coeffs.noises(), run.dt, s.T, s.seed, static_cast<std::uint64_t>(p));
            out[p] = simulate_stream(run.rho0, run.coeffs, d, {}).rho.v;
        });
        return out;
    };
    CHECK(finals(1) == finals(3));
}

TEST_CASE("run_paths rethrows the lowest failing path") {
    try {
        run_paths(8, 3, [](int p) {
            if (p == 5 || p == 2) throw std::runtime_error("path " + std::to_string(p));
        });
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "path 2");
    }
}

TEST_CASE("constant-noise oracle: errors shrink under joint refinement") {
    auto s = setup("torus1", 32, 0.25, 4, "const", "wave");
    const OracleStudy st = transport_oracle_study(s, 2);
    CHECK(st.levels[1].mean_sup_error < st.levels[0].mean_sup_error);
    for (const auto& l : st.levels) CHECK(l.max_mass_drift_per_step <= 1e-12);
}

TEST_CASE("configuration errors") {
    auto s = setup("torus2", 16, 0.1, 1, "no-such-preset", "wave");
    CHECK_THROWS_AS(prepare_run(s), ConfigInvalid);
    s.preset = "generic";
    CHECK_THROWS_AS(test_function("fourier:x", simulation_chart(*s.atlas, 16)), ConfigInvalid);
    CHECK_THROWS_AS(BrownianDriver(0, 0.1, 1.0, 1), ConfigInvalid);
}
