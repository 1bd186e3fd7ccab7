#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "sce/atlas.hpp"
#include "sce/errors.hpp"
#include "sce/fixtures.hpp"
#include "sce/geometry.hpp"
#include "sce/harness.hpp"

using namespace sce;

namespace {

constexpr double kPi = std::numbers::pi;

ChartPtr torus_chart(const std::string& name, int n) {
    const Atlas a = load_fixture(name);
    return regrid(*a.charts[0], {n, a.dim == 2 ? n : 1});
}

// Random smooth periodic fields: low Fourier modes with seeded coefficients.
struct RandomTrig {
    std::array<double, 6> c{};
    explicit RandomTrig(std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (auto& x : c) x = u(rng);
    }
    double operator()(const Point& x) const {
        const double s = 2.0 * kPi * x[0], t = 2.0 * kPi * x[1];
        return c[0] + c[1] * std::sin(s) + c[2] * std::cos(t) + c[3] * std::sin(s + t) + c[4] * std::cos(s - 2 * t) +
               c[5] * std::sin(2 * s);
    }
};

}  // namespace

TEST_CASE("fourth-order centred derivative converges at rate 4 on a periodic grid") {
    double prev = 0.0;
    for (int n : {32, 64, 128}) {
        const Grid g = Grid::line(n, 0.0, 1.0, true);
        const Samples f = sample(g, [](const Point& x) { return std::sin(2 * kPi * x[0]); });
        const Samples df = diff(g, f, 0);
        double err = 0.0;
        for (int i = 0; i < n; ++i) err = std::max(err, std::abs(df[i] - 2 * kPi * std::cos(2 * kPi * g.x(0, i))));
        if (prev > 0.0) CHECK(prev / err > 14.0);
        prev = err;
    }
}

TEST_CASE("trapezoid weights integrate constants to the box volume") {
    const Grid g = Grid::plane({17, 9}, {0.0, -1.0}, {2.0, 1.0}, {false, true});
    CHECK(trapezoid(g, Samples(g.size(), 1.0)) == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("sphere polar metric: determinant and Christoffel symbols match closed forms") {
    const Atlas a = with_resolution(load_fixture("sphere"), 32);
    const ChartPtr c = a.charts[0];
    const ChristoffelField G = christoffel(c);
    for (std::size_t n = 0; n < c->grid.size(); n += 37) {
        const double th = c->grid.node(n)[0];
        CHECK(c->metric.det[n] == doctest::Approx(std::sin(th) * std::sin(th)).epsilon(1e-14));
        CHECK(G.g[0][sym(1, 1)][n] == doctest::Approx(-std::sin(th) * std::cos(th)).epsilon(1e-12));
        CHECK(G.g[1][sym(0, 1)][n] == doctest::Approx(std::cos(th) / std::sin(th)).epsilon(1e-12));
        CHECK(G.g[0][sym(0, 0)][n] == 0.0);
    }
}

TEST_CASE("Christoffel symbols vanish on a flat torus") {
    const ChristoffelField G = christoffel(torus_chart("torus2", 16));
    for (const auto& gk : G.g)
        for (const auto& s : gk)
            for (double v : s) CHECK(v == 0.0);
}

TEST_CASE("Div_h of a Killing field on the sphere vanishes to stencil accuracy") {
    const Atlas a = with_resolution(load_fixture("sphere"), 128);
    const ChartPtr c = a.charts[0];
    // d_phi is a rotation about the chart axis: divergence free.
    const VectorField X = make_vector(c, [](const Point&) { return std::array<double, 2>{0.0, 1.0}; });
    CHECK(l2_norm(div_h(X, christoffel(c)), interior_mask(c->grid, 8)) < 1e-12);
    const VectorField Y = make_vector(c, [](const Point& x) { return std::array<double, 2>{std::sin(x[1]), 0.0}; });
    // Div (sin phi d_theta) = sin phi cot theta.
    const ScalarField d = div_h(Y, christoffel(c));
    const ScalarField ref = make_scalar(c, [](const Point& x) { return std::sin(x[1]) * std::cos(x[0]) / std::sin(x[0]); });
    CHECK(l2_norm(d - ref, interior_mask(c->grid, 8)) < 1e-6);
}

TEST_CASE("property: geometric identity and both Lambda spellings agree for random fields") {
    std::mt19937_64 rng(20261016);
    const ChartPtr c = torus_chart("torus2", 96);
    const ChristoffelField G = christoffel(c);
    for (int draw = 0; draw < 8; ++draw) {
        const RandomTrig p(rng), a0(rng), a1(rng);
        const ScalarField psi = make_scalar(c, p);
        const VectorField X = make_vector(c, [&](const Point& x) {
            return std::array<double, 2>{0.1 * a0(x), 0.1 * a1(x)};
        });
        const auto act = second_order_action(X, psi, G);
        CHECK(l2_norm(act.xx - act.hessian - act.drift) <= 1e-3 * l2_norm(act.xx));
        const ScalarField d = lambda_op(psi, X, G, LambdaMode::direct);
        const ScalarField t = lambda_op(psi, X, G, LambdaMode::alternative);
        CHECK(l2_norm(d - t) <= 1e-3 * l2_norm(d));
    }
}

TEST_CASE("property: Lambda(1) of a constant field is zero and Lambda is linear") {
    const ChartPtr c = torus_chart("torus2", 32);
    const ChristoffelField G = christoffel(c);
    const VectorField a = make_vector(c, [](const Point&) { return std::array<double, 2>{0.3, -0.2}; });
    CHECK(l2_norm(lambda_op(constant_scalar(c, 1.0), a, G, LambdaMode::direct)) == 0.0);
    const ScalarField f = make_scalar(c, [](const Point& x) { return std::sin(2 * kPi * x[0]); });
    const ScalarField g = make_scalar(c, [](const Point& x) { return std::cos(2 * kPi * x[1]); });
    const ScalarField lhs = lambda_op(2.0 * f + g, a, G, LambdaMode::direct);
    const ScalarField rhs = 2.0 * lambda_op(f, a, G, LambdaMode::direct) + lambda_op(g, a, G, LambdaMode::direct);
    CHECK(l2_norm(lhs - rhs) < 1e-11);
}

TEST_CASE("geometry identity residuals shrink under resolution doubling") {
    for (const char* m : {"torus1", "torus2", "sphere"}) {
        const auto r1 = geometry_identities(load_fixture(m), 64);
        const auto r2 = geometry_identities(load_fixture(m), 128);
        for (std::size_t i = 0; i < r1.size(); ++i) {
            INFO(m << " " << r1[i].identity);
            CHECK(r1[i].residual / r2[i].residual >= 3.0);
        }
    }
}

TEST_CASE("unit-volume atlas of the sphere has unit determinant and traceless Christoffels") {
    const Atlas uv = build_unit_volume_atlas(with_resolution(load_fixture("sphere"), 48));
    CHECK(uv.unit_volume);
    for (const auto& c : uv.charts) {
        const ChristoffelField G = christoffel(c);
        for (std::size_t n = 0; n < c->grid.size(); ++n) {
            CHECK(std::abs(c->metric.det[n] - 1.0) <= 1e-6);
            for (int j = 0; j < 2; ++j) CHECK(std::abs(G.g[0][sym(0, j)][n] + G.g[1][sym(1, j)][n]) <= 1e-6);
        }
    }
}

TEST_CASE("sphere transitions round-trip and partition sums to one") {
    const Atlas a = with_resolution(load_fixture("sphere"), 32);
    const Point x{1.1, 0.7};
    const auto y = a.transition(0, 1, x);
    REQUIRE(y);
    const auto z = a.transition(1, 0, *y);
    REQUIRE(z);
    CHECK((*z)[0] == doctest::Approx(x[0]).epsilon(1e-12));
    CHECK((*z)[1] == doctest::Approx(x[1]).epsilon(1e-12));
    CHECK(partition_sum_error(a, 0.3) < 1e-12);
}

TEST_CASE("errors: resolution below 8, mismatched charts, malformed fixtures") {
    CHECK_THROWS_AS(with_resolution(load_fixture("torus2"), 4), ConfigInvalid);
    const ScalarField f = constant_scalar(torus_chart("torus2", 16), 1.0);
    const ScalarField g = constant_scalar(torus_chart("torus2", 32), 1.0);
    CHECK_THROWS_AS(f + g, AtlasMismatch);
    CHECK_THROWS_AS(parse_fixture("manifold x\ndim 3\n"), FixtureParseError);
    CHECK_THROWS_AS(parse_fixture("manifold x\ndim 1\nchart A\n  box 0 1\n  nodes 16\nend\n"), FixtureParseError);
    CHECK_THROWS_AS(load_fixture("no-such-fixture"), FixtureParseError);
}

TEST_CASE("little-endian double files round-trip") {
    const auto p = std::filesystem::temp_directory_path() / "sce_f64_roundtrip.bin";
    const std::vector<double> v{1.0, -2.5, 1e-300, 3.141592653589793};
    write_f64_le(p, v);
    CHECK(read_f64_le(p) == v);
    std::filesystem::remove(p);
}
