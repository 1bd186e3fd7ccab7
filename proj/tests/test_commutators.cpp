#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "sce/commutators.hpp"
#include "sce/errors.hpp"
#include "sce/fixtures.hpp"

using namespace sce;

namespace {

constexpr double kPi = std::numbers::pi;

ChartPtr torus(int n, int dim = 2) {
    const Atlas a = load_fixture(dim == 2 ? "torus2" : "torus1");
    return regrid(*a.charts[0], {n, dim == 2 ? n : 1});
}

}  // namespace

TEST_CASE("constant V: every first-order commutator and C_eps vanish") {
    const ChartPtr c = torus(64);
    const ScalarField g = make_scalar(c, [](const Point& x) { return std::exp(std::sin(2 * kPi * x[0])) + std::cos(2 * kPi * x[1]); });
    const VectorField V = make_vector(c, [](const Point&) { return std::array<double, 2>{0.4, -0.3}; });
    const Mollifier m(0.08, 2);
    CHECK(dl_commutator(g, V, m).l2 < 1e-12);
    CHECK(l2_norm(second_order_commutator(g, V, m).C) < 1e-10);
}

TEST_CASE("degenerate inputs give exactly zero residuals") {
    const ChartPtr c = torus(32);
    const ScalarField zero = constant_scalar(c, 0.0);
    const VectorField V = make_vector(c, [](const Point& x) { return std::array<double, 2>{std::sin(2 * kPi * x[1]), 0.1}; });
    const Mollifier m(0.08, 2);
    const ChristoffelField G = christoffel(c);
    CHECK(dl_commutator(zero, V, m).l2 == 0.0);
    CHECK(dl_commutator(make_scalar(c, [](const Point& x) { return x[0]; }), zero_vector(c), m).l2 == 0.0);
    CHECK(second_order_commutator(zero, V, m).residual.l2 == 0.0);
    CHECK(R_decomposition(zero, V, G, m).l2 == 0.0);
}

TEST_CASE("R decomposition with constant a on a flat torus: all pieces vanish") {
    const ChartPtr c = torus(64);
    const ScalarField rho = make_scalar(c, [](const Point& x) { return 1.0 + 0.3 * std::sin(2 * kPi * x[0]); });
    const VectorField a = make_vector(c, [](const Point&) { return std::array<double, 2>{0.2, 0.1}; });
    const auto r = R_decomposition(rho, a, christoffel(c), Mollifier(0.04, 2));
    CHECK(r.l2 < 1e-10);
    CHECK(r.extra.at("rbar_l2") == 0.0);
}

TEST_CASE("1-d calibration: C_eps[1, z d_z] is 1 in the interior") {
    const Atlas a = load_fixture("interval");
    const ChartPtr c = regrid(*a.charts[0], {2001, 1});
    const ScalarField one = constant_scalar(c, 1.0);
    const VectorField V = make_vector(c, [](const Point& x) { return std::array<double, 2>{x[0], 0.0}; });
    const auto r = second_order_commutator(one, V, Mollifier(0.01, 1));
    for (std::size_t n = 0; n < c->grid.size(); ++n) {
        if (std::abs(c->grid.node(n)[0]) > 0.5) continue;
        CHECK(std::abs(r.C.v[n] - 1.0) <= 0.02);
    }
}

TEST_CASE("rate_study: exact power law, zero norms and too few points") {
    const std::vector<double> eps{0.16, 0.08, 0.04, 0.02};
    std::vector<double> norm;
    for (double e : eps) norm.push_back(3.0 * e * e);
    const RateTable t = rate_study(eps, norm);
    CHECK(t.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(t.monotone);
    CHECK(std::isnan(t.slope_so_far[0]));
    CHECK(rate_study(eps, {0, 0, 0, 0}).slope == std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(rate_study({0.1, 0.05}, {1.0, 0.5}), InsufficientPoints);
}

TEST_CASE("smooth torus fixtures: first-order commutators decay with slope at least one") {
    const auto fx = commutator_fixture(load_fixture("torus2"), 96);
    for (auto kind : {CommutatorKind::r, CommutatorKind::rt, CommutatorKind::ru, CommutatorKind::c2}) {
        std::vector<double> eps, norm;
        for (double e : default_eps_ladder()) {
            eps.push_back(e);
            norm.push_back(run_commutator(kind, fx, e).l2);
        }
        const RateTable t = rate_study(eps, norm);
        INFO(to_string(kind));
        CHECK(t.monotone);
        CHECK(t.slope >= 1.0);
    }
}

TEST_CASE("eps at or beyond the chart bound is rejected") {
    const auto fx = commutator_fixture(load_fixture("sphere"), 24);
    CHECK_THROWS_AS(run_commutator(CommutatorKind::r, fx, fx.eps_bound * 1.01), EpsilonTooLarge);
}

TEST_CASE("commutator kinds parse and print symmetrically") {
    for (auto k : {CommutatorKind::r, CommutatorKind::rt, CommutatorKind::rb, CommutatorKind::rstar, CommutatorKind::ru,
                   CommutatorKind::c2, CommutatorKind::R})
        CHECK(parse_commutator_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_commutator_kind("q"), ConfigInvalid);
}
