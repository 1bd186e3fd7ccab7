#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "sce/coefficients.hpp"
#include "sce/errors.hpp"
#include "sce/fixtures.hpp"
#include "sce/regularization.hpp"

using namespace sce;

namespace {

constexpr double kPi = std::numbers::pi;

AtlasPtr atlas_of(const std::string& name, int n) {
    return std::make_shared<const Atlas>(with_resolution(load_fixture(name), n));
}

}  // namespace

TEST_CASE("mollifier: unit mass, symmetric, nonnegative, supported in the eps ball") {
    for (int dim : {1, 2}) {
        const Mollifier m(0.08, dim);
        const Grid g = dim == 1 ? Grid::line(200, 0.0, 1.0, true) : Grid::plane({100, 100}, {0, 0}, {1, 1}, {true, true});
        const auto st = m.stencil(g);
        double s = 0.0;
        for (double w : st.w) {
            CHECK(w >= 0.0);
            s += w;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
        for (std::size_t i = 0; i < st.w.size(); ++i) CHECK(st.w[i] == st.w[st.w.size() - 1 - i]);
        CHECK(m(Point{0.081, 0.0}) == 0.0);
        CHECK(m(Point{0.03, 0.0}) == doctest::Approx(m(Point{-0.03, 0.0})));
    }
}

TEST_CASE("convolution reproduces constants and linear ramps away from faces") {
    const Grid g = Grid::line(401, -1.0, 1.0, false);
    const Mollifier m(0.05, 1);
    const Samples ramp = sample(g, [](const Point& x) { return 0.3 + 2.0 * x[0]; });
    const Samples cr = convolve(g, ramp, m);
    for (int i = 40; i < 361; ++i) CHECK(cr[i] == doctest::Approx(ramp[i]).epsilon(1e-12));
    const Grid p = Grid::plane({64, 64}, {0, 0}, {1, 1}, {true, true});
    for (double v : convolve(p, Samples(p.size(), 2.5), Mollifier(0.1, 2))) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("smoothing error of a smooth density is O(eps^2)") {
    const Grid g = Grid::line(1024, 0.0, 1.0, true);
    const Samples f = sample(g, [](const Point& x) { return std::sin(2 * kPi * x[0]); });
    std::vector<double> err;
    for (double e : {0.08, 0.04, 0.02}) {
        const Samples fe = convolve(g, f, Mollifier(e, 1));
        double s = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) s += (fe[i] - f[i]) * (fe[i] - f[i]);
        err.push_back(std::sqrt(s / f.size()));
    }
    CHECK(std::log2(err[0] / err[2]) / 2.0 >= 1.8);
}

TEST_CASE("partition of unity: single-chart torus is identically one") {
    const auto pou = make_partition(atlas_of("torus2", 16), 0.05);
    for (double w : pou.weight[0]) CHECK(w == 1.0);
}

TEST_CASE("partition of unity on the sphere sums to one at random points") {
    const auto atlas = atlas_of("sphere", 32);
    const auto pou = make_partition(atlas, 0.3);
    CHECK(pou.eps0 == doctest::Approx(0.25 * std::min(pou.eps_chart[0], pou.eps_chart[1])));
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> th(0.3, kPi - 0.3), ph(0.0, 2 * kPi);
    for (int k = 0; k < 1000; ++k) {
        const Point x{th(rng), ph(rng)};
        double s = partition_weight(pou, 0, x);
        CHECK(s >= 0.0);
        if (auto y = atlas->transition(0, 1, x)) s += partition_weight(pou, 1, *y);
        CHECK(std::abs(s - 1.0) <= 1e-6);
    }
}

TEST_CASE("partition margin too large is a coverage failure") {
    CHECK_THROWS_AS(make_partition(atlas_of("sphere", 32), 1.2), CoverageFailure);
}

TEST_CASE("localize then pullback_extend copies values into the source chart") {
    const auto atlas = atlas_of("sphere", 32);
    const auto pou = make_partition(atlas, 0.3);
    const ChartPtr c = atlas->charts[0];
    const ScalarField f = sample_scalar(c, from_ambient([](const Vec3& q) { return 1.0 + q[0] * q[1]; }));
    const LocalizedField loc = localize(f, pou, 0);
    const GlobalField gl = pullback_extend(loc, atlas);
    for (std::size_t n = 0; n < c->grid.size(); ++n) CHECK(gl.comp[0][0][n] == loc.comp[0][n]);
}

TEST_CASE("smooth_local refuses eps at or above eps_k") {
    const auto atlas = atlas_of("sphere", 32);
    const auto pou = make_partition(atlas, 0.3);
    const ScalarField f = constant_scalar(atlas->charts[0], 1.0);
    const LocalizedField loc = localize(f, pou, 0);
    CHECK_THROWS_AS(smooth_local(loc, Mollifier(pou.eps_chart[0] * 1.01, 2), &pou), EpsilonTooLarge);
}

TEST_CASE("A terms vanish on a single-chart flat torus") {
    const auto atlas = atlas_of("torus2", 32);
    const auto pou = make_partition(atlas, 0.05);
    const ChartPtr c = atlas->charts[0];
    const ScalarField rho = make_scalar(c, [](const Point& x) { return 1.0 + 0.5 * std::sin(2 * kPi * x[0]); });
    const VectorField a = make_vector(c, [](const Point& x) { return std::array<double, 2>{std::cos(2 * kPi * x[1]), 0.2}; });
    const Mollifier m(0.04, 2);
    for (const auto& [name, t] : localized_aux_terms(rho, a, a, pou, 0, &m)) {
        INFO(name);
        for (const auto& comp : t.comp)
            for (double v : comp) CHECK(v == 0.0);
    }
}
