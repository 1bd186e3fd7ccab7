#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>

#include "sce/errors.hpp"
#include "sce/fixtures.hpp"
#include "sce/renormalization.hpp"

using namespace sce;

namespace {

constexpr double kPi = std::numbers::pi;

ChartPtr torus(int n) { return regrid(*load_fixture("torus2").charts[0], {n, n}); }

SimulationSetup setup(int res, double T, int paths, const std::string& preset, const std::string& rho0) {
    SimulationSetup s;
    s.atlas = std::make_shared<const Atlas>(load_fixture("torus2"));
    s.resolution = res;
    s.T = T;
    s.paths = paths;
    s.seed = 3;
    s.preset = preset;
    s.rho0 = rho0;
    return s;
}

}  // namespace

TEST_CASE("quintic chi: identity below 1, constant 2 above 2, C2 joints, increasing") {
    const ChiProfile chi = quintic_chi();
    CHECK(chi.chi(0.5) == 0.5);
    CHECK(chi.chi(3.0) == 2.0);
    CHECK(chi.chi(1.0) == doctest::Approx(1.0));
    CHECK(chi.chi(2.0) == doctest::Approx(2.0));
    CHECK(chi.d1(1.0) == doctest::Approx(1.0));
    CHECK(chi.d1(2.0) == doctest::Approx(0.0));
    CHECK(chi.d2(1.0) == doctest::Approx(0.0));
    CHECK(chi.d2(2.0) == doctest::Approx(0.0));
    for (double s = 1.0; s < 2.0; s += 0.01) CHECK(chi.d1(s) >= 0.0);
    CHECK(chi.A0 == doctest::Approx(1.512).epsilon(1e-3));
}

TEST_CASE("F_mu derivatives match central differences") {
    for (double mu : {1.0, 16.0, 256.0}) {
        const RenormFunction F = fmu_function(quintic_chi(), mu);
        const double r = 3.0 * std::sqrt(mu);
        INFO("mu = " << mu);
        CHECK(check_derivatives(F, -r, r).ok);
    }
}

TEST_CASE("F_mu suite: every bound holds on the probe grid") {
    for (double mu : {1.0, 16.0, 256.0}) {
        const FmuReport rep = fmu_suite(quintic_chi(), mu);
        INFO("mu = " << mu);
        CHECK(rep.ok);
        for (const auto& row : rep.rows) CHECK(row.worst_margin >= 0.0);
        CHECK(rep.C_chi > 0.0);
    }
}

TEST_CASE("F_mu error decays monotonically in mu and both errors vanish once mu >= xi^2") {
    const std::vector<double> mus{1, 4, 16, 64, 256, 1024};
    const std::vector<double> xis{0.5, 1.5, 3.0, 10.0};
    const auto rows = fmu_limits(quintic_chi(), mus, xis);
    for (const auto& row : rows) {
        INFO("xi = " << row.xi);
        for (std::size_t m = 1; m < mus.size(); ++m) CHECK(row.F_error[m] <= row.F_error[m - 1]);
        for (std::size_t m = 0; m < mus.size(); ++m)
            if (mus[m] >= row.xi * row.xi) {
                CHECK(row.F_error[m] == 0.0);
                CHECK(row.G_error[m] <= 1e-12 * row.xi * row.xi);
            }
    }
}

TEST_CASE("G_F_mu is -2 mu in the truncated range, so its error grows with mu there") {
    for (double mu : {1.0, 4.0}) {
        const RenormFunction F = fmu_function(quintic_chi(), mu);
        const double xi = 10.0;  // xi^2 >= 2 mu for both
        CHECK(gf(F, xi) == doctest::Approx(-2.0 * mu));
    }
    const auto rows = fmu_limits(quintic_chi(), {1, 4}, {10.0});
    CHECK(rows[0].G_error[1] > rows[0].G_error[0]);
}

TEST_CASE("linear F has G identically zero and collapses the renormalized form") {
    const RenormFunction F = linear_function();
    for (double x : {-3.0, 0.0, 0.7, 40.0}) CHECK(gf(F, x) == 0.0);
    const auto r = renorm_refinement(setup(16, 0.1, 2, "generic", "wave"), F, "fourier:1", 2);
    CHECK(r.linear_collapse_exact);
}

TEST_CASE("unbounded renormalization functions are refused by the accumulator") {
    const auto s = setup(16, 0.1, 1, "generic", "wave");
    const PreparedRun run = prepare_run(s);
    CHECK_THROWS_AS(renorm_accumulator(run.coeffs, constant_scalar(run.coeffs.chart, 1.0), quadratic_function()),
                    UnboundedRenormFunction);
}

TEST_CASE("custom spline chi: knots validated, file loader, C1 joints") {
    CHECK_THROWS_AS(spline_chi({{1.5, 1.2}, {1.4, 1.3}}), ConfigInvalid);
    CHECK_THROWS_AS(spline_chi({{1.5, 2.5}}), ConfigInvalid);
    const auto p = std::filesystem::temp_directory_path() / "sce_chi_knots.txt";
    {
        std::ofstream out(p);
        out << "# s chi\n1.3 1.28\n1.6 1.55\n";
    }
    const ChiProfile chi = load_spline_chi(p);
    CHECK(chi.chi(1.3) == doctest::Approx(1.28));
    CHECK(chi.d1(1.0) == doctest::Approx(1.0));
    CHECK(chi.d1(2.0) == doctest::Approx(0.0).epsilon(1e-12));
    const RenormFunction F = parse_renorm_function("custom-spline:" + p.string() + ":9");
    CHECK(F.certificate.has_value());
    std::filesystem::remove(p);
}

TEST_CASE("renormalization identities hold pointwise on the grid") {
    const ChartPtr c = torus(128);
    const ScalarField rho = make_scalar(c, [](const Point& x) { return 1.2 + 0.8 * std::sin(2 * kPi * x[0]) * std::cos(2 * kPi * x[1]); });
    const VectorField a = make_vector(c, [](const Point& x) {
        return std::array<double, 2>{0.3 + 0.1 * std::sin(2 * kPi * x[1]), 0.2 * std::cos(2 * kPi * x[0])};
    });
    const auto r = cancellation_checks(rho, a, fmu_function(quintic_chi(), 4.0), christoffel(c));
    CHECK(r.lambda_identity <= 1e-4);
    CHECK(r.q_identity <= 1e-4);
}

TEST_CASE("C_bar vanishes for divergence-free velocity and constant noise") {
    const auto s = setup(16, 1.0, 1, "rotation-const", "wave");
    CHECK(cbar(prepare_run(s).coeffs, 1.0) <= 1e-12);
}

TEST_CASE("a-priori check refuses small Monte Carlo budgets") {
    CHECK_THROWS_AS(apriori_check(setup(16, 0.1, 16, "generic", "wave")), MCBudgetTooSmall);
}

TEST_CASE("uniqueness surrogate: zero data, linearity and the difference bound") {
    const UniquenessReport u = uniqueness_check(setup(16, 0.2, 8, "generic", "wave"));
    CHECK(u.zero_max == 0.0);
    CHECK(u.linearity_error <= 1e-10);
    CHECK(u.ok);
}
