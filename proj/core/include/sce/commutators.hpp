#pragma once

#include <map>
#include <string>
#include <vector>

#include "sce/coefficients.hpp"
#include "sce/regularization.hpp"

namespace sce {

// r: D(rho a), rt: D(rho nabla_a a), rb: D(rho Gamma a a), rstar: D(rho a(U) a),
// ru: D(rho u), c2: second-order limit residual, R: the R decomposition identity.
enum class CommutatorKind { r, rt, rb, rstar, ru, c2, R };

std::string to_string(CommutatorKind k);
CommutatorKind parse_commutator_kind(const std::string& s);  // ConfigInvalid on unknown

struct CommutatorResult {
    CommutatorKind kind = CommutatorKind::r;
    double eps = 0.0;
    ScalarField residual;
    double l2 = 0.0;
    double l1 = 0.0;  // L1 norm: the surrogate reported for ru
    std::map<std::string, double> extra;
};

// All commutators are chart-local and use Euclidean derivatives, which is the
// form Div_h takes on unit-volume charts. `eps_bound` is eps_k of the chart
// (EpsilonTooLarge unless moll.eps() < eps_bound).

// d_l (g V^l)_eps - d_l (g_eps V^l).
CommutatorResult dl_commutator(const ScalarField& g, const VectorField& V, const Mollifier& moll,
                               double eps_bound = 1e300);

// The Christoffel vector W^l = Gamma^l_{mj} a^m a^j.
VectorField christoffel_vector(const VectorField& a, const ChristoffelField& G);

// dl_commutator with V = W (the rbar kind).
CommutatorResult christoffel_commutator(const ScalarField& rho, const VectorField& a, const ChristoffelField& G,
                                        const Mollifier& moll, double eps_bound = 1e300);

struct SecondOrderResult {
    ScalarField C;                // C_eps[g, V]
    ScalarField limit;            // 1/2 ((div V)^2 + d_i V^j d_j V^i) g_eps
    CommutatorResult residual;    // C - limit, kind c2
};

// C_eps = 1/2 d_ij (V^i V^j g)_eps - V^i d_ij (V^j g)_eps + 1/2 V^i V^j d_ij g_eps.
SecondOrderResult second_order_commutator(const ScalarField& g, const VectorField& V, const Mollifier& moll,
                                          double eps_bound = 1e300);

// Left side from the definition d_ml((rho a a)_eps - rho_eps a a) + rbar,
// right side 2G + 2a(r) + rbar with G = C - 1/2 rho_eps (div a)^2
// - 1/2 rho_eps d_l a^m d_m a^l. residual = left - right; extra holds the
// L2 norms of rbar, G, a(r) and of the left side.
CommutatorResult R_decomposition(const ScalarField& rho, const VectorField& a, const ChristoffelField& G,
                                 const Mollifier& moll, double eps_bound = 1e300);

struct RateTable {
    std::vector<double> eps;
    std::vector<double> norm;
    std::vector<double> slope_so_far;  // fit over the first k+1 rows (NaN for k = 0)
    double slope = 0.0;                // +inf when every norm is zero
    bool monotone = true;              // non-increasing as eps decreases
};

// Least-squares slope of log(norm) against log(eps). Zero norms are excluded
// from the fit. Throws InsufficientPoints below 3 points.
RateTable rate_study(const std::vector<double>& eps, const std::vector<double>& norm);

const std::vector<double>& default_eps_ladder();

// A ready-made smooth fixture for one commutator kind: a localized density, the
// fields it needs and the chart eps bound. On the sphere it lives on a window
// of the unit-volume north chart with spacing 1/resolution; on tori it uses the
// whole chart with `resolution` nodes per axis.
struct CommutatorFixture {
    ChartPtr chart;
    ChristoffelField gamma;
    ScalarField rho;  // already localized (rho_k)
    ScalarField rho_aU;  // rho a(U_k), for rstar
    VectorField a, u;
    double eps_bound = 1e300;
};
CommutatorFixture commutator_fixture(const Atlas& atlas, int resolution, bool kink = false);

// One row per eps for a kind on a fixture.
CommutatorResult run_commutator(CommutatorKind kind, const CommutatorFixture& fx, double eps);

}  // namespace sce
