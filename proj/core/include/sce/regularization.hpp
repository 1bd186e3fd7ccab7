#pragma once

#include <map>
#include <string>
#include <vector>

#include "sce/geometry.hpp"
#include "sce/partition.hpp"

namespace sce {

// Standard bump exp(-1/(1-|z|^2)) on the open unit ball, rescaled to radius eps
// and normalized to unit mass.
class Mollifier {
public:
    Mollifier(double eps, int dim);
    double eps() const { return eps_; }
    int dim() const { return dim_; }
    // Continuous phi_eps(z).
    double operator()(const Point& z) const;
    // Node weights on a grid with the given spacings, renormalized to sum to
    // exactly 1 so that constants are reproduced to rounding. Index layout:
    // (2 r0 + 1) x (2 r1 + 1), row-major.
    struct Stencil {
        int r0 = 0, r1 = 0;
        std::vector<double> w;
    };
    Stencil stencil(const Grid& g) const;

private:
    double eps_;
    int dim_;
    double norm_;  // integral of the profile over the unit ball
};

// eps_k = margin for charts with a non-periodic axis, +inf for fully periodic
// charts; eps0 = eps_k_min / 4. Throws CoverageFailure if the bump sum falls
// below 1e-8 anywhere.
PartitionOfUnity make_partition(const AtlasPtr& atlas, double margin);
// U_k at an arbitrary point of chart k (0 outside the chart).
double partition_weight(const PartitionOfUnity& pou, int chart, const Point& x);

enum class Rank { scalar, vector, sym2 };

struct LocalizedField {
    int chart = 0;
    ChartPtr chart_ptr;
    Rank rank = Rank::scalar;
    std::vector<Samples> comp;  // 1, 2 or 3 components
    Samples support;  // 1 on nodes of the declared support, else 0

    ScalarField scalar() const { return {chart_ptr, comp.at(0)}; }
    VectorField vector() const { return {chart_ptr, {comp.at(0), comp.at(1)}}; }
    SymTensor2Field tensor() const { return {chart_ptr, {comp.at(0), comp.at(1), comp.at(2)}}; }
};

// Samples of a global field pulled back to every chart: comp[chart][component].
struct GlobalField {
    AtlasPtr atlas;
    Rank rank = Rank::scalar;
    std::vector<std::vector<Samples>> comp;

    GlobalScalar scalar() const;
};

LocalizedField localize(const ScalarField& f, const PartitionOfUnity& pou, int chart);
LocalizedField localize(const VectorField& f, const PartitionOfUnity& pou, int chart);
LocalizedField localize(const SymTensor2Field& f, const PartitionOfUnity& pou, int chart);
// Wraps a chart-local field with support = its nonzero nodes.
LocalizedField as_localized(const ScalarField& f, int chart = 0);
LocalizedField as_localized(const VectorField& f, int chart = 0);

// Componentwise discrete convolution with the node stencil of `moll`. Periodic
// axes wrap; on other axes the field must vanish within eps of the boundary.
Samples convolve(const Grid& g, const Samples& f, const Mollifier& moll);

// Requires moll.eps() < eps_k (EpsilonTooLarge). With no partition the bound
// is the chart's own: eps below half of every periodic extent.
LocalizedField smooth_local(const LocalizedField& f, const Mollifier& moll, const PartitionOfUnity* pou = nullptr);

// Transports a chart-local field to every chart of the atlas (cubic
// interpolation through the transition maps, components transformed by the
// transition Jacobian), zero outside the source chart. The source chart
// itself receives an exact copy. Throws SupportViolation when the support
// reaches within two nodes of a non-periodic boundary.
GlobalField pullback_extend(const LocalizedField& f, const AtlasPtr& atlas);

// rho_eps = sum_k L_k (U_k rho)_eps. Requires eps < eps0.
GlobalScalar reconstruct_global(const GlobalScalar& rho, const PartitionOfUnity& pou, const Mollifier& moll);

// The partition-of-unity terms on chart k:
//   A1 = rho a(U_k), A2 = rho (nabla^2 U_k)(a, a), A3 = rho (nabla_a a)(U_k),
//   A4 = rho a(U_k) a, A_u = rho u(U_k), V = rho_k Gamma^l_{mj} a^m a^j,
// and, when moll is given, Vbar = Gamma^l_{mj} (rho_k a^m a^j)_eps.
std::map<std::string, LocalizedField> localized_aux_terms(const ScalarField& rho, const VectorField& a,
                                                          const VectorField& u, const PartitionOfUnity& pou, int chart,
                                                          const Mollifier* moll = nullptr);

}  // namespace sce
