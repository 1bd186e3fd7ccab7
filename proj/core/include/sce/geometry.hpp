#pragma once

#include <array>
#include <functional>
#include <vector>

#include "sce/atlas.hpp"
#include "sce/partition.hpp"

namespace sce {

// Chart-local fields. Components are grid samples on chart->grid; vectors and
// tensors are contravariant. In 1-d only component 0 (resp. S^{00}) is used and
// the remaining components are kept at zero.
struct ScalarField {
    ChartPtr chart;
    Samples v;
};

struct VectorField {
    ChartPtr chart;
    std::array<Samples, 2> c;
};

// S^{ij} stored once per unordered pair, indexed by sym(i, j).
struct SymTensor2Field {
    ChartPtr chart;
    std::array<Samples, 3> s;
};

// g[k][sym(i, j)] = Gamma^k_{ij}; symmetric in (i, j) by storage.
struct ChristoffelField {
    ChartPtr chart;
    std::array<std::array<Samples, 3>, 2> g;
};

// One scalar per chart, all describing the same function on the manifold.
struct GlobalScalar {
    AtlasPtr atlas;
    std::vector<ScalarField> charts;
};

ScalarField make_scalar(const ChartPtr& c, const std::function<double(const Point&)>& f);
ScalarField constant_scalar(const ChartPtr& c, double value);
VectorField make_vector(const ChartPtr& c, const std::function<std::array<double, 2>(const Point&)>& f);
VectorField zero_vector(const ChartPtr& c);
GlobalScalar make_global(const AtlasPtr& a, const std::function<double(const Chart&, const Point&)>& f);

// Throws AtlasMismatch unless both fields live on the same chart layout.
void require_same_chart(const ChartPtr& a, const ChartPtr& b);

// Pointwise algebra.
ScalarField operator+(const ScalarField& a, const ScalarField& b);
ScalarField operator-(const ScalarField& a, const ScalarField& b);
ScalarField operator*(const ScalarField& a, const ScalarField& b);
ScalarField operator*(double s, const ScalarField& a);
VectorField operator+(const VectorField& a, const VectorField& b);
VectorField operator-(const VectorField& a, const VectorField& b);
VectorField operator*(const ScalarField& f, const VectorField& X);
SymTensor2Field operator*(const ScalarField& f, const SymTensor2Field& S);
ScalarField map_values(const ScalarField& a, const std::function<double(double)>& fn);

// Partial derivative along a chart axis with the chart's stencil.
ScalarField partial(const ScalarField& f, int axis);
// X(psi) = X^i d_i psi.
ScalarField apply(const VectorField& X, const ScalarField& psi);
// S(df, .)^i = S^{ij} d_j f.
VectorField contract(const SymTensor2Field& S, const ScalarField& f);

// Gamma^k_{ij} = 1/2 h^{kl}(d_i h_{jl} + d_j h_{il} - d_l h_{ij}). The metric
// derivatives are the analytic ones when the chart carries a closed-form model.
ChristoffelField christoffel(const ChartPtr& chart);
ChristoffelField christoffel(const MetricField& metric);

// Div_h X = d_j X^j + Gamma^j_{kj} X^k. The Gamma term is skipped on
// unit-volume charts, where it vanishes.
ScalarField div_h(const VectorField& X, const ChristoffelField& G);
// (Div_h S)^i = d_j S^{ij} + Gamma^i_{jk} S^{kj} + Gamma^j_{jk} S^{ik}.
VectorField div_h(const SymTensor2Field& S, const ChristoffelField& G);
ScalarField div2_h(const SymTensor2Field& S, const ChristoffelField& G);

// hat(X)^{jk} = X^j X^k.
SymTensor2Field hat(const VectorField& X);

// (nabla_X X)^k = X^i d_i X^k + Gamma^k_{ij} X^i X^j.
VectorField covariant_self(const VectorField& X, const ChristoffelField& G);

// Covariant Hessian (nabla^2 psi)_{ij} = d_i d_j psi - Gamma^k_{ij} d_k psi.
std::array<Samples, 3> covariant_hessian(const ScalarField& psi, const ChristoffelField& G);

struct SecondOrderAction {
    ScalarField xx;       // X(X(psi))
    ScalarField hessian;  // (nabla^2 psi)(X, X)
    ScalarField drift;    // (nabla_X X)(psi)
};
SecondOrderAction second_order_action(const VectorField& X, const ScalarField& psi, const ChristoffelField& G);
// X(X(psi)) assembled as hessian + drift.
ScalarField second_order(const VectorField& X, const ScalarField& psi, const ChristoffelField& G);

enum class LambdaMode { direct, alternative };
// direct: Div_h(Div_h(psi a) a); alternative: Div_h^2(psi hat(a)) - Div_h(psi nabla_a a).
ScalarField lambda_op(const ScalarField& psi, const VectorField& a, const ChristoffelField& G, LambdaMode mode);

// Integral over one chart of f dV_h (composite trapezoid).
double integrate_chart(const ScalarField& f);
// sqrt(int f^2 dV_h) over one chart restricted to a node mask (empty = all).
double l2_norm(const ScalarField& f, const Samples& mask = {});
// Sum over charts of int U_k f dV_h.
double integrate(const GlobalScalar& f, const PartitionOfUnity& pou);

}  // namespace sce
