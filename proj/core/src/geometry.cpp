#include "sce/geometry.hpp"

#include <cmath>

#include "sce/errors.hpp"

namespace sce {

namespace {

std::size_t nodes(const ChartPtr& c) { return c->grid.size(); }

Samples zeros(const ChartPtr& c) { return Samples(nodes(c), 0.0); }

}  // namespace

void require_same_chart(const ChartPtr& a, const ChartPtr& b) {
    if (!a || !b) throw AtlasMismatch("field has no chart");
    if (a == b) return;
    if (a->id != b->id || !a->grid.same_layout(b->grid)) throw AtlasMismatch("fields live on different charts");
}

ScalarField make_scalar(const ChartPtr& c, const std::function<double(const Point&)>& f) {
    return {c, sample(c->grid, f)};
}

ScalarField constant_scalar(const ChartPtr& c, double value) { return {c, Samples(nodes(c), value)}; }

VectorField make_vector(const ChartPtr& c, const std::function<std::array<double, 2>(const Point&)>& f) {
    VectorField X{c, {zeros(c), zeros(c)}};
    for (std::size_t k = 0; k < nodes(c); ++k) {
        const auto v = f(c->grid.node(k));
        X.c[0][k] = v[0];
        if (c->dim() == 2) X.c[1][k] = v[1];
    }
    return X;
}

VectorField zero_vector(const ChartPtr& c) { return {c, {zeros(c), zeros(c)}}; }

GlobalScalar make_global(const AtlasPtr& a, const std::function<double(const Chart&, const Point&)>& f) {
    GlobalScalar g{a, {}};
    for (const auto& c : a->charts) g.charts.push_back(make_scalar(c, [&](const Point& x) { return f(*c, x); }));
    return g;
}

ScalarField operator+(const ScalarField& a, const ScalarField& b) {
    require_same_chart(a.chart, b.chart);
    return {a.chart, add(a.v, b.v)};
}
ScalarField operator-(const ScalarField& a, const ScalarField& b) {
    require_same_chart(a.chart, b.chart);
    return {a.chart, sub(a.v, b.v)};
}
ScalarField operator*(const ScalarField& a, const ScalarField& b) {
    require_same_chart(a.chart, b.chart);
    return {a.chart, mul(a.v, b.v)};
}
ScalarField operator*(double s, const ScalarField& a) { return {a.chart, scale(a.v, s)}; }
VectorField operator+(const VectorField& a, const VectorField& b) {
    require_same_chart(a.chart, b.chart);
    return {a.chart, {add(a.c[0], b.c[0]), add(a.c[1], b.c[1])}};
}
VectorField operator-(const VectorField& a, const VectorField& b) {
    require_same_chart(a.chart, b.chart);
    return {a.chart, {sub(a.c[0], b.c[0]), sub(a.c[1], b.c[1])}};
}
VectorField operator*(const ScalarField& f, const VectorField& X) {
    require_same_chart(f.chart, X.chart);
    return {X.chart, {mul(f.v, X.c[0]), mul(f.v, X.c[1])}};
}
SymTensor2Field operator*(const ScalarField& f, const SymTensor2Field& S) {
    require_same_chart(f.chart, S.chart);
    return {S.chart, {mul(f.v, S.s[0]), mul(f.v, S.s[1]), mul(f.v, S.s[2])}};
}

ScalarField map_values(const ScalarField& a, const std::function<double(double)>& fn) {
    ScalarField out{a.chart, a.v};
    for (auto& x : out.v) x = fn(x);
    return out;
}

ScalarField partial(const ScalarField& f, int axis) {
    if (axis >= f.chart->dim()) return {f.chart, zeros(f.chart)};
    return {f.chart, diff(f.chart->grid, f.v, axis)};
}

ScalarField apply(const VectorField& X, const ScalarField& psi) {
    require_same_chart(X.chart, psi.chart);
    const int d = X.chart->dim();
    Samples out(nodes(X.chart), 0.0);
    for (int i = 0; i < d; ++i) {
        const Samples di = diff(psi.chart->grid, psi.v, i);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += X.c[i][k] * di[k];
    }
    return {X.chart, std::move(out)};
}

VectorField contract(const SymTensor2Field& S, const ScalarField& f) {
    require_same_chart(S.chart, f.chart);
    const int d = S.chart->dim();
    VectorField out = zero_vector(S.chart);
    for (int j = 0; j < d; ++j) {
        const Samples dj = diff(f.chart->grid, f.v, j);
        for (int i = 0; i < d; ++i)
            for (std::size_t k = 0; k < dj.size(); ++k) out.c[i][k] += S.s[sym(i, j)][k] * dj[k];
    }
    return out;
}

ChristoffelField christoffel(const MetricField& m) {
    const int d = m.grid.dim;
    const std::size_t N = m.grid.size();
    ChristoffelField G;
    for (auto& gk : G.g)
        for (auto& c : gk) c.assign(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        // Lowered symbols [ij, l] = 1/2 (d_i h_jl + d_j h_il - d_l h_ij).
        double low[2][2][2] = {};
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                for (int l = 0; l < d; ++l)
                    low[i][j][l] = 0.5 * (m.dh[i][sym(j, l)][n] + m.dh[j][sym(i, l)][n] - m.dh[l][sym(i, j)][n]);
        for (int k = 0; k < d; ++k)
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) {
                    double s = 0.0;
                    for (int l = 0; l < d; ++l) s += m.hinv[sym(k, l)][n] * low[i][j][l];
                    G.g[k][sym(i, j)][n] = s;
                }
    }
    return G;
}

ChristoffelField christoffel(const ChartPtr& chart) {
    ChristoffelField G = christoffel(chart->metric);
    G.chart = chart;
    return G;
}

ScalarField div_h(const VectorField& X, const ChristoffelField& G) {
    require_same_chart(X.chart, G.chart);
    const int d = X.chart->dim();
    const Grid& g = X.chart->grid;
    Samples out(g.size(), 0.0);
    for (int j = 0; j < d; ++j) axpy(out, 1.0, diff(g, X.c[j], j));
    if (!X.chart->unit_volume) {
        for (std::size_t n = 0; n < out.size(); ++n)
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k) out[n] += G.g[j][sym(k, j)][n] * X.c[k][n];
    }
    return {X.chart, std::move(out)};
}

VectorField div_h(const SymTensor2Field& S, const ChristoffelField& G) {
    require_same_chart(S.chart, G.chart);
    const int d = S.chart->dim();
    const Grid& g = S.chart->grid;
    VectorField out = zero_vector(S.chart);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) axpy(out.c[i], 1.0, diff(g, S.s[sym(i, j)], j));
    for (std::size_t n = 0; n < g.size(); ++n)
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k)
                    s += G.g[i][sym(j, k)][n] * S.s[sym(k, j)][n] + G.g[j][sym(j, k)][n] * S.s[sym(i, k)][n];
            out.c[i][n] += s;
        }
    return out;
}

ScalarField div2_h(const SymTensor2Field& S, const ChristoffelField& G) { return div_h(div_h(S, G), G); }

SymTensor2Field hat(const VectorField& X) {
    SymTensor2Field S{X.chart, {mul(X.c[0], X.c[0]), mul(X.c[0], X.c[1]), mul(X.c[1], X.c[1])}};
    return S;
}

VectorField covariant_self(const VectorField& X, const ChristoffelField& G) {
    require_same_chart(X.chart, G.chart);
    const int d = X.chart->dim();
    VectorField out = zero_vector(X.chart);
    for (int k = 0; k < d; ++k) out.c[k] = apply(X, ScalarField{X.chart, X.c[k]}).v;
    for (std::size_t n = 0; n < nodes(X.chart); ++n)
        for (int k = 0; k < d; ++k) {
            double s = 0.0;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) s += G.g[k][sym(i, j)][n] * X.c[i][n] * X.c[j][n];
            out.c[k][n] += s;
        }
    return out;
}

std::array<Samples, 3> covariant_hessian(const ScalarField& psi, const ChristoffelField& G) {
    require_same_chart(psi.chart, G.chart);
    const int d = psi.chart->dim();
    const Grid& g = psi.chart->grid;
    std::array<Samples, 2> dpsi{diff(g, psi.v, 0), d == 2 ? diff(g, psi.v, 1) : Samples(g.size(), 0.0)};
    std::array<Samples, 3> H{Samples(g.size(), 0.0), Samples(g.size(), 0.0), Samples(g.size(), 0.0)};
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            // Compose first differences so the Hessian matches D_i D_j used elsewhere.
            H[sym(i, j)] = diff(g, dpsi[j], i);
            for (std::size_t n = 0; n < g.size(); ++n)
                for (int k = 0; k < d; ++k) H[sym(i, j)][n] -= G.g[k][sym(i, j)][n] * dpsi[k][n];
        }
    return H;
}

SecondOrderAction second_order_action(const VectorField& X, const ScalarField& psi, const ChristoffelField& G) {
    require_same_chart(X.chart, psi.chart);
    const int d = X.chart->dim();
    SecondOrderAction r;
    r.xx = apply(X, apply(X, psi));
    const auto H = covariant_hessian(psi, G);
    r.hessian = {X.chart, Samples(nodes(X.chart), 0.0)};
    for (std::size_t n = 0; n < r.hessian.v.size(); ++n) {
        double s = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) s += H[sym(i, j)][n] * X.c[i][n] * X.c[j][n];
        r.hessian.v[n] = s;
    }
    r.drift = apply(covariant_self(X, G), psi);
    return r;
}

ScalarField second_order(const VectorField& X, const ScalarField& psi, const ChristoffelField& G) {
    auto r = second_order_action(X, psi, G);
    return r.hessian + r.drift;
}

ScalarField lambda_op(const ScalarField& psi, const VectorField& a, const ChristoffelField& G, LambdaMode mode) {
    require_same_chart(psi.chart, a.chart);
    if (mode == LambdaMode::direct) {
        const ScalarField inner = div_h(psi * a, G);
        return div_h(inner * a, G);
    }
    return div2_h(psi * hat(a), G) - div_h(psi * covariant_self(a, G), G);
}

double integrate_chart(const ScalarField& f) {
    const Grid& g = f.chart->grid;
    const Samples w = trapezoid_weights(g);
    double s = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) s += w[k] * f.chart->metric.sqrt_det(k) * f.v[k];
    return s;
}

double l2_norm(const ScalarField& f, const Samples& mask) {
    const Grid& g = f.chart->grid;
    const Samples w = trapezoid_weights(g);
    double s = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!mask.empty() && mask[k] == 0.0) continue;
        s += w[k] * f.chart->metric.sqrt_det(k) * f.v[k] * f.v[k];
    }
    return std::sqrt(s);
}

double integrate(const GlobalScalar& f, const PartitionOfUnity& pou) {
    if (!f.atlas || f.atlas != pou.atlas || f.charts.size() != pou.weight.size())
        throw AtlasMismatch("partition of unity belongs to a different atlas");
    double s = 0.0;
    for (std::size_t k = 0; k < f.charts.size(); ++k)
        s += integrate_chart(ScalarField{f.charts[k].chart, mul(pou.weight[k], f.charts[k].v)});
    return s;
}

}  // namespace sce
