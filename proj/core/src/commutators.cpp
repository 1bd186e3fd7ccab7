#include "sce/commutators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "sce/errors.hpp"

namespace sce {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_eps(const Mollifier& moll, const Chart& c, double eps_bound) {
    if (!(moll.eps() < eps_bound))
        throw EpsilonTooLarge("eps = " + std::to_string(moll.eps()) + " is not below eps_k = " + std::to_string(eps_bound));
    for (int a = 0; a < c.dim(); ++a)
        if (c.grid.periodic[a] && !(2.0 * moll.eps() < c.grid.extent(a)))
            throw EpsilonTooLarge("eps must be below half of every periodic extent");
}

Samples D(const Grid& g, const Samples& f, int axis) {
    if (axis >= g.dim) return Samples(f.size(), 0.0);
    return diff(g, f, axis);
}

Samples DD(const Grid& g, const Samples& f, int i, int j) { return D(g, D(g, f, j), i); }

double l1_norm(const ScalarField& f) {
    const Samples w = trapezoid_weights(f.chart->grid);
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * f.chart->metric.sqrt_det(k) * std::abs(f.v[k]);
    return s;
}

CommutatorResult finish(CommutatorKind kind, double eps, ScalarField res) {
    CommutatorResult r;
    r.kind = kind;
    r.eps = eps;
    r.l2 = l2_norm(res);
    r.l1 = l1_norm(res);
    r.residual = std::move(res);
    return r;
}

double fit_slope(const std::vector<double>& eps, const std::vector<double>& norm, std::size_t upto) {
    std::vector<double> x, y;
    for (std::size_t k = 0; k < upto; ++k)
        if (norm[k] > 0.0) {
            x.push_back(std::log(eps[k]));
            y.push_back(std::log(norm[k]));
        }
    if (x.empty()) return std::numeric_limits<double>::infinity();
    if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
    }
    return sxy / sxx;
}

}  // namespace

std::string to_string(CommutatorKind k) {
    switch (k) {
        case CommutatorKind::r: return "r";
        case CommutatorKind::rt: return "rt";
        case CommutatorKind::rb: return "rb";
        case CommutatorKind::rstar: return "rstar";
        case CommutatorKind::ru: return "ru";
        case CommutatorKind::c2: return "c2";
        case CommutatorKind::R: return "R";
    }
    return "?";
}

CommutatorKind parse_commutator_kind(const std::string& s) {
    for (auto k : {CommutatorKind::r, CommutatorKind::rt, CommutatorKind::rb, CommutatorKind::rstar, CommutatorKind::ru,
                   CommutatorKind::c2, CommutatorKind::R})
        if (to_string(k) == s) return k;
    throw ConfigInvalid("unknown commutator kind '" + s + "' (expected r, rt, rb, rstar, ru, c2 or R)");
}

const std::vector<double>& default_eps_ladder() {
    static const std::vector<double> ladder{0.16, 0.08, 0.04, 0.02, 0.01};
    return ladder;
}

CommutatorResult dl_commutator(const ScalarField& g, const VectorField& V, const Mollifier& moll, double eps_bound) {
    require_same_chart(g.chart, V.chart);
    const Chart& c = *g.chart;
    check_eps(moll, c, eps_bound);
    const Grid& grid = c.grid;
    const Samples ge = convolve(grid, g.v, moll);
    Samples res(grid.size(), 0.0);
    for (int l = 0; l < grid.dim; ++l) {
        axpy(res, 1.0, D(grid, convolve(grid, mul(g.v, V.c[l]), moll), l));
        axpy(res, -1.0, D(grid, mul(ge, V.c[l]), l));
    }
    return finish(CommutatorKind::r, moll.eps(), {g.chart, std::move(res)});
}

VectorField christoffel_vector(const VectorField& a, const ChristoffelField& G) {
    require_same_chart(a.chart, G.chart);
    const int d = a.chart->dim();
    VectorField W = zero_vector(a.chart);
    for (std::size_t n = 0; n < a.chart->grid.size(); ++n)
        for (int l = 0; l < d; ++l) {
            double s = 0.0;
            for (int m = 0; m < d; ++m)
                for (int j = 0; j < d; ++j) s += G.g[l][sym(m, j)][n] * a.c[m][n] * a.c[j][n];
            W.c[l][n] = s;
        }
    return W;
}

CommutatorResult christoffel_commutator(const ScalarField& rho, const VectorField& a, const ChristoffelField& G,
                                        const Mollifier& moll, double eps_bound) {
    auto r = dl_commutator(rho, christoffel_vector(a, G), moll, eps_bound);
    r.kind = CommutatorKind::rb;
    return r;
}

SecondOrderResult second_order_commutator(const ScalarField& g, const VectorField& V, const Mollifier& moll,
                                          double eps_bound) {
    require_same_chart(g.chart, V.chart);
    const Chart& c = *g.chart;
    check_eps(moll, c, eps_bound);
    const Grid& grid = c.grid;
    const int d = grid.dim;
    const std::size_t N = grid.size();
    const Samples ge = convolve(grid, g.v, moll);
    Samples C(N, 0.0);
    // 1/2 d_ij (V^i V^j g)_eps
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            const double w = i == j ? 0.5 : 1.0;
            axpy(C, w, DD(grid, convolve(grid, mul(mul(V.c[i], V.c[j]), g.v), moll), i, j));
        }
    // - V^i d_i (d_j (V^j g)_eps)
    Samples div_p(N, 0.0);
    for (int j = 0; j < d; ++j) axpy(div_p, 1.0, D(grid, convolve(grid, mul(V.c[j], g.v), moll), j));
    for (int i = 0; i < d; ++i) axpy(C, -1.0, mul(V.c[i], D(grid, div_p, i)));
    // + 1/2 V^i V^j d_ij g_eps
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) axpy(C, 0.5, mul(mul(V.c[i], V.c[j]), DD(grid, ge, i, j)));

    std::array<std::array<Samples, 2>, 2> dV;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) dV[i][j] = D(grid, V.c[j], i);  // d_i V^j
    Samples limit(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        double div = 0.0, q = 0.0;
        for (int i = 0; i < d; ++i) {
            div += dV[i][i][n];
            for (int j = 0; j < d; ++j) q += dV[i][j][n] * dV[j][i][n];
        }
        limit[n] = 0.5 * (div * div + q) * ge[n];
    }
    SecondOrderResult out;
    out.C = {g.chart, C};
    out.limit = {g.chart, limit};
    out.residual = finish(CommutatorKind::c2, moll.eps(), {g.chart, sub(C, limit)});
    return out;
}

CommutatorResult R_decomposition(const ScalarField& rho, const VectorField& a, const ChristoffelField& G,
                                 const Mollifier& moll, double eps_bound) {
    require_same_chart(rho.chart, a.chart);
    const Chart& c = *rho.chart;
    if (!c.unit_volume) throw AtlasMismatch("R decomposition needs a unit-volume chart");
    check_eps(moll, c, eps_bound);
    const Grid& grid = c.grid;
    const int d = grid.dim;
    const std::size_t N = grid.size();

    // Left side, literally: Div^2 (rho a a)_eps - Div^2 (rho_eps a a) + Div V_eps - Div Vbar_eps.
    const Samples re = convolve(grid, rho.v, moll);
    const SymTensor2Field ah = hat(a);
    SymTensor2Field S_eps{rho.chart, {}}, S_rhoe{rho.chart, {}};
    for (int k = 0; k < 3; ++k) {
        S_eps.s[k] = d == 2 || k == 0 ? convolve(grid, mul(rho.v, ah.s[k]), moll) : Samples(N, 0.0);
        S_rhoe.s[k] = mul(re, ah.s[k]);
    }
    const VectorField W = christoffel_vector(a, G);
    VectorField V_eps = zero_vector(rho.chart), Vbar = zero_vector(rho.chart);
    for (int l = 0; l < d; ++l) V_eps.c[l] = convolve(grid, mul(rho.v, W.c[l]), moll);
    for (std::size_t n = 0; n < N; ++n)
        for (int l = 0; l < d; ++l) {
            double s = 0.0;
            for (int m = 0; m < d; ++m)
                for (int j = 0; j < d; ++j) s += G.g[l][sym(m, j)][n] * S_eps.s[sym(m, j)][n];
            Vbar.c[l][n] = s;
        }
    const ScalarField lhs = div2_h(S_eps, G) - div2_h(S_rhoe, G) + div_h(V_eps, G) - div_h(Vbar, G);

    // Right side from its pieces.
    const auto rbar = christoffel_commutator(rho, a, G, moll, eps_bound);
    const auto r = dl_commutator(rho, a, moll, eps_bound);
    const ScalarField ar = apply(a, r.residual);
    const auto c2 = second_order_commutator(rho, a, moll, eps_bound);
    Samples Gv = c2.C.v;
    std::array<std::array<Samples, 2>, 2> da;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) da[i][j] = D(grid, a.c[j], i);
    for (std::size_t n = 0; n < N; ++n) {
        double div = 0.0, q = 0.0;
        for (int i = 0; i < d; ++i) {
            div += da[i][i][n];
            for (int j = 0; j < d; ++j) q += da[i][j][n] * da[j][i][n];
        }
        Gv[n] -= 0.5 * re[n] * div * div + 0.5 * re[n] * q;
    }
    const ScalarField Gf{rho.chart, Gv};
    const ScalarField rhs = 2.0 * Gf + 2.0 * ar + rbar.residual;

    auto out = finish(CommutatorKind::R, moll.eps(), lhs - rhs);
    out.extra["rbar_l2"] = rbar.l2;
    out.extra["G_l2"] = l2_norm(Gf);
    out.extra["a_r_l2"] = l2_norm(ar);
    out.extra["lhs_l2"] = l2_norm(lhs);
    return out;
}

RateTable rate_study(const std::vector<double>& eps, const std::vector<double>& norm) {
    if (eps.size() != norm.size()) throw std::invalid_argument("rate study needs one norm per eps");
    if (eps.size() < 3) throw InsufficientPoints("rate study needs at least 3 eps values");
    std::vector<std::size_t> idx(eps.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return eps[a] > eps[b]; });
    RateTable t;
    for (auto k : idx) {
        t.eps.push_back(eps[k]);
        t.norm.push_back(norm[k]);
    }
    for (std::size_t k = 0; k < t.eps.size(); ++k) {
        t.slope_so_far.push_back(k == 0 ? std::numeric_limits<double>::quiet_NaN() : fit_slope(t.eps, t.norm, k + 1));
        if (k > 0 && t.norm[k] > t.norm[k - 1]) t.monotone = false;
    }
    t.slope = fit_slope(t.eps, t.norm, t.eps.size());
    return t;
}

CommutatorFixture commutator_fixture(const Atlas& atlas, int resolution, bool kink) {
    if (resolution < 8) throw ConfigInvalid("resolution must be at least 8");
    CommutatorFixture fx;
    if (is_sphere(atlas)) {
        const auto uv = std::make_shared<const Atlas>(atlas.unit_volume ? atlas : build_unit_volume_atlas(atlas));
        const double margin = 0.8;
        const auto pou = make_partition(uv, margin);
        const ChartPtr& north = uv->charts[0];
        // Window of the north chart holding the density support with room
        // for the largest ladder kernel.
        const double lo = 0.1, hi = 2.9;
        const int n0 = static_cast<int>(std::lround((hi - lo) * resolution)) + 1;
        const Grid g = Grid::plane({n0, resolution}, {lo, 0.0}, {hi, 1.0}, {false, true}, north->grid.order);
        auto win = std::const_pointer_cast<Chart>(make_chart(north->id + "-window", g, north->model, north->map));
        win->unit_volume = true;
        fx.chart = win;
        const ScalarField U = make_scalar(fx.chart, [&](const Point& x) { return partition_weight(pou, 0, x); });
        const ScalarField rho = sample_scalar(fx.chart, from_ambient([kink](const Vec3& q) {
            const double th = std::acos(std::clamp(q[2], -1.0, 1.0));
            const double base = kink ? std::abs(th - 0.72) : 1.0 + 0.3 * q[0] + 0.2 * q[1] * q[2];
            return plateau(th, 0.45, 1.0) * base;
        }));
        fx.a = sample_vector(fx.chart, from_ambient_vector([](const Vec3& q) {
            const double s = 0.3 * (1.0 + 0.5 * q[2]);
            return Vec3{s * (1.0 - q[0] * q[0]) - 0.2 * q[1], -s * q[0] * q[1] + 0.2 * q[0], -s * q[0] * q[2]};
        }));
        fx.u = sample_vector(fx.chart, from_ambient_vector([](const Vec3& q) {
            const double s = 0.3 * (1.0 + 0.4 * q[0]);
            return Vec3{s * q[2] - 0.2 * q[2] * q[0], -0.2 * q[2] * q[1], -s * q[0] + 0.2 * (1.0 - q[2] * q[2])};
        }));
        fx.rho = U * rho;
        fx.rho_aU = rho * apply(fx.a, U);
        fx.eps_bound = pou.eps_chart[0];
    } else {
        if (atlas.charts.size() != 1) throw ConfigInvalid("commutator fixtures need a torus or the sphere");
        const Chart& c0 = *atlas.charts[0];
        for (int a = 0; a < c0.dim(); ++a)
            if (!c0.grid.periodic[a]) throw ConfigInvalid("commutator fixtures need a periodic single-chart manifold");
        if (!c0.unit_volume) throw ConfigInvalid("commutator fixtures need a unit-volume chart");
        fx.chart = regrid(c0, {resolution, resolution});
        const double L = c0.grid.extent(0);
        const double k = kTwoPi / L;
        const bool two = c0.dim() == 2;
        fx.rho = make_scalar(fx.chart, [&](const Point& x) {
            const double y = two ? 1.0 + 0.3 * std::cos(k * x[1]) : 1.0;
            return (kink ? std::abs(x[0] / L - 0.5) : std::exp(0.5 * std::sin(k * x[0]))) * y;
        });
        fx.a = make_vector(fx.chart, [&](const Point& x) {
            return std::array<double, 2>{0.3 + 0.2 * std::sin(k * x[0]) * (two ? std::cos(k * x[1]) : 1.0),
                                         two ? 0.2 * std::cos(k * x[0]) : 0.0};
        });
        fx.u = make_vector(fx.chart, [&](const Point& x) {
            if (!two) return std::array<double, 2>{0.3 * std::sin(k * x[0]), 0.0};
            return std::array<double, 2>{0.3 * std::sin(k * x[0]) * std::cos(k * x[1]),
                                         -0.3 * std::cos(k * x[0]) * std::sin(k * x[1])};
        });
        fx.rho_aU = constant_scalar(fx.chart, 0.0);  // U = 1, so a(U) = 0
        fx.eps_bound = std::numeric_limits<double>::infinity();
    }
    fx.gamma = christoffel(fx.chart);
    return fx;
}

CommutatorResult run_commutator(CommutatorKind kind, const CommutatorFixture& fx, double eps) {
    const Mollifier moll(eps, fx.chart->dim());
    CommutatorResult r;
    switch (kind) {
        case CommutatorKind::r: r = dl_commutator(fx.rho, fx.a, moll, fx.eps_bound); break;
        case CommutatorKind::rt: r = dl_commutator(fx.rho, covariant_self(fx.a, fx.gamma), moll, fx.eps_bound); break;
        case CommutatorKind::rb: r = christoffel_commutator(fx.rho, fx.a, fx.gamma, moll, fx.eps_bound); break;
        case CommutatorKind::rstar: r = dl_commutator(fx.rho_aU, fx.a, moll, fx.eps_bound); break;
        case CommutatorKind::ru: r = dl_commutator(fx.rho, fx.u, moll, fx.eps_bound); break;
        case CommutatorKind::c2: r = second_order_commutator(fx.rho, fx.a, moll, fx.eps_bound).residual; break;
        case CommutatorKind::R: r = R_decomposition(fx.rho, fx.a, fx.gamma, moll, fx.eps_bound); break;
    }
    r.kind = kind;
    return r;
}

}  // namespace sce
