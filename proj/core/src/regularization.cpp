#include "sce/regularization.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "sce/errors.hpp"

namespace sce {

namespace {

double bump_profile(double r2) { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

// C-infinity step: 0 for t <= 0, 1 for t >= 1.
double smoothstep(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / t);
    const double b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
}

double raw_bump(const Chart& c, const Point& x, double margin) {
    if (!c.contains(x)) return 0.0;
    double b = 1.0;
    for (int a = 0; a < c.dim(); ++a) {
        if (c.grid.periodic[a]) continue;
        const double d = std::min(x[a] - c.grid.lo[a], c.grid.hi[a] - x[a]);
        b *= smoothstep((d - margin) / margin);
    }
    return b;
}

double bump_sum(const Atlas& atlas, int chart, const Point& x, double margin) {
    double s = 0.0;
    for (int l = 0; l < static_cast<int>(atlas.charts.size()); ++l) {
        if (l == chart) {
            s += raw_bump(*atlas.charts[static_cast<std::size_t>(l)], x, margin);
            continue;
        }
        if (auto y = atlas.transition(chart, l, x)) s += raw_bump(*atlas.charts[static_cast<std::size_t>(l)], *y, margin);
    }
    return s;
}

Samples nonzero_mask(const std::vector<Samples>& comp) {
    Samples m(comp.at(0).size(), 0.0);
    for (const auto& c : comp)
        for (std::size_t k = 0; k < c.size(); ++k)
            if (c[k] != 0.0) m[k] = 1.0;
    return m;
}

Samples positive_mask(const Samples& f) {
    Samples m(f.size(), 0.0);
    for (std::size_t k = 0; k < f.size(); ++k) m[k] = f[k] > 0.0 ? 1.0 : 0.0;
    return m;
}

// Cubic Lagrange weights and first index for coordinate x along one axis.
struct Interp1 {
    int i0;
    double w[4];
};

Interp1 interp_axis(const Grid& g, int axis, double x) {
    const double h = g.h(axis);
    const double s = (x - g.lo[axis]) / h;
    int base = static_cast<int>(std::floor(s));
    double t = s - base;
    Interp1 r{};
    r.i0 = base - 1;
    if (!g.periodic[axis]) {
        const int n = g.n[axis];
        if (r.i0 < 0) r.i0 = 0;
        if (r.i0 > n - 4) r.i0 = n - 4;
        t = s - (r.i0 + 1);
    }
    r.w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0;
    r.w[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    r.w[2] = -(t + 1.0) * t * (t - 2.0) / 2.0;
    r.w[3] = (t + 1.0) * t * (t - 1.0) / 6.0;
    return r;
}

int wrap_index(int i, int n) { return ((i % n) + n) % n; }

LocalizedField make_local(const PartitionOfUnity& pou, int chart, Rank rank, std::vector<Samples> comp) {
    LocalizedField L;
    L.chart = chart;
    L.chart_ptr = pou.atlas->charts.at(static_cast<std::size_t>(chart));
    L.rank = rank;
    L.comp = std::move(comp);
    L.support = positive_mask(pou.weight[static_cast<std::size_t>(chart)]);
    return L;
}

const ChartPtr& chart_of(const PartitionOfUnity& pou, int chart) {
    if (!pou.atlas || chart < 0 || chart >= static_cast<int>(pou.atlas->charts.size()))
        throw AtlasMismatch("chart index outside the partition's atlas");
    return pou.atlas->charts[static_cast<std::size_t>(chart)];
}

}  // namespace

Mollifier::Mollifier(double eps, int dim) : eps_(eps), dim_(dim) {
    if (!(eps > 0.0)) throw std::invalid_argument("mollifier scale must be positive");
    if (dim != 1 && dim != 2) throw std::invalid_argument("mollifier dimension must be 1 or 2");
    // Radial trapezoid; the profile is flat to all orders at r = 1.
    const int M = 4 * 1024;
    double s = 0.0;
    for (int k = 0; k <= M; ++k) {
        const double r = static_cast<double>(k) / M;
        const double w = (k == 0 || k == M) ? 0.5 : 1.0;
        s += w * (dim == 1 ? bump_profile(r * r) : r * bump_profile(r * r));
    }
    s /= M;
    norm_ = dim == 1 ? 2.0 * s : 2.0 * std::numbers::pi * s;
}

double Mollifier::operator()(const Point& z) const {
    const double r2 = (z[0] * z[0] + (dim_ == 2 ? z[1] * z[1] : 0.0)) / (eps_ * eps_);
    return bump_profile(r2) / (norm_ * std::pow(eps_, dim_));
}

Mollifier::Stencil Mollifier::stencil(const Grid& g) const {
    Stencil st;
    st.r0 = static_cast<int>(std::floor(eps_ / g.h(0)));
    st.r1 = g.dim == 2 ? static_cast<int>(std::floor(eps_ / g.h(1))) : 0;
    const int w0 = 2 * st.r0 + 1, w1 = 2 * st.r1 + 1;
    st.w.assign(static_cast<std::size_t>(w0) * static_cast<std::size_t>(w1), 0.0);
    double total = 0.0;
    for (int p = -st.r0; p <= st.r0; ++p)
        for (int q = -st.r1; q <= st.r1; ++q) {
            const double v = (*this)({p * g.h(0), g.dim == 2 ? q * g.h(1) : 0.0});
            st.w[static_cast<std::size_t>((p + st.r0) * w1 + (q + st.r1))] = v;
            total += v;
        }
    if (total <= 0.0) {
        // Kernel narrower than one cell: the discrete operator is the identity.
        st.w.assign(st.w.size(), 0.0);
        st.w[static_cast<std::size_t>(st.r0 * w1 + st.r1)] = 1.0;
        return st;
    }
    for (auto& v : st.w) v /= total;
    return st;
}

PartitionOfUnity make_partition(const AtlasPtr& atlas, double margin) {
    if (!(margin > 0.0)) throw std::invalid_argument("partition margin must be positive");
    PartitionOfUnity pou;
    pou.atlas = atlas;
    pou.margin = margin;
    double eps_min = std::numeric_limits<double>::infinity();
    for (int k = 0; k < static_cast<int>(atlas->charts.size()); ++k) {
        const Chart& c = *atlas->charts[static_cast<std::size_t>(k)];
        Samples w(c.grid.size(), 0.0);
        for (std::size_t n = 0; n < w.size(); ++n) {
            const Point x = c.grid.node(n);
            const double den = bump_sum(*atlas, k, x, margin);
            if (den < 1e-8)
                throw CoverageFailure("partition bumps do not cover chart '" + c.id + "' with margin " + std::to_string(margin));
            w[n] = raw_bump(c, x, margin) / den;
        }
        pou.weight.push_back(std::move(w));
        bool bounded = false;
        for (int a = 0; a < c.dim(); ++a) bounded = bounded || !c.grid.periodic[a];
        const double e = bounded ? margin : std::numeric_limits<double>::infinity();
        pou.eps_chart.push_back(e);
        eps_min = std::min(eps_min, e);
    }
    pou.eps0 = 0.25 * eps_min;
    return pou;
}

double partition_weight(const PartitionOfUnity& pou, int chart, const Point& x) {
    const Chart& c = *chart_of(pou, chart);
    const double b = raw_bump(c, x, pou.margin);
    if (b == 0.0) return 0.0;
    return b / bump_sum(*pou.atlas, chart, c.wrap(x), pou.margin);
}

GlobalScalar GlobalField::scalar() const {
    GlobalScalar g{atlas, {}};
    for (std::size_t k = 0; k < comp.size(); ++k) g.charts.push_back({atlas->charts[k], comp[k].at(0)});
    return g;
}

LocalizedField localize(const ScalarField& f, const PartitionOfUnity& pou, int chart) {
    require_same_chart(f.chart, chart_of(pou, chart));
    const Samples& U = pou.weight[static_cast<std::size_t>(chart)];
    return make_local(pou, chart, Rank::scalar, {mul(U, f.v)});
}

LocalizedField localize(const VectorField& f, const PartitionOfUnity& pou, int chart) {
    require_same_chart(f.chart, chart_of(pou, chart));
    const Samples& U = pou.weight[static_cast<std::size_t>(chart)];
    return make_local(pou, chart, Rank::vector, {mul(U, f.c[0]), mul(U, f.c[1])});
}

LocalizedField localize(const SymTensor2Field& f, const PartitionOfUnity& pou, int chart) {
    require_same_chart(f.chart, chart_of(pou, chart));
    const Samples& U = pou.weight[static_cast<std::size_t>(chart)];
    return make_local(pou, chart, Rank::sym2, {mul(U, f.s[0]), mul(U, f.s[1]), mul(U, f.s[2])});
}

LocalizedField as_localized(const ScalarField& f, int chart) {
    LocalizedField L{chart, f.chart, Rank::scalar, {f.v}, {}};
    L.support = nonzero_mask(L.comp);
    return L;
}

LocalizedField as_localized(const VectorField& f, int chart) {
    LocalizedField L{chart, f.chart, Rank::vector, {f.c[0], f.c[1]}, {}};
    L.support = nonzero_mask(L.comp);
    return L;
}

Samples convolve(const Grid& g, const Samples& f, const Mollifier& moll) {
    const auto st = moll.stencil(g);
    const int n0 = g.n[0], n1 = g.n[1];
    const int w1 = 2 * st.r1 + 1;
    // Output rows/columns within the kernel radius of a nonzero input.
    std::vector<char> any0(static_cast<std::size_t>(n0), 0), any1(static_cast<std::size_t>(n1), 0);
    for (int i = 0; i < n0; ++i)
        for (int j = 0; j < n1; ++j)
            if (f[g.at(i, j)] != 0.0) any0[static_cast<std::size_t>(i)] = any1[static_cast<std::size_t>(j)] = 1;
    auto dilate = [&](const std::vector<char>& any, int n, int r, bool per) {
        std::vector<char> m(static_cast<std::size_t>(n), 0);
        for (int i = 0; i < n; ++i) {
            if (!any[static_cast<std::size_t>(i)]) continue;
            for (int p = -r; p <= r; ++p) {
                int k = i + p;
                if (per) k = wrap_index(k, n);
                else if (k < 0 || k >= n) continue;
                m[static_cast<std::size_t>(k)] = 1;
            }
        }
        return m;
    };
    const auto m0 = dilate(any0, n0, st.r0, g.periodic[0]);
    const auto m1 = dilate(any1, n1, st.r1, g.dim == 2 && g.periodic[1]);
    Samples out(f.size(), 0.0);
    for (int i = 0; i < n0; ++i) {
        if (!m0[static_cast<std::size_t>(i)]) continue;
        for (int j = 0; j < n1; ++j) {
            if (!m1[static_cast<std::size_t>(j)]) continue;
            double s = 0.0;
            for (int p = -st.r0; p <= st.r0; ++p) {
                int ii = i - p;
                if (g.periodic[0]) ii = wrap_index(ii, n0);
                else if (ii < 0 || ii >= n0) continue;
                for (int q = -st.r1; q <= st.r1; ++q) {
                    int jj = j - q;
                    if (g.dim == 2 && g.periodic[1]) jj = wrap_index(jj, n1);
                    else if (jj < 0 || jj >= n1) continue;
                    s += st.w[static_cast<std::size_t>((p + st.r0) * w1 + (q + st.r1))] * f[g.at(ii, jj)];
                }
            }
            out[g.at(i, j)] = s;
        }
    }
    return out;
}

LocalizedField smooth_local(const LocalizedField& f, const Mollifier& moll, const PartitionOfUnity* pou) {
    const Grid& g = f.chart_ptr->grid;
    if (pou) {
        const double ek = pou->eps_chart.at(static_cast<std::size_t>(f.chart));
        if (!(moll.eps() < ek))
            throw EpsilonTooLarge("eps = " + std::to_string(moll.eps()) + " is not below eps_k = " + std::to_string(ek));
    }
    for (int a = 0; a < g.dim; ++a)
        if (g.periodic[a] && !(2.0 * moll.eps() < g.extent(a)))
            throw EpsilonTooLarge("eps must be below half of every periodic extent");
    LocalizedField out = f;
    for (auto& c : out.comp) c = convolve(g, c, moll);
    out.support = positive_mask(convolve(g, f.support.empty() ? nonzero_mask(f.comp) : f.support, moll));
    return out;
}

GlobalField pullback_extend(const LocalizedField& f, const AtlasPtr& atlas) {
    const int src = f.chart;
    const Chart& sc = *atlas->charts.at(static_cast<std::size_t>(src));
    require_same_chart(f.chart_ptr, atlas->charts[static_cast<std::size_t>(src)]);
    const Grid& sg = sc.grid;
    const Samples supp = nonzero_mask(f.comp);
    for (std::size_t k = 0; k < supp.size(); ++k) {
        if (supp[k] == 0.0) continue;
        const auto ij = sg.ij(k);
        for (int a = 0; a < sg.dim; ++a)
            if (!sg.periodic[a] && (ij[static_cast<std::size_t>(a)] < 2 || ij[static_cast<std::size_t>(a)] > sg.n[a] - 3))
                throw SupportViolation("support of the field on chart '" + sc.id + "' touches the chart boundary");
    }
    GlobalField out;
    out.atlas = atlas;
    out.rank = f.rank;
    for (int l = 0; l < static_cast<int>(atlas->charts.size()); ++l) {
        if (l == src) {
            out.comp.push_back(f.comp);
            continue;
        }
        const Chart& tc = *atlas->charts[static_cast<std::size_t>(l)];
        std::vector<Samples> comp(f.comp.size(), Samples(tc.grid.size(), 0.0));
        for (std::size_t n = 0; n < tc.grid.size(); ++n) {
            const auto x = atlas->transition(l, src, tc.grid.node(n));
            if (!x) continue;
            const Interp1 ia = interp_axis(sg, 0, (*x)[0]);
            Interp1 ib{0, {1.0, 0.0, 0.0, 0.0}};
            if (sg.dim == 2) ib = interp_axis(sg, 1, (*x)[1]);
            std::vector<double> v(f.comp.size(), 0.0);
            bool nonzero = false;
            for (int p = 0; p < 4; ++p) {
                int i = ia.i0 + p;
                if (sg.periodic[0]) i = wrap_index(i, sg.n[0]);
                for (int q = 0; q < (sg.dim == 2 ? 4 : 1); ++q) {
                    int j = sg.dim == 2 ? ib.i0 + q : 0;
                    if (sg.dim == 2 && sg.periodic[1]) j = wrap_index(j, sg.n[1]);
                    const std::size_t k = sg.at(i, j);
                    if (supp[k] == 0.0) continue;
                    nonzero = true;
                    const double w = ia.w[p] * ib.w[q];
                    for (std::size_t c = 0; c < v.size(); ++c) v[c] += w * f.comp[c][k];
                }
            }
            if (!nonzero) continue;
            if (f.rank == Rank::scalar) {
                comp[0][n] = v[0];
                continue;
            }
            const Mat2 J = atlas->transition_jacobian(src, l, *x);
            if (f.rank == Rank::vector) {
                comp[0][n] = J[0][0] * v[0] + J[0][1] * v[1];
                comp[1][n] = J[1][0] * v[0] + J[1][1] * v[1];
            } else {
                const Mat2 S{{{v[0], v[1]}, {v[1], v[2]}}};
                const Mat2 JS = mat_mul(J, S);
                const Mat2 Jt{{{J[0][0], J[1][0]}, {J[0][1], J[1][1]}}};
                const Mat2 R = mat_mul(JS, Jt);
                comp[0][n] = R[0][0];
                comp[1][n] = R[0][1];
                comp[2][n] = R[1][1];
            }
        }
        out.comp.push_back(std::move(comp));
    }
    return out;
}

GlobalScalar reconstruct_global(const GlobalScalar& rho, const PartitionOfUnity& pou, const Mollifier& moll) {
    if (rho.atlas != pou.atlas) throw AtlasMismatch("field and partition live on different atlases");
    if (!(moll.eps() < pou.eps0))
        throw EpsilonTooLarge("eps = " + std::to_string(moll.eps()) + " is not below eps0 = " + std::to_string(pou.eps0));
    GlobalScalar out{rho.atlas, {}};
    for (const auto& c : rho.charts) out.charts.push_back({c.chart, Samples(c.v.size(), 0.0)});
    for (int k = 0; k < static_cast<int>(rho.charts.size()); ++k) {
        const auto L = smooth_local(localize(rho.charts[static_cast<std::size_t>(k)], pou, k), moll, &pou);
        const auto G = pullback_extend(L, rho.atlas);
        for (std::size_t l = 0; l < out.charts.size(); ++l) axpy(out.charts[l].v, 1.0, G.comp[l][0]);
    }
    return out;
}

std::map<std::string, LocalizedField> localized_aux_terms(const ScalarField& rho, const VectorField& a,
                                                          const VectorField& u, const PartitionOfUnity& pou, int chart,
                                                          const Mollifier* moll) {
    const ChartPtr& c = chart_of(pou, chart);
    require_same_chart(rho.chart, c);
    require_same_chart(a.chart, c);
    require_same_chart(u.chart, c);
    const ChristoffelField G = christoffel(c);
    const ScalarField U{c, pou.weight[static_cast<std::size_t>(chart)]};
    const ScalarField aU = apply(a, U);
    const auto act = second_order_action(a, U, G);
    std::map<std::string, LocalizedField> out;
    const ScalarField A1 = rho * aU;
    out["A1"] = make_local(pou, chart, Rank::scalar, {A1.v});
    out["A2"] = make_local(pou, chart, Rank::scalar, {(rho * act.hessian).v});
    out["A3"] = make_local(pou, chart, Rank::scalar, {(rho * act.drift).v});
    const VectorField A4 = A1 * a;
    out["A4"] = make_local(pou, chart, Rank::vector, {A4.c[0], A4.c[1]});
    out["Au"] = make_local(pou, chart, Rank::scalar, {(rho * apply(u, U)).v});
    const ScalarField rk = U * rho;
    const int d = c->dim();
    std::vector<Samples> V(2, Samples(c->grid.size(), 0.0));
    for (std::size_t n = 0; n < c->grid.size(); ++n)
        for (int l = 0; l < d; ++l) {
            double s = 0.0;
            for (int m = 0; m < d; ++m)
                for (int j = 0; j < d; ++j) s += G.g[l][sym(m, j)][n] * a.c[m][n] * a.c[j][n];
            V[static_cast<std::size_t>(l)][n] = rk.v[n] * s;
        }
    out["V"] = make_local(pou, chart, Rank::vector, V);
    if (moll) {
        const auto R = smooth_local(localize(rho * hat(a), pou, chart), *moll, &pou);
        std::vector<Samples> Vb(2, Samples(c->grid.size(), 0.0));
        for (std::size_t n = 0; n < c->grid.size(); ++n)
            for (int l = 0; l < d; ++l) {
                double s = 0.0;
                for (int m = 0; m < d; ++m)
                    for (int j = 0; j < d; ++j) s += G.g[l][sym(m, j)][n] * R.comp[static_cast<std::size_t>(sym(m, j))][n];
                Vb[static_cast<std::size_t>(l)][n] = s;
            }
        LocalizedField vb = make_local(pou, chart, Rank::vector, Vb);
        vb.support = R.support;
        out["Vbar"] = vb;
    }
    return out;
}

}  // namespace sce
