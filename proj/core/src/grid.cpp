#include "sce/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace sce {

Grid Grid::line(int n, double lo, double hi, bool periodic, int order) {
    Grid g;
    g.dim = 1;
    g.n = {n, 1};
    g.lo = {lo, 0.0};
    g.hi = {hi, 1.0};
    g.periodic = {periodic, false};
    g.order = order;
    g.validate();
    return g;
}

Grid Grid::plane(std::array<int, 2> n, std::array<double, 2> lo, std::array<double, 2> hi,
                 std::array<bool, 2> periodic, int order) {
    Grid g;
    g.dim = 2;
    g.n = n;
    g.lo = lo;
    g.hi = hi;
    g.periodic = periodic;
    g.order = order;
    g.validate();
    return g;
}

void Grid::validate() const {
    if (dim != 1 && dim != 2) throw std::invalid_argument("grid dimension must be 1 or 2");
    if (order != 2 && order != 4) throw std::invalid_argument("stencil order must be 2 or 4");
    for (int a = 0; a < dim; ++a) {
        if (n[a] < 8) throw std::invalid_argument("grid needs at least 8 nodes per axis");
        if (!(hi[a] > lo[a])) throw std::invalid_argument("grid box must have positive extent");
    }
    if (dim == 1 && n[1] != 1) throw std::invalid_argument("1-d grid must have n[1] == 1");
}

double Grid::h(int axis) const {
    return periodic[axis] ? (hi[axis] - lo[axis]) / n[axis] : (hi[axis] - lo[axis]) / (n[axis] - 1);
}

double Grid::x(int axis, int i) const { return lo[axis] + i * h(axis); }

Point Grid::node(std::size_t k) const {
    auto [i, j] = ij(k);
    return {x(0, i), dim == 2 ? x(1, j) : 0.0};
}

double Grid::cell_volume() const {
    double v = h(0);
    if (dim == 2) v *= h(1);
    return v;
}

bool Grid::same_layout(const Grid& o) const {
    return dim == o.dim && n == o.n && periodic == o.periodic && lo == o.lo && hi == o.hi;
}

Samples sample(const Grid& g, const std::function<double(const Point&)>& f) {
    Samples out(g.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(g.node(k));
    return out;
}

namespace {

// Differentiates every line along `axis`. `stride` is the index step along the
// axis, `count` the number of nodes on each line.
void diff_lines(const Grid& g, const Samples& f, Samples& out, int axis) {
    const int n = g.n[axis];
    const std::size_t stride = axis == 0 ? static_cast<std::size_t>(g.n[1]) : 1;
    const int lines = axis == 0 ? g.n[1] : g.n[0];
    const std::size_t line_step = axis == 0 ? 1 : static_cast<std::size_t>(g.n[1]);
    const double h = g.h(axis);
    const bool per = g.periodic[axis];
    auto wrap = [n](int i) { return ((i % n) + n) % n; };

    for (int l = 0; l < lines; ++l) {
        const std::size_t base = static_cast<std::size_t>(l) * line_step;
        auto F = [&](int i) { return f[base + static_cast<std::size_t>(i) * stride]; };
        auto O = [&](int i) -> double& { return out[base + static_cast<std::size_t>(i) * stride]; };
        if (g.order == 2) {
            const double c = 1.0 / (2.0 * h);
            if (per) {
                for (int i = 0; i < n; ++i) O(i) = (F(wrap(i + 1)) - F(wrap(i - 1))) * c;
            } else {
                for (int i = 1; i < n - 1; ++i) O(i) = (F(i + 1) - F(i - 1)) * c;
                O(0) = (-3.0 * F(0) + 4.0 * F(1) - F(2)) * c;
                O(n - 1) = (3.0 * F(n - 1) - 4.0 * F(n - 2) + F(n - 3)) * c;
            }
        } else {
            const double c = 1.0 / (12.0 * h);
            if (per) {
                for (int i = 0; i < n; ++i)
                    O(i) = (F(wrap(i - 2)) - 8.0 * F(wrap(i - 1)) + 8.0 * F(wrap(i + 1)) - F(wrap(i + 2))) * c;
            } else {
                for (int i = 2; i < n - 2; ++i) O(i) = (F(i - 2) - 8.0 * F(i - 1) + 8.0 * F(i + 1) - F(i + 2)) * c;
                O(0) = (-25.0 * F(0) + 48.0 * F(1) - 36.0 * F(2) + 16.0 * F(3) - 3.0 * F(4)) * c;
                O(1) = (-3.0 * F(0) - 10.0 * F(1) + 18.0 * F(2) - 6.0 * F(3) + F(4)) * c;
                O(n - 1) = (25.0 * F(n - 1) - 48.0 * F(n - 2) + 36.0 * F(n - 3) - 16.0 * F(n - 4) + 3.0 * F(n - 5)) * c;
                O(n - 2) = (3.0 * F(n - 1) + 10.0 * F(n - 2) - 18.0 * F(n - 3) + 6.0 * F(n - 4) - F(n - 5)) * c;
            }
        }
    }
}

}  // namespace

Samples diff(const Grid& g, const Samples& f, int axis) {
    if (f.size() != g.size()) throw std::invalid_argument("diff: sample count does not match grid");
    if (axis < 0 || axis >= g.dim) throw std::invalid_argument("diff: axis out of range");
    Samples out(f.size());
    diff_lines(g, f, out, axis);
    return out;
}

Samples trapezoid_weights(const Grid& g) {
    Samples w(g.size(), g.cell_volume());
    for (std::size_t k = 0; k < w.size(); ++k) {
        auto idx = g.ij(k);
        for (int a = 0; a < g.dim; ++a) {
            if (!g.periodic[a] && (idx[a] == 0 || idx[a] == g.n[a] - 1)) w[k] *= 0.5;
        }
    }
    return w;
}

double trapezoid(const Grid& g, const Samples& f) {
    const Samples w = trapezoid_weights(g);
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) s += w[k] * f[k];
    return s;
}

Samples interior_mask(const Grid& g, int layer) {
    Samples m(g.size(), 1.0);
    for (std::size_t k = 0; k < m.size(); ++k) {
        auto idx = g.ij(k);
        for (int a = 0; a < g.dim; ++a) {
            if (!g.periodic[a] && (idx[a] < layer || idx[a] > g.n[a] - 1 - layer)) m[k] = 0.0;
        }
    }
    return m;
}

double weighted_l2(const Samples& f, const Samples& w) {
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) s += w[k] * f[k] * f[k];
    return std::sqrt(s);
}

double max_abs(const Samples& f) {
    double m = 0.0;
    for (double v : f) m = std::max(m, std::abs(v));
    return m;
}

Samples add(const Samples& a, const Samples& b) {
    Samples r(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) r[k] = a[k] + b[k];
    return r;
}

Samples sub(const Samples& a, const Samples& b) {
    Samples r(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) r[k] = a[k] - b[k];
    return r;
}

Samples mul(const Samples& a, const Samples& b) {
    Samples r(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) r[k] = a[k] * b[k];
    return r;
}

Samples scale(const Samples& a, double s) {
    Samples r(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) r[k] = a[k] * s;
    return r;
}

void axpy(Samples& y, double a, const Samples& x) {
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += a * x[k];
}

}  // namespace sce
