#include "sce/metric.hpp"

#include <cmath>
#include <stdexcept>

#include "sce/errors.hpp"

namespace sce {

namespace {

class FlatMetric final : public MetricModel {
public:
    FlatMetric(int d, double c) : d_(d), c2_(c * c) {}
    int dim() const override { return d_; }
    MetricSample eval(const Point&) const override {
        MetricSample s;
        s.h = {c2_, 0.0, d_ == 2 ? c2_ : 1.0};
        return s;
    }
    std::string name() const override { return c2_ == 1.0 ? "flat" : "scaled-flat"; }

private:
    int d_;
    double c2_;
};

class SpherePolar final : public MetricModel {
public:
    int dim() const override { return 2; }
    MetricSample eval(const Point& x) const override {
        const double s = std::sin(x[0]);
        const double c = std::cos(x[0]);
        MetricSample m;
        m.h = {1.0, 0.0, s * s};
        m.dh[0] = {0.0, 0.0, 2.0 * s * c};
        m.dh[1] = {0.0, 0.0, 0.0};
        return m;
    }
    std::string name() const override { return "sphere-polar"; }
};

class ExpWarped final : public MetricModel {
public:
    int dim() const override { return 1; }
    MetricSample eval(const Point& x) const override {
        const double e = std::exp(2.0 * x[0]);
        MetricSample m;
        m.h = {e, 0.0, 1.0};
        m.dh[0] = {2.0 * e, 0.0, 0.0};
        return m;
    }
    std::string name() const override { return "exp-warped-1d"; }
};

void check_pd(const Sym2& h, int dim) {
    const bool ok = dim == 1 ? h[0] > 0.0 : (h[0] > 0.0 && h[0] * h[2] - h[1] * h[1] > 0.0);
    if (!ok || !std::isfinite(h[0]) || !std::isfinite(h[1]) || !std::isfinite(h[2]))
        throw SingularMetric("metric is not positive-definite at a grid node");
}

void fill_inverse(MetricField& m) {
    const std::size_t N = m.grid.size();
    for (auto& c : m.hinv) c.assign(N, 0.0);
    m.det.assign(N, 0.0);
    for (std::size_t k = 0; k < N; ++k) {
        Sym2 h{m.h[0][k], m.h[1][k], m.h[2][k]};
        check_pd(h, m.grid.dim);
        Sym2 inv = inverse(h, m.grid.dim);
        for (int c = 0; c < 3; ++c) m.hinv[c][k] = inv[c];
        m.det[k] = determinant(h, m.grid.dim);
    }
}

}  // namespace

Sym2 inverse(const Sym2& h, int dim) {
    if (dim == 1) return {1.0 / h[0], 0.0, 1.0};
    const double d = h[0] * h[2] - h[1] * h[1];
    return {h[2] / d, -h[1] / d, h[0] / d};
}

double determinant(const Sym2& h, int dim) { return dim == 1 ? h[0] : h[0] * h[2] - h[1] * h[1]; }

double MetricField::sqrt_det(std::size_t k) const { return std::sqrt(det[k]); }

std::shared_ptr<const MetricModel> flat_metric(int dim) { return std::make_shared<FlatMetric>(dim, 1.0); }
std::shared_ptr<const MetricModel> scaled_flat_metric(int dim, double c) { return std::make_shared<FlatMetric>(dim, c); }
std::shared_ptr<const MetricModel> sphere_polar_metric() { return std::make_shared<SpherePolar>(); }
std::shared_ptr<const MetricModel> exp_warped_metric() { return std::make_shared<ExpWarped>(); }

std::shared_ptr<const MetricModel> metric_preset(const std::string& name, int dim) {
    if (name == "flat") return flat_metric(dim);
    if (name == "sphere-polar") {
        if (dim != 2) throw std::invalid_argument("sphere-polar metric is two-dimensional");
        return sphere_polar_metric();
    }
    if (name == "exp-warped-1d") {
        if (dim != 1) throw std::invalid_argument("exp-warped-1d metric is one-dimensional");
        return exp_warped_metric();
    }
    throw std::invalid_argument("unknown metric preset: " + name);
}

MetricField make_metric(const Grid& g, const MetricModel& model) {
    if (model.dim() != g.dim) throw std::invalid_argument("metric model dimension does not match grid");
    MetricField m;
    m.grid = g;
    const std::size_t N = g.size();
    for (auto& c : m.h) c.assign(N, 0.0);
    for (auto& d : m.dh)
        for (auto& c : d) c.assign(N, 0.0);
    for (std::size_t k = 0; k < N; ++k) {
        MetricSample s = model.eval(g.node(k));
        for (int c = 0; c < 3; ++c) {
            m.h[c][k] = s.h[c];
            m.dh[0][c][k] = s.dh[0][c];
            m.dh[1][c][k] = s.dh[1][c];
        }
    }
    m.analytic_derivatives = true;
    fill_inverse(m);
    return m;
}

MetricField make_metric(const Grid& g, std::array<Samples, 3> h) {
    const std::size_t N = g.size();
    if (g.dim == 1) {
        h[1].assign(N, 0.0);
        h[2].assign(N, 1.0);
    }
    for (auto& c : h)
        if (c.size() != N) throw std::invalid_argument("metric samples do not match grid");
    MetricField m;
    m.grid = g;
    m.h = std::move(h);
    for (int a = 0; a < 2; ++a)
        for (int c = 0; c < 3; ++c)
            m.dh[a][c] = a < g.dim ? diff(g, m.h[c], a) : Samples(N, 0.0);
    if (g.dim == 1) {
        m.dh[0][1].assign(N, 0.0);
        m.dh[0][2].assign(N, 0.0);
    }
    m.analytic_derivatives = false;
    fill_inverse(m);
    return m;
}

}  // namespace sce
