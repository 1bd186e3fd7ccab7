#include "sce/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sce/errors.hpp"

namespace sce {

Mat2 mat_mul(const Mat2& a, const Mat2& b) {
    Mat2 r{};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
    return r;
}

Mat2 mat_inv(const Mat2& a, int dim) {
    if (dim == 1) return {{{1.0 / a[0][0], 0.0}, {0.0, 1.0}}};
    const double d = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    return {{{a[1][1] / d, -a[0][1] / d}, {-a[1][0] / d, a[0][0] / d}}};
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 normalized(Vec3 v) {
    const double n = std::sqrt(dot(v, v));
    for (auto& c : v) c /= n;
    return v;
}

class PolarMap final : public ChartMap {
public:
    explicit PolarMap(const Vec3& axis) : n_(normalized(axis)) {
        // e1: a coordinate axis projected off n; the z axis gets e1 = x so that
        // (theta, phi) are the usual angles.
        const Vec3 trial = std::abs(n_[2]) > 0.9 ? Vec3{1, 0, 0} : Vec3{0, 0, 1};
        const double s = dot(trial, n_);
        e1_ = normalized({trial[0] - s * n_[0], trial[1] - s * n_[1], trial[2] - s * n_[2]});
        e2_ = cross(n_, e1_);
    }

    Vec3 embed(const Point& x) const override {
        const double st = std::sin(x[0]), ct = std::cos(x[0]);
        const double sp = std::sin(x[1]), cp = std::cos(x[1]);
        Vec3 p{};
        for (int c = 0; c < 3; ++c) p[c] = st * cp * e1_[c] + st * sp * e2_[c] + ct * n_[c];
        return p;
    }

    std::optional<Point> coords(const Vec3& p) const override {
        const double a = dot(p, e1_), b = dot(p, e2_);
        if (std::hypot(a, b) < 1e-12) return std::nullopt;
        const double theta = std::acos(std::clamp(dot(p, n_), -1.0, 1.0));
        double phi = std::atan2(b, a);
        if (phi < 0.0) phi += kTwoPi;
        return Point{theta, phi};
    }

    std::array<Vec3, 2> tangent(const Point& x) const override {
        const double st = std::sin(x[0]), ct = std::cos(x[0]);
        const double sp = std::sin(x[1]), cp = std::cos(x[1]);
        std::array<Vec3, 2> t{};
        for (int c = 0; c < 3; ++c) {
            t[0][c] = ct * cp * e1_[c] + ct * sp * e2_[c] - st * n_[c];
            t[1][c] = -st * sp * e1_[c] + st * cp * e2_[c];
        }
        return t;
    }

private:
    Vec3 n_, e1_{}, e2_{};
};

// Rescaling to the unit cube followed by the first-coordinate integral map.
// Only metrics whose density f does not depend on u^2 are supported; then
// z^2 = u^2 and dz/du = diag(f, 1).
class PsiMap {
public:
    PsiMap(std::shared_ptr<const MetricModel> base, const Grid& g) : base_(std::move(base)), g_(g) {
        dim_ = g.dim;
        for (int a = 0; a < 2; ++a) L_[a] = a < dim_ ? g.extent(a) : 1.0;
        const int cells = std::max(1024, 8 * g.n[0]);
        du_ = 1.0 / cells;
        f_.resize(cells + 1);
        df_.resize(cells + 1);
        Z_.assign(cells + 1, 0.0);
        for (int k = 0; k <= cells; ++k) {
            const auto [f, d] = density({k * du_, 0.0});
            f_[k] = f;
            df_[k] = d[0];
        }
        check_separable();
        for (int k = 0; k < cells; ++k)
            Z_[k + 1] = Z_[k] + du_ * (0.5 * (f_[k] + f_[k + 1]) + du_ * (df_[k] - df_[k + 1]) / 12.0);
    }

    int dim() const { return dim_; }
    double z_extent() const { return Z_.back(); }
    std::array<double, 2> L() const { return L_; }
    const MetricModel& base() const { return *base_; }

    Point x_of_u(const Point& u) const {
        return {g_.lo[0] + L_[0] * u[0], dim_ == 2 ? g_.lo[1] + L_[1] * u[1] : 0.0};
    }
    Point u_of_x(const Point& x) const {
        return {(x[0] - g_.lo[0]) / L_[0], dim_ == 2 ? (x[1] - g_.lo[1]) / L_[1] : 0.0};
    }

    // f = |h_u|^{1/2} and its gradient in u.
    std::pair<double, std::array<double, 2>> density(const Point& u) const {
        const MetricSample s = base_->eval(x_of_u(u));
        const double det = determinant(s.h, dim_);
        if (!(det > 0.0) || !std::isfinite(det)) throw NonPositiveDensity("metric density f <= 0 in a chart");
        const Sym2 inv = inverse(s.h, dim_);
        const double scale = L_[0] * (dim_ == 2 ? L_[1] : 1.0);
        const double f = scale * std::sqrt(det);
        std::array<double, 2> d{0.0, 0.0};
        for (int c = 0; c < dim_; ++c) {
            const Sym2& dh = s.dh[c];
            double tr = inv[0] * dh[0];
            if (dim_ == 2) tr += 2.0 * inv[1] * dh[1] + inv[2] * dh[2];
            d[c] = L_[c] * 0.5 * f * tr;
        }
        return {f, d};
    }

    double z1_of_u1(double u) const {
        if (u <= 0.0) return u * f_.front();
        if (u >= 1.0) return Z_.back() + (u - 1.0) * f_.back();
        const int cells = static_cast<int>(f_.size()) - 1;
        const int k = std::min(cells - 1, static_cast<int>(u / du_));
        const double t = (u - k * du_) / du_;
        const double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
        const double H00 = 0.5 * t4 - t3 + t, H10 = 0.25 * t4 - 2.0 * t3 / 3.0 + 0.5 * t2;
        const double H01 = -0.5 * t4 + t3, H11 = 0.25 * t4 - t3 / 3.0;
        return Z_[k] + du_ * (f_[k] * H00 + du_ * df_[k] * H10 + f_[k + 1] * H01 + du_ * df_[k + 1] * H11);
    }

    double u1_of_z1(double z) const {
        if (z <= 0.0) return z / f_.front();
        if (z >= Z_.back()) return 1.0 + (z - Z_.back()) / f_.back();
        const auto it = std::upper_bound(Z_.begin(), Z_.end(), z);
        const int k = static_cast<int>(it - Z_.begin()) - 1;
        double lo = k * du_, hi = (k + 1) * du_;
        double u = lo + (z - Z_[k]) / (Z_[k + 1] - Z_[k]) * du_;
        // Safeguarded Newton; Z is strictly increasing because f > 0.
        for (int it2 = 0; it2 < 60; ++it2) {
            const double r = z1_of_u1(u) - z;
            if (std::abs(r) <= 1e-15 * std::max(1.0, std::abs(z))) break;
            if (r > 0.0) hi = u; else lo = u;
            double next = u - r / density({u, 0.0}).first;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - u) <= 1e-12 * du_) { u = next; break; }
            u = next;
        }
        return u;
    }

    Point z_of_u(const Point& u) const { return {z1_of_u1(u[0]), u[1]}; }
    Point u_of_z(const Point& z) const { return {u1_of_z1(z[0]), z[1]}; }

private:
    void check_separable() const {
        if (dim_ == 1) return;
        for (int k = 0; k <= 8; ++k) {
            const double u1 = k / 8.0;
            const double f0 = density({u1, 0.0}).first;
            for (int j = 1; j <= 8; ++j) {
                const double f = density({u1, j / 9.0}).first;
                if (std::abs(f - f0) > 1e-12 * std::abs(f0))
                    throw ConfigInvalid("unit-volume construction requires a density independent of the second coordinate");
            }
        }
    }

    std::shared_ptr<const MetricModel> base_;
    Grid g_;
    int dim_ = 1;
    std::array<double, 2> L_{1.0, 1.0};
    double du_ = 0.0;
    std::vector<double> f_, df_, Z_;
};

Mat2 full(const Sym2& s) { return {{{s[0], s[1]}, {s[1], s[2]}}}; }
Mat2 transpose(const Mat2& a) { return {{{a[0][0], a[1][0]}, {a[0][1], a[1][1]}}}; }

class UnitVolumeMetric final : public MetricModel {
public:
    explicit UnitVolumeMetric(std::shared_ptr<const PsiMap> psi) : psi_(std::move(psi)) {}
    int dim() const override { return psi_->dim(); }
    std::string name() const override { return "unit-volume(" + psi_->base().name() + ")"; }

    MetricSample eval(const Point& z) const override {
        const int d = psi_->dim();
        const Point u = psi_->u_of_z(z);
        const MetricSample s = psi_->base().eval(psi_->x_of_u(u));
        const auto L = psi_->L();
        const auto [f, df] = psi_->density(u);
        Mat2 hu = full(s.h);
        std::array<Mat2, 2> dhu{full(s.dh[0]), full(s.dh[1])};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                hu[i][j] *= L[i] * L[j];
                for (int c = 0; c < 2; ++c) dhu[c][i][j] *= L[c] * L[i] * L[j];
            }
        const Mat2 M{{{1.0 / f, 0.0}, {0.0, 1.0}}};
        const Mat2 Mt = transpose(M);
        const Mat2 hz = mat_mul(Mt, mat_mul(hu, M));
        std::array<Mat2, 2> dhz_u{};
        for (int c = 0; c < d; ++c) {
            const Mat2 dM{{{-df[c] / (f * f), 0.0}, {0.0, 0.0}}};
            const Mat2 a = mat_mul(transpose(dM), mat_mul(hu, M));
            const Mat2 b = mat_mul(Mt, mat_mul(dhu[c], M));
            const Mat2 e = mat_mul(Mt, mat_mul(hu, dM));
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) dhz_u[c][i][j] = a[i][j] + b[i][j] + e[i][j];
        }
        MetricSample out;
        if (d == 1) {
            out.h = {hz[0][0], 0.0, 1.0};
            out.dh[0] = {M[0][0] * dhz_u[0][0][0], 0.0, 0.0};
            return out;
        }
        out.h = {hz[0][0], hz[0][1], hz[1][1]};
        for (int a = 0; a < 2; ++a) {
            Mat2 g{};
            for (int c = 0; c < 2; ++c)
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) g[i][j] += M[c][a] * dhz_u[c][i][j];
            out.dh[a] = {g[0][0], g[0][1], g[1][1]};
        }
        return out;
    }

private:
    std::shared_ptr<const PsiMap> psi_;
};

class UnitVolumeMap final : public ChartMap {
public:
    UnitVolumeMap(std::shared_ptr<const PsiMap> psi, std::shared_ptr<const ChartMap> base)
        : psi_(std::move(psi)), base_(std::move(base)) {}

    Vec3 embed(const Point& z) const override { return base_->embed(psi_->x_of_u(psi_->u_of_z(z))); }

    std::optional<Point> coords(const Vec3& p) const override {
        auto x = base_->coords(p);
        if (!x) return std::nullopt;
        return psi_->z_of_u(psi_->u_of_x(*x));
    }

    std::array<Vec3, 2> tangent(const Point& z) const override {
        const Point u = psi_->u_of_z(z);
        const auto tx = base_->tangent(psi_->x_of_u(u));
        const auto L = psi_->L();
        const double f = psi_->density(u).first;
        const std::array<double, 2> col_scale{L[0] / f, L[1]};
        std::array<Vec3, 2> t{};
        for (int a = 0; a < 2; ++a)
            for (int c = 0; c < 3; ++c) t[a][c] = tx[a][c] * col_scale[a];
        return t;
    }

private:
    std::shared_ptr<const PsiMap> psi_;
    std::shared_ptr<const ChartMap> base_;
};

bool is_unit_volume(const MetricField& m) {
    for (double d : m.det)
        if (std::abs(d - 1.0) > 1e-14) return false;
    return true;
}

}  // namespace

std::shared_ptr<const ChartMap> polar_chart_map(const Vec3& axis) { return std::make_shared<PolarMap>(axis); }

bool Chart::contains(const Point& x) const {
    for (int a = 0; a < grid.dim; ++a) {
        if (grid.periodic[a]) continue;
        const double tol = 1e-12 * grid.extent(a);
        if (x[a] < grid.lo[a] - tol || x[a] > grid.hi[a] + tol) return false;
    }
    return true;
}

Point Chart::wrap(Point x) const {
    for (int a = 0; a < grid.dim; ++a) {
        if (!grid.periodic[a]) continue;
        const double L = grid.extent(a);
        x[a] = grid.lo[a] + std::fmod(std::fmod(x[a] - grid.lo[a], L) + L, L);
    }
    return x;
}

double Chart::boundary_distance(const Point& x) const {
    double d = std::numeric_limits<double>::infinity();
    for (int a = 0; a < grid.dim; ++a) {
        if (grid.periodic[a]) continue;
        d = std::min({d, x[a] - grid.lo[a], grid.hi[a] - x[a]});
    }
    return d;
}

ChartPtr make_chart(std::string id, const Grid& g, std::shared_ptr<const MetricModel> model,
                    std::shared_ptr<const ChartMap> map) {
    g.validate();
    auto c = std::make_shared<Chart>();
    c->id = std::move(id);
    c->grid = g;
    c->metric = make_metric(g, *model);
    c->model = std::move(model);
    c->map = std::move(map);
    c->unit_volume = is_unit_volume(c->metric);
    return c;
}

ChartPtr make_sampled_chart(std::string id, const Grid& g, std::array<Samples, 3> h,
                            std::shared_ptr<const ChartMap> map) {
    g.validate();
    auto c = std::make_shared<Chart>();
    c->id = std::move(id);
    c->grid = g;
    c->metric = make_metric(g, std::move(h));
    c->map = std::move(map);
    c->unit_volume = is_unit_volume(c->metric);
    return c;
}

ChartPtr regrid(const Chart& c, std::array<int, 2> n) {
    Grid g = c.grid;
    g.n = {n[0], c.grid.dim == 2 ? n[1] : 1};
    if (g.n == c.grid.n) return std::make_shared<Chart>(c);
    if (!c.model) throw ConfigInvalid("chart '" + c.id + "' has sampled metric data and a fixed node layout");
    auto out = make_chart(c.id, g, c.model, c.map);
    auto mut = std::const_pointer_cast<Chart>(out);
    mut->unit_volume = c.unit_volume || mut->unit_volume;
    return out;
}

int Atlas::index_of(const std::string& id) const {
    for (std::size_t k = 0; k < charts.size(); ++k)
        if (charts[k]->id == id) return static_cast<int>(k);
    throw AtlasMismatch("no chart with id '" + id + "'");
}

std::optional<Point> Atlas::transition(int from, int to, const Point& x) const {
    const Chart& a = *charts.at(static_cast<std::size_t>(from));
    const Chart& b = *charts.at(static_cast<std::size_t>(to));
    if (from == to) return a.contains(x) ? std::optional<Point>(a.wrap(x)) : std::nullopt;
    if (!a.map || !b.map) throw AtlasMismatch("charts without embedding maps have no transition");
    auto y = b.map->coords(a.map->embed(x));
    if (!y || !b.contains(*y)) return std::nullopt;
    return b.wrap(*y);
}

Mat2 Atlas::transition_jacobian(int from, int to, const Point& x) const {
    if (from == to) return {{{1.0, 0.0}, {0.0, 1.0}}};
    const Chart& a = *charts.at(static_cast<std::size_t>(from));
    const Chart& b = *charts.at(static_cast<std::size_t>(to));
    auto y = b.map->coords(a.map->embed(x));
    if (!y) throw AtlasMismatch("transition undefined at the requested point");
    const auto ta = a.map->tangent(x);
    const auto tb = b.map->tangent(*y);
    // Least-squares left inverse of tb applied to ta: (tb^T tb)^{-1} tb^T ta.
    Mat2 G{}, P{};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            G[i][j] = dot(tb[i], tb[j]);
            P[i][j] = dot(tb[i], ta[j]);
        }
    return mat_mul(mat_inv(G, 2), P);
}

Atlas with_resolution(const Atlas& a, int resolution) {
    if (resolution < 8) throw ConfigInvalid("resolution must be at least 8");
    Atlas out = a;
    for (auto& c : out.charts) c = regrid(*c, {resolution, resolution});
    return out;
}

Atlas build_unit_volume_atlas(const Atlas& a) {
    Atlas out;
    out.name = a.name;
    out.dim = a.dim;
    out.unit_volume = true;
    for (const auto& c : a.charts) {
        if (is_unit_volume(c->metric)) {
            auto copy = std::make_shared<Chart>(*c);
            copy->unit_volume = true;
            out.charts.push_back(copy);
            continue;
        }
        if (!c->model) throw ConfigInvalid("unit-volume construction needs a closed-form metric on chart '" + c->id + "'");
        auto psi = std::make_shared<const PsiMap>(c->model, c->grid);
        Grid g = c->grid;
        g.lo = {0.0, 0.0};
        g.hi = {psi->z_extent(), 1.0};
        auto model = std::make_shared<const UnitVolumeMetric>(psi);
        std::shared_ptr<const ChartMap> map;
        if (c->map) map = std::make_shared<const UnitVolumeMap>(psi, c->map);
        auto nc = std::const_pointer_cast<Chart>(make_chart(c->id, g, model, map));
        nc->unit_volume = true;
        out.charts.push_back(nc);
    }
    return out;
}

UnitVolumeMapInfo unit_volume_map_info(const Chart& base) {
    if (!base.model) throw ConfigInvalid("unit-volume construction needs a closed-form metric");
    auto psi = std::make_shared<const PsiMap>(base.model, base.grid);
    UnitVolumeMapInfo info;
    info.z_extent = psi->z_extent();
    info.z_of_x = [psi](const Point& x) { return psi->z_of_u(psi->u_of_x(x)); };
    info.x_of_z = [psi](const Point& z) { return psi->x_of_u(psi->u_of_z(z)); };
    return info;
}

}  // namespace sce
