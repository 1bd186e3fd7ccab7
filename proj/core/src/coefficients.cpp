#include "sce/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sce/errors.hpp"

namespace sce {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// Polar angle about e_z; smooth away from the poles.
double theta_z(const Vec3& p) { return std::acos(std::clamp(p[2], -1.0, 1.0)); }

CoefficientPreset torus1(const std::string& name) {
    CoefficientPreset p{name, {}, {}};
    auto zero = [](const Chart&, const Point&) { return std::array<double, 2>{0.0, 0.0}; };
    if (name == "zero") {
        p.u = zero;
        p.a = {zero};
    } else if (name == "const") {
        p.u = zero;
        p.a = {[](const Chart&, const Point&) { return std::array<double, 2>{0.5, 0.0}; }};
    } else if (name == "generic") {
        p.u = [](const Chart&, const Point& x) { return std::array<double, 2>{0.3 * std::sin(kTwoPi * x[0]), 0.0}; };
        p.a = {[](const Chart&, const Point& x) {
            return std::array<double, 2>{0.3 + 0.15 * std::sin(kTwoPi * x[0]), 0.0};
        }};
    } else {
        throw ConfigInvalid("unknown coefficient preset '" + name + "' for a 1-d torus");
    }
    return p;
}

CoefficientPreset torus2(const std::string& name, double period) {
    const double k = kTwoPi / period;
    CoefficientPreset p{name, {}, {}};
    auto zero = [](const Chart&, const Point&) { return std::array<double, 2>{0.0, 0.0}; };
    auto a1c = [](const Chart&, const Point&) { return std::array<double, 2>{0.2, 0.0}; };
    auto a2c = [](const Chart&, const Point&) { return std::array<double, 2>{0.0, 0.2}; };
    if (name == "zero") {
        p.u = zero;
        p.a = {zero};
    } else if (name == "rotation-const") {
        // Cellular flow: divergence-free, tangent to the cell walls.
        p.u = [k](const Chart&, const Point& x) {
            return std::array<double, 2>{0.3 * std::sin(k * x[0]) * std::cos(k * x[1]),
                                         -0.3 * std::cos(k * x[0]) * std::sin(k * x[1])};
        };
        p.a = {a1c, a2c};
    } else if (name == "shear") {
        p.u = [k](const Chart&, const Point& x) { return std::array<double, 2>{0.3 * std::sin(k * x[1]), 0.0}; };
        p.a = {a1c, a2c};
    } else if (name == "generic") {
        p.u = [k](const Chart&, const Point& x) {
            return std::array<double, 2>{0.2 * std::sin(k * x[0]) + 0.1 * std::cos(k * x[1]),
                                         0.15 * std::sin(k * x[1]) * std::cos(k * x[0])};
        };
        p.a = {[k](const Chart&, const Point& x) {
                   return std::array<double, 2>{0.2 + 0.1 * std::sin(k * x[0]), 0.1 * std::cos(k * x[0])};
               },
               [k](const Chart&, const Point& x) {
                   return std::array<double, 2>{0.1 * std::sin(k * x[1]), 0.2 + 0.1 * std::cos(k * (x[0] + x[1]))};
               }};
    } else if (name == "kink") {
        // Sobolev-rough shear |y - 1/2|^0.6 (period-scaled); divergence-free.
        p.u = [period](const Chart&, const Point& x) {
            const double y = x[1] / period;
            return std::array<double, 2>{0.2 * std::pow(std::abs(y - 0.5), 0.6), 0.0};
        };
        p.a = {a1c, a2c};
    } else {
        throw ConfigInvalid("unknown coefficient preset '" + name + "' for a 2-d torus");
    }
    return p;
}

CoefficientPreset sphere(const std::string& name) {
    CoefficientPreset p{name, {}, {}};
    const Vec3 ez{0.0, 0.0, 1.0};
    // d_phi about e_z: the rotation field e_z x p.
    auto rot = [ez](double w) { return from_ambient_vector([ez, w](const Vec3& q) {
        Vec3 v = cross(ez, q);
        for (auto& c : v) c *= w;
        return v;
    }); };
    if (name == "zero") {
        auto zero = [](const Chart&, const Point&) { return std::array<double, 2>{0.0, 0.0}; };
        p.u = zero;
        p.a = {zero};
    } else if (name == "rotation-const") {
        p.u = rot(0.5);
        p.a = {rot(0.3)};
    } else if (name == "generic") {
        p.u = rot(0.5);
        // b(theta) grad(p_z), compactly supported in the polar angle about e_z.
        p.a = {rot(0.3), from_ambient_vector([](const Vec3& q) {
                   const double b = 0.25 * plateau(theta_z(q), 0.6, std::numbers::pi - 0.6);
                   return Vec3{-b * q[2] * q[0], -b * q[2] * q[1], b * (1.0 - q[2] * q[2])};
               })};
    } else {
        throw ConfigInvalid("unknown coefficient preset '" + name + "' for the sphere");
    }
    return p;
}

}  // namespace

double plateau(double x, double lo, double hi) {
    if (x <= lo || x >= hi) return 0.0;
    const double q = 0.25 * (hi - lo);
    auto step = [](double t) {
        if (t <= 0.0) return 0.0;
        if (t >= 1.0) return 1.0;
        const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
        return a / (a + b);
    };
    return step((x - lo) / q) * step((hi - x) / q);
}

ScalarField sample_scalar(const ChartPtr& c, const ChartScalarFn& f) {
    return make_scalar(c, [&](const Point& x) { return f(*c, x); });
}

VectorField sample_vector(const ChartPtr& c, const ChartVectorFn& f) {
    return make_vector(c, [&](const Point& x) { return f(*c, x); });
}

ChartScalarFn from_ambient(std::function<double(const Vec3&)> f) {
    return [f = std::move(f)](const Chart& c, const Point& x) {
        if (!c.map) throw AtlasMismatch("ambient field on a chart without an embedding");
        return f(c.map->embed(x));
    };
}

ChartVectorFn from_ambient_vector(std::function<Vec3(const Vec3&)> v) {
    return [v = std::move(v)](const Chart& c, const Point& x) {
        if (!c.map) throw AtlasMismatch("ambient field on a chart without an embedding");
        const Vec3 w = v(c.map->embed(x));
        const auto t = c.map->tangent(x);
        Mat2 G{};
        std::array<double, 2> b{};
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) G[i][j] = t[i][0] * t[j][0] + t[i][1] * t[j][1] + t[i][2] * t[j][2];
            b[i] = t[i][0] * w[0] + t[i][1] * w[1] + t[i][2] * w[2];
        }
        const Mat2 Gi = mat_inv(G, 2);
        return std::array<double, 2>{Gi[0][0] * b[0] + Gi[0][1] * b[1], Gi[1][0] * b[0] + Gi[1][1] * b[1]};
    };
}

bool is_sphere(const Atlas& atlas) {
    return atlas.dim == 2 && atlas.charts.size() == 2 && atlas.charts[0]->map && atlas.charts[1]->map;
}

CoefficientPreset coefficient_preset(const std::string& name, const Atlas& atlas) {
    if (is_sphere(atlas)) return sphere(name);
    if (atlas.charts.size() != 1) throw ConfigInvalid("coefficient presets need a torus or the sphere fixture");
    const Grid& g = atlas.charts[0]->grid;
    if (atlas.dim == 1) {
        if (!g.periodic[0]) throw ConfigInvalid("coefficient presets need a periodic 1-d chart");
        return torus1(name);
    }
    if (!g.periodic[0] || !g.periodic[1]) throw ConfigInvalid("coefficient presets need a periodic 2-d chart");
    return torus2(name, g.extent(0));
}

std::vector<std::string> coefficient_preset_names(const Atlas& atlas) {
    if (is_sphere(atlas)) return {"zero", "rotation-const", "generic"};
    if (atlas.dim == 1) return {"zero", "const", "generic"};
    return {"zero", "rotation-const", "shear", "generic", "kink"};
}

ChartScalarFn initial_density(const std::string& name, const Atlas& atlas) {
    if (name == "zero") return [](const Chart&, const Point&) { return 0.0; };
    if (is_sphere(atlas)) {
        if (name != "bump") throw ConfigInvalid("the sphere supports the bump and zero initial densities");
        return from_ambient([](const Vec3& q) {
            return plateau(theta_z(q), 0.7, std::numbers::pi - 0.7) * (1.5 + 0.8 * q[0] + 0.4 * q[1] * q[2]);
        });
    }
    if (atlas.charts.empty()) throw ConfigInvalid("empty atlas");
    const Grid& g = atlas.charts[0]->grid;
    const double L = g.extent(0);
    const double k = kTwoPi / L;
    const bool two = atlas.dim == 2;
    if (name == "wave")
        return [k, two](const Chart&, const Point& x) {
            return 1.5 + std::sin(k * x[0]) * (two ? std::cos(k * x[1]) : 1.0);
        };
    if (name == "bump")
        return [L, k, two](const Chart&, const Point& x) {
            const double b = plateau(x[0] / L, 0.15, 0.85) * (two ? plateau(x[1] / L, 0.15, 0.85) : 1.0);
            return b * (1.5 + std::sin(k * x[0]));
        };
    throw ConfigInvalid("unknown initial density '" + name + "'");
}

std::vector<std::string> initial_density_names(const Atlas& atlas) {
    if (is_sphere(atlas)) return {"bump", "zero"};
    return {"wave", "bump", "zero"};
}

}  // namespace sce
