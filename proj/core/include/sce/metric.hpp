#pragma once

#include <array>
#include <memory>
#include <string>

#include "sce/grid.hpp"

namespace sce {

// Symmetric 2x2 matrix stored once per unordered pair: (00, 01, 11).
// A 1-d metric uses entry 0 and keeps (01, 11) = (0, 1).
using Sym2 = std::array<double, 3>;

constexpr int sym(int i, int j) { return i == j ? (i == 0 ? 0 : 2) : 1; }

struct MetricSample {
    Sym2 h{1.0, 0.0, 1.0};
    std::array<Sym2, 2> dh{};  // dh[c] = d h / d x^c
};

// Closed-form metric in chart coordinates together with its first derivatives.
class MetricModel {
public:
    virtual ~MetricModel() = default;
    virtual int dim() const = 0;
    virtual MetricSample eval(const Point& x) const = 0;
    virtual std::string name() const = 0;
};

std::shared_ptr<const MetricModel> flat_metric(int dim);
// Round unit sphere in polar coordinates (theta, phi): diag(1, sin^2 theta).
std::shared_ptr<const MetricModel> sphere_polar_metric();
// One-dimensional h_11 = exp(2 z).
std::shared_ptr<const MetricModel> exp_warped_metric();
// Uniform scaling h = c^2 * delta (used by the f = const examples).
std::shared_ptr<const MetricModel> scaled_flat_metric(int dim, double c);
// Accepts "flat", "sphere-polar", "exp-warped-1d".
std::shared_ptr<const MetricModel> metric_preset(const std::string& name, int dim);

struct MetricField {
    Grid grid;
    std::array<Samples, 3> h;
    std::array<Samples, 3> hinv;
    Samples det;
    // First derivatives d h / d x^c. Exact when the field came from a
    // MetricModel, centered differences when it came from raw samples.
    std::array<std::array<Samples, 3>, 2> dh;
    bool analytic_derivatives = false;

    double sqrt_det(std::size_t k) const;
};

// Throws SingularMetric if any node fails positive-definiteness.
MetricField make_metric(const Grid& g, const MetricModel& model);
MetricField make_metric(const Grid& g, std::array<Samples, 3> h);

Sym2 inverse(const Sym2& h, int dim);
double determinant(const Sym2& h, int dim);

}  // namespace sce
