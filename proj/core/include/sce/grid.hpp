#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <vector>

namespace sce {

using Samples = std::vector<double>;
using Point = std::array<double, 2>;

// Uniform tensor-product grid on an axis-aligned box, d in {1, 2}.
// Periodic axes hold n nodes on [lo, hi) with spacing (hi-lo)/n; other axes
// hold n nodes on [lo, hi] including both ends. Storage is row-major with
// axis 1 fastest; a 1-d grid has n[1] == 1.
struct Grid {
    int dim = 1;
    std::array<int, 2> n{8, 1};
    std::array<double, 2> lo{0.0, 0.0};
    std::array<double, 2> hi{1.0, 1.0};
    std::array<bool, 2> periodic{false, false};
    // Accuracy order of the centered first-derivative stencil: 2 or 4.
    int order = 4;

    static Grid line(int n, double lo, double hi, bool periodic, int order = 4);
    static Grid plane(std::array<int, 2> n, std::array<double, 2> lo, std::array<double, 2> hi,
                      std::array<bool, 2> periodic, int order = 4);

    double h(int axis) const;
    double x(int axis, int i) const;
    Point node(std::size_t k) const;
    std::size_t size() const { return static_cast<std::size_t>(n[0]) * static_cast<std::size_t>(n[1]); }
    std::size_t at(int i, int j = 0) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(n[1]) + static_cast<std::size_t>(j);
    }
    std::array<int, 2> ij(std::size_t k) const {
        return {static_cast<int>(k / static_cast<std::size_t>(n[1])), static_cast<int>(k % static_cast<std::size_t>(n[1]))};
    }
    double extent(int axis) const { return hi[axis] - lo[axis]; }
    double cell_volume() const;
    bool same_layout(const Grid& other) const;
    void validate() const;
};

Samples sample(const Grid& g, const std::function<double(const Point&)>& f);

// Centered first derivative along an axis. Non-periodic ends use one-sided
// stencils of the same order; dynamic fields are expected to vanish there.
Samples diff(const Grid& g, const Samples& f, int axis);

// Composite trapezoid weights (cell volume folded in).
Samples trapezoid_weights(const Grid& g);
double trapezoid(const Grid& g, const Samples& f);

// 1 on nodes at least `layer` nodes away from every non-periodic end, else 0.
Samples interior_mask(const Grid& g, int layer);

// sqrt(sum w f^2) for a nonnegative weight field w.
double weighted_l2(const Samples& f, const Samples& w);
double max_abs(const Samples& f);

// Pointwise helpers.
Samples add(const Samples& a, const Samples& b);
Samples sub(const Samples& a, const Samples& b);
Samples mul(const Samples& a, const Samples& b);
Samples scale(const Samples& a, double s);
void axpy(Samples& y, double a, const Samples& x);

}  // namespace sce
