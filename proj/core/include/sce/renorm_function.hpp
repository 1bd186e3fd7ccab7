#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sce {

// Sup bounds of |F|, |F'|, |F''| over the declared range [lo, hi].
struct BoundednessCertificate {
    double lo = 0.0;
    double hi = 0.0;
    double sup_F = 0.0;
    double sup_dF = 0.0;
    double sup_d2F = 0.0;
};

// A C^2 function F with exact first and second derivatives.
struct RenormFunction {
    std::string name;
    std::function<double(double)> F;
    std::function<double(double)> dF;
    std::function<double(double)> d2F;
    std::optional<BoundednessCertificate> certificate;
    // |xi| where F'' is only one-sided smooth (derivative probes skip them).
    std::vector<double> breakpoints;
};

// G_F(xi) = xi F'(xi) - F(xi).
inline double gf(const RenormFunction& f, double xi) { return xi * f.dF(xi) - f.F(xi); }

// F(xi) = xi, certified on [-range, range].
RenormFunction linear_function(double range = 1e6);

}  // namespace sce
