#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sce/geometry.hpp"

namespace sce {

// Closed-form fields evaluated at a chart point; vector functions return chart
// components. These let the same field be sampled on any chart or window.
using ChartScalarFn = std::function<double(const Chart&, const Point&)>;
using ChartVectorFn = std::function<std::array<double, 2>(const Chart&, const Point&)>;

ScalarField sample_scalar(const ChartPtr& c, const ChartScalarFn& f);
VectorField sample_vector(const ChartPtr& c, const ChartVectorFn& f);

// Fields on the embedded sphere: ambient values at the embedded point; vectors
// are projected onto the chart tangent plane.
ChartScalarFn from_ambient(std::function<double(const Vec3&)> f);
ChartVectorFn from_ambient_vector(std::function<Vec3(const Vec3&)> v);

// C-infinity bump supported on (lo, hi), equal to 1 on the middle half.
double plateau(double x, double lo, double hi);

// Velocity u and noise fields a_1..a_N of the continuity equation. The
// presets are steady in time.
struct CoefficientPreset {
    std::string name;
    ChartVectorFn u;
    std::vector<ChartVectorFn> a;
};

// Presets by manifold family:
//   1-d torus:  zero, const (a = c d_z), generic
//   2-d torus:  zero, rotation-const, shear, generic, kink
//   sphere:     zero, rotation-const, generic
// Throws ConfigInvalid for unknown names.
CoefficientPreset coefficient_preset(const std::string& name, const Atlas& atlas);
std::vector<std::string> coefficient_preset_names(const Atlas& atlas);

// Initial densities: "wave" (1.5 + a first Fourier mode; torus only),
// "bump" (compactly supported; on the sphere it sits in the polar band
// 0.7 < theta < pi - 0.7 about e_z) and "zero". Throws ConfigInvalid.
ChartScalarFn initial_density(const std::string& name, const Atlas& atlas);
std::vector<std::string> initial_density_names(const Atlas& atlas);

// True for the two-chart embedded sphere fixtures.
bool is_sphere(const Atlas& atlas);

}  // namespace sce
