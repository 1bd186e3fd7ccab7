#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sce/grid.hpp"
#include "sce/metric.hpp"

namespace sce {

using Vec3 = std::array<double, 3>;
using Mat2 = std::array<std::array<double, 2>, 2>;  // m[row][col]

// Chart coordinates <-> points of the embedded model manifold. Transition maps
// between charts are composed from two of these.
class ChartMap {
public:
    virtual ~ChartMap() = default;
    virtual Vec3 embed(const Point& x) const = 0;
    // Coordinates of p; may lie outside the chart box. Empty where the
    // coordinate system degenerates.
    virtual std::optional<Point> coords(const Vec3& p) const = 0;
    // Columns d embed / d x^a.
    virtual std::array<Vec3, 2> tangent(const Point& x) const = 0;
};

// Polar coordinates (theta, phi) on the unit sphere about `axis`.
std::shared_ptr<const ChartMap> polar_chart_map(const Vec3& axis);

struct Chart {
    std::string id;
    Grid grid;
    std::shared_ptr<const MetricModel> model;  // null when the metric came from raw samples
    MetricField metric;
    std::shared_ptr<const ChartMap> map;  // null on single-chart manifolds
    bool unit_volume = false;

    int dim() const { return grid.dim; }
    bool contains(const Point& x) const;
    Point wrap(Point x) const;
    // Distance from x to the nearest non-periodic face (infinite if none).
    double boundary_distance(const Point& x) const;
};

using ChartPtr = std::shared_ptr<const Chart>;

ChartPtr make_chart(std::string id, const Grid& g, std::shared_ptr<const MetricModel> model,
                    std::shared_ptr<const ChartMap> map = nullptr);
ChartPtr make_sampled_chart(std::string id, const Grid& g, std::array<Samples, 3> h,
                            std::shared_ptr<const ChartMap> map = nullptr);
// Same chart on a different node layout (metric resampled from the model).
ChartPtr regrid(const Chart& c, std::array<int, 2> n);

struct Atlas {
    std::string name;
    int dim = 1;
    std::vector<ChartPtr> charts;
    bool unit_volume = false;

    int index_of(const std::string& id) const;
    // Coordinates of chart `from`'s point x in chart `to`; empty when the
    // point is outside chart `to`.
    std::optional<Point> transition(int from, int to, const Point& x) const;
    // d x_to / d x_from at x (x in chart `from`).
    Mat2 transition_jacobian(int from, int to, const Point& x) const;
};

using AtlasPtr = std::shared_ptr<const Atlas>;

// Every chart resampled with `resolution` nodes on each axis. Throws
// ConfigInvalid below 8 nodes or for charts with sampled metric data.
Atlas with_resolution(const Atlas& a, int resolution);

// Unit-volume construction: every chart is rescaled to the unit cube and then
// mapped by z^1 = int_0^{u^1} |h_u|^{1/2}(s, u^2) ds, z^2 = u^2. Charts whose
// determinant is already 1 are kept as they are. Throws NonPositiveDensity.
Atlas build_unit_volume_atlas(const Atlas& a);

// Exposed for tests: the first-coordinate map of the construction above.
struct UnitVolumeMapInfo {
    double z_extent = 0.0;
    std::function<Point(const Point&)> z_of_x;
    std::function<Point(const Point&)> x_of_z;
};
UnitVolumeMapInfo unit_volume_map_info(const Chart& base);

Mat2 mat_mul(const Mat2& a, const Mat2& b);
Mat2 mat_inv(const Mat2& a, int dim);

}  // namespace sce
