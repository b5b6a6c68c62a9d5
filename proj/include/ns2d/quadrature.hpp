#pragma once

#include <array>
#include <vector>

#include "ns2d/geometry.hpp"

namespace ns2d {

struct QuadPoint {
    Point p;
    double w = 0.0;
};

/// 3-point Gauss-Legendre on [0,1] (degree-5 exact).
inline std::array<std::pair<double, double>, 3> gauss3_unit() {
    const double s = std::sqrt(3.0 / 5.0);
    return {{{0.5 * (1.0 - s), 5.0 / 18.0}, {0.5, 8.0 / 18.0}, {0.5 * (1.0 + s), 5.0 / 18.0}}};
}

/// 3-point Gauss rule on the segment [a,b] in the plane; weights sum to |b-a|.
std::vector<QuadPoint> segment_gauss3(const Point& a, const Point& b);

/// 3x3 tensor Gauss rule on an axis-aligned square cell.
std::vector<QuadPoint> cell_gauss3x3(const Point& lower_left, double h);

/// Degree-4-exact rule on a triangle (6 points); weights sum to the area.
std::vector<QuadPoint> triangle_degree4(const Point& a, const Point& b, const Point& c);

/// Fan triangulation of a convex CCW polygon with a degree-4 rule per triangle.
std::vector<QuadPoint> polygon_degree4(const std::vector<Point>& vertices);

/// Shoelace area of a CCW polygon.
double polygon_area(const std::vector<Point>& vertices);

} // namespace ns2d
