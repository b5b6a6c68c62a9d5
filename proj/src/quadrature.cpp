#include "ns2d/quadrature.hpp"

namespace ns2d {

std::vector<QuadPoint> segment_gauss3(const Point& a, const Point& b) {
    const double len = (b - a).norm();
    std::vector<QuadPoint> q;
    q.reserve(3);
    for (const auto& [t, w] : gauss3_unit())
        q.push_back({{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}, w * len});
    return q;
}

std::vector<QuadPoint> cell_gauss3x3(const Point& ll, double h) {
    std::vector<QuadPoint> q;
    q.reserve(9);
    for (const auto& [tx, wx] : gauss3_unit())
        for (const auto& [ty, wy] : gauss3_unit())
            q.push_back({{ll.x + tx * h, ll.y + ty * h}, wx * wy * h * h});
    return q;
}

std::vector<QuadPoint> triangle_degree4(const Point& a, const Point& b, const Point& c) {
    // Dunavant degree-4 rule, 6 points.
    static const double w1 = 0.223381589678011, w2 = 0.109951743655322;
    static const double a1 = 0.445948490915965, a2 = 0.091576213509771;
    static const double coords[6][3] = {
        {1.0 - 2.0 * a1, a1, a1}, {a1, 1.0 - 2.0 * a1, a1}, {a1, a1, 1.0 - 2.0 * a1},
        {1.0 - 2.0 * a2, a2, a2}, {a2, 1.0 - 2.0 * a2, a2}, {a2, a2, 1.0 - 2.0 * a2}};
    static const double weights[6] = {w1, w1, w1, w2, w2, w2};

    const double area = 0.5 * std::abs((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
    std::vector<QuadPoint> q;
    q.reserve(6);
    for (int i = 0; i < 6; ++i) {
        const double l0 = coords[i][0], l1 = coords[i][1], l2 = coords[i][2];
        q.push_back({{l0 * a.x + l1 * b.x + l2 * c.x, l0 * a.y + l1 * b.y + l2 * c.y},
                     weights[i] * area});
    }
    return q;
}

std::vector<QuadPoint> polygon_degree4(const std::vector<Point>& v) {
    // Signed fan from v[0]: overlapping fan triangles of a non-convex polygon
    // cancel through negative weights, so the rule stays exact.
    std::vector<QuadPoint> q;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        const Point &a = v[0], &b = v[i], &c = v[i + 1];
        const double cross = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        auto tri = triangle_degree4(a, b, c);
        if (cross < 0.0)
            for (auto& p : tri) p.w = -p.w;
        q.insert(q.end(), tri.begin(), tri.end());
    }
    return q;
}

double polygon_area(const std::vector<Point>& v) {
    double a = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto& p = v[i];
        const auto& n = v[(i + 1) % v.size()];
        a += p.x * n.y - n.x * p.y;
    }
    return 0.5 * a;
}

} // namespace ns2d
