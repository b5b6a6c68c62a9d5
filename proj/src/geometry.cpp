#include "ns2d/geometry.hpp"

#include <cmath>

namespace ns2d {

void MotionLaw::bubble_state(double t, Vec2& c, double& dxi, double& dzeta) const {
    const double s = std::sin(2.0 * M_PI * frequency * t);
    if (kind == MotionKind::BubbleTranslation) {
        c = {0.0, amplitude * s};
        dxi = bubble_radius;
        dzeta = bubble_radius;
    } else if (kind == MotionKind::BubbleEllipsoidal) {
        c = {0.0, 0.0};
        dzeta = bubble_radius * (1.0 + amplitude * s);
        dxi = std::sqrt(bubble_radius * bubble_radius * bubble_radius / dzeta);
    } else {
        throw ConfigError("bubble_state: motion law is not a bubble kind");
    }
}

void MotionLaw::bubble_rates(double t, Vec2& c_dot, double& dxi_dot, double& dzeta_dot) const {
    const double w = 2.0 * M_PI * frequency;
    const double cs = std::cos(w * t);
    if (kind == MotionKind::BubbleTranslation) {
        c_dot = {0.0, amplitude * w * cs};
        dxi_dot = 0.0;
        dzeta_dot = 0.0;
    } else if (kind == MotionKind::BubbleEllipsoidal) {
        c_dot = {0.0, 0.0};
        dzeta_dot = bubble_radius * amplitude * w * cs;
        // d/dt sqrt(R^3 / dz) = -1/2 sqrt(R^3) dz^{-3/2} dz'
        const double dz = bubble_radius * (1.0 + amplitude * std::sin(w * t));
        dxi_dot = -0.5 * std::sqrt(bubble_radius * bubble_radius * bubble_radius) *
                  std::pow(dz, -1.5) * dzeta_dot;
    } else {
        throw ConfigError("bubble_rates: motion law is not a bubble kind");
    }
}

double LevelSetField::eval_static(double x, double y) const {
    switch (shape) {
    case ShapeKind::Disk: {
        const double dx = x - center.x, dy = y - center.y;
        return disk_radius - std::sqrt(dx * dx + dy * dy);
    }
    case ShapeKind::Ellipse: {
        const double c = std::cos(ellipse_theta), s = std::sin(ellipse_theta);
        const double xr = c * x - s * y;
        const double yr = s * x + c * y;
        return 1.0 - xr * xr / (ellipse_a * ellipse_a) - yr * yr / (ellipse_b * ellipse_b);
    }
    case ShapeKind::Flower: {
        double r = std::sqrt(x * x + y * y);
        if (r < 1e-12) return flower_a; // origin is deep inside the obstacle
        // (y^5 + 5x^4 y - 10x^2 y^3)/r^5 == sin(5*alpha)
        const double alpha = std::atan2(y, x);
        return flower_a - r + flower_b * std::sin(5.0 * alpha);
    }
    case ShapeKind::Custom:
        if (!custom_phi) throw ConfigError("custom level set requires a phi callback");
        return custom_phi(x, y);
    case ShapeKind::None:
        return -1.0;
    }
    throw ConfigError("unknown level-set shape kind");
}

Vec2 LevelSetField::grad_static(double x, double y) const {
    switch (shape) {
    case ShapeKind::Disk: {
        const double dx = x - center.x, dy = y - center.y;
        const double r = std::sqrt(dx * dx + dy * dy);
        if (r < 1e-14) return {0.0, 0.0};
        return {-dx / r, -dy / r};
    }
    case ShapeKind::Ellipse: {
        const double c = std::cos(ellipse_theta), s = std::sin(ellipse_theta);
        const double xr = c * x - s * y;
        const double yr = s * x + c * y;
        const double gxr = -2.0 * xr / (ellipse_a * ellipse_a);
        const double gyr = -2.0 * yr / (ellipse_b * ellipse_b);
        return {gxr * c + gyr * s, -gxr * s + gyr * c};
    }
    case ShapeKind::Flower: {
        double r = std::sqrt(x * x + y * y);
        if (r < 1e-12) return {0.0, 0.0};
        const double alpha = std::atan2(y, x);
        const double amp = 5.0 * flower_b * std::cos(5.0 * alpha);
        // grad alpha = (-y, x)/r^2
        return {-x / r - amp * y / (r * r), -y / r + amp * x / (r * r)};
    }
    case ShapeKind::Custom: {
        const double d = fd_step;
        return {(eval_static(x + d, y) - eval_static(x - d, y)) / (2.0 * d),
                (eval_static(x, y + d) - eval_static(x, y - d)) / (2.0 * d)};
    }
    case ShapeKind::None:
        return {0.0, 0.0};
    }
    throw ConfigError("unknown level-set shape kind");
}

double LevelSetField::eval(const Point& p, double t) const {
    switch (motion.kind) {
    case MotionKind::Static:
        return eval_static(p.x, p.y);
    case MotionKind::RigidRotation: {
        const double c = std::cos(motion.omega * t), s = std::sin(motion.omega * t);
        return eval_static(c * p.x - s * p.y, s * p.x + c * p.y);
    }
    case MotionKind::BubbleTranslation:
    case MotionKind::BubbleEllipsoidal: {
        Vec2 ctr;
        double dxi, dzeta;
        motion.bubble_state(t, ctr, dxi, dzeta);
        const double xr = (p.x - ctr.x) / dxi;
        const double yr = (p.y - ctr.y) / dzeta;
        return 1.0 - xr * xr - yr * yr;
    }
    }
    throw ConfigError("unknown motion kind");
}

Vec2 LevelSetField::grad(const Point& p, double t) const {
    switch (motion.kind) {
    case MotionKind::Static:
        return grad_static(p.x, p.y);
    case MotionKind::RigidRotation: {
        const double c = std::cos(motion.omega * t), s = std::sin(motion.omega * t);
        const Vec2 g = grad_static(c * p.x - s * p.y, s * p.x + c * p.y);
        return {c * g.x + s * g.y, -s * g.x + c * g.y};
    }
    case MotionKind::BubbleTranslation:
    case MotionKind::BubbleEllipsoidal: {
        Vec2 ctr;
        double dxi, dzeta;
        motion.bubble_state(t, ctr, dxi, dzeta);
        return {-2.0 * (p.x - ctr.x) / (dxi * dxi), -2.0 * (p.y - ctr.y) / (dzeta * dzeta)};
    }
    }
    throw ConfigError("unknown motion kind");
}

LevelSetField no_obstacle() {
    LevelSetField ls;
    ls.shape = ShapeKind::None;
    return ls;
}

Vec2 boundary_normal(const LevelSetField& ls, const Point& p, double t) {
    const Vec2 g = ls.grad(p, t);
    const double n = g.norm();
    if (n <= 1e-14) throw GeometryError("boundary_normal: vanishing level-set gradient");
    return {g.x / n, g.y / n};
}

CellCut intersect_cell(const double corner_phis[4], const Point corners[4]) {
    bool have_a = false, have_b = false;
    Point a, b;
    int crossings = 0;
    for (int i = 0; i < 4; ++i) {
        const int j = (i + 1) % 4;
        if (corner_phis[i] * corner_phis[j] < 0.0) {
            ++crossings;
            const double theta = corner_phis[i] / (corner_phis[i] - corner_phis[j]);
            const Point p = {corners[i].x + theta * (corners[j].x - corners[i].x),
                             corners[i].y + theta * (corners[j].y - corners[i].y)};
            if (corner_phis[i] < 0.0) {
                a = p;
                have_a = true;
            } else {
                b = p;
                have_b = true;
            }
        }
    }
    if (crossings != 2 || !have_a || !have_b)
        throw GeometryError("intersect_cell: ambiguous cut (" + std::to_string(crossings) +
                            " sign changes)");
    return {a, b};
}

ProjectionResult project_to_boundary(const LevelSetField& ls, const Point& x0, double t, double h,
                                     int max_iterations) {
    // Undamped fixed point: x <- x - phi * grad/|grad|^2. Stops once the
    // residual |phi| falls below 1e-2 h^2 (a handful of iterations for the
    // shapes considered here).
    const double toll = 1e-2 * h * h;
    Point x = x0;
    double phi = ls.eval(x, t);
    int k = 0;
    while (std::abs(phi) > toll) {
        if (k >= max_iterations)
            throw NumericalError("project_to_boundary: no convergence after " +
                                 std::to_string(max_iterations) +
                                 " iterations, residual = " + std::to_string(std::abs(phi)));
        const Vec2 g = ls.grad(x, t);
        const double g2 = g.dot(g);
        if (g2 <= 1e-20)
            throw GeometryError("project_to_boundary: vanishing gradient along iteration path");
        x = x - (phi / g2) * g;
        phi = ls.eval(x, t);
        ++k;
    }
    return {x, k, std::abs(phi)};
}

Vec2 bubble_boundary_velocity(const MotionLaw& motion, double theta, double t) {
    Vec2 c_dot;
    double dxi_dot, dzeta_dot;
    motion.bubble_rates(t, c_dot, dxi_dot, dzeta_dot);
    return {c_dot.x + dxi_dot * std::cos(theta), c_dot.y + dzeta_dot * std::sin(theta)};
}

Vec2 boundary_velocity(const LevelSetField& ls, const Point& p, double t) {
    switch (ls.motion.kind) {
    case MotionKind::Static:
        return {0.0, 0.0};
    case MotionKind::RigidRotation:
        return {-ls.motion.omega * p.y, ls.motion.omega * p.x};
    case MotionKind::BubbleTranslation:
    case MotionKind::BubbleEllipsoidal: {
        Vec2 ctr;
        double dxi, dzeta;
        ls.motion.bubble_state(t, ctr, dxi, dzeta);
        const double theta = std::atan2(p.y - ctr.y, p.x - ctr.x);
        return bubble_boundary_velocity(ls.motion, theta, t);
    }
    }
    throw ConfigError("unknown motion kind");
}

} // namespace ns2d
