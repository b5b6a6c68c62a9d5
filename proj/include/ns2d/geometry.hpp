#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace ns2d {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

using Point = Vec2;

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class GeometryError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class ShapeKind { Disk, Ellipse, Flower, Custom, None };

enum class MotionKind { Static, RigidRotation, BubbleTranslation, BubbleEllipsoidal };

/// Prescribed motion of the obstacle. Rigid rotation composes the initial
/// level set with a rotation of the coordinates; the bubble kinds deform the
/// obstacle ellipse directly and expose the surface velocity.
struct MotionLaw {
    MotionKind kind = MotionKind::Static;
    double omega = 0.0;      // rad/s, rigid rotation
    double amplitude = 0.01; // A, bubble kinds
    double frequency = 10.0; // oscillations per unit time, bubble kinds
    double bubble_radius = 0.258;

    bool is_static() const { return kind == MotionKind::Static; }
    bool is_bubble() const {
        return kind == MotionKind::BubbleTranslation || kind == MotionKind::BubbleEllipsoidal;
    }

    // Center and semi-axes of the bubble at time t.
    void bubble_state(double t, Vec2& center, double& dxi, double& dzeta) const;
    // Time derivatives of center and semi-axes at time t.
    void bubble_rates(double t, Vec2& center_dot, double& dxi_dot, double& dzeta_dot) const;
};

/// Implicit geometry phi(x,y,t). The fluid domain is {phi < 0}; the obstacle
/// boundary is the zero level set. Built-in shapes carry analytic gradients.
struct LevelSetField {
    ShapeKind shape = ShapeKind::Disk;

    // disk
    double disk_radius = 1.0 / std::sqrt(15.0);
    Vec2 center{0.0, 0.0};
    // ellipse (normalized quadratic form, phi > 0 inside the obstacle)
    double ellipse_a = 1.0 / std::sqrt(14.0);
    double ellipse_b = 1.0 / std::sqrt(2.0);
    double ellipse_theta = M_PI / 6.0;
    // flower
    double flower_a = 0.5;
    double flower_b = 0.15;
    // custom-analytic; gradient falls back to central differences
    std::function<double(double, double)> custom_phi;
    double fd_step = 1e-6;

    MotionLaw motion;

    double operator()(const Point& p, double t) const { return eval(p, t); }
    double eval(const Point& p, double t) const;
    Vec2 grad(const Point& p, double t) const;

  private:
    double eval_static(double x, double y) const;
    Vec2 grad_static(double x, double y) const;
};

/// A level set representing "no obstacle" (phi = -1 everywhere).
LevelSetField no_obstacle();

/// Straight-line approximation of the cut boundary inside one cell.
struct BoundarySegment {
    Point a;
    Point b;
    Vec2 outward_normal;
    int parent_cell = -1;

    double length() const { return (b - a).norm(); }
};

struct ProjectionResult {
    Point z;
    int iterations = 0;
    double residual = 0.0;
};

/// phi / grad phi at a point; boundary normal points from the fluid into the
/// obstacle (direction of increasing phi).
Vec2 boundary_normal(const LevelSetField& ls, const Point& p, double t);

/// Intersection points A, B of the zero level set with a cell's edge cycle
/// k0->k1->k2->k3->k0, given the corner values. A is the crossing whose
/// trailing corner is inside the fluid (phi < 0).
struct CellCut {
    Point a;
    Point b;
};
CellCut intersect_cell(const double corner_phis[4], const Point corners[4]);

/// Fixed-point projection of a near-boundary point onto {phi = 0}
/// (x <- x - phi * grad/|grad|^2), stopping at |phi| <= 1e-2 h^2.
ProjectionResult project_to_boundary(const LevelSetField& ls, const Point& x, double t, double h,
                                     int max_iterations = 200);

/// Surface velocity of an oscillating/deforming bubble at angle theta.
Vec2 bubble_boundary_velocity(const MotionLaw& motion, double theta, double t);

/// Velocity of a boundary point for any motion law (rigid rotation gives
/// omega x r; bubble kinds use the parametric surface velocity).
Vec2 boundary_velocity(const LevelSetField& ls, const Point& p, double t);

} // namespace ns2d
