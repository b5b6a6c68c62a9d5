#pragma once

#include <array>

#include "ns2d/geometry.hpp"

namespace ns2d {

/// Tensor-product Lagrangian bases on the reference square [0,1]^2.
/// Local node numbering is lattice row-major: node = jy*(deg+1) + jx with
/// 1D nodes at {0, 1} (Q1) or {0, 1/2, 1} (Q2).
namespace q1 {
constexpr int n_nodes = 4;

inline std::array<double, 2> line(double t) { return {1.0 - t, t}; }
inline std::array<double, 2> line_deriv(double) { return {-1.0, 1.0}; }

inline std::array<double, 4> values(double xi, double eta) {
    const auto lx = line(xi), ly = line(eta);
    std::array<double, 4> v{};
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i) v[j * 2 + i] = lx[i] * ly[j];
    return v;
}

/// Reference-cell gradients; scale by 1/h on a physical cell of size h.
inline std::array<Vec2, 4> gradients(double xi, double eta) {
    const auto lx = line(xi), ly = line(eta);
    const auto dx = line_deriv(xi), dy = line_deriv(eta);
    std::array<Vec2, 4> g{};
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i) g[j * 2 + i] = {dx[i] * ly[j], lx[i] * dy[j]};
    return g;
}
} // namespace q1

namespace q2 {
constexpr int n_nodes = 9;

inline std::array<double, 3> line(double t) {
    return {2.0 * (t - 0.5) * (t - 1.0), -4.0 * t * (t - 1.0), 2.0 * t * (t - 0.5)};
}
inline std::array<double, 3> line_deriv(double t) {
    return {4.0 * t - 3.0, -8.0 * t + 4.0, 4.0 * t - 1.0};
}
inline std::array<double, 3> line_deriv2() { return {4.0, -8.0, 4.0}; }

inline std::array<double, 9> values(double xi, double eta) {
    const auto lx = line(xi), ly = line(eta);
    std::array<double, 9> v{};
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) v[j * 3 + i] = lx[i] * ly[j];
    return v;
}

inline std::array<Vec2, 9> gradients(double xi, double eta) {
    const auto lx = line(xi), ly = line(eta);
    const auto dx = line_deriv(xi), dy = line_deriv(eta);
    std::array<Vec2, 9> g{};
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) g[j * 3 + i] = {dx[i] * ly[j], lx[i] * dy[j]};
    return g;
}
} // namespace q2

} // namespace ns2d
