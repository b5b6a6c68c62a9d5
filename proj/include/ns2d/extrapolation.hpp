#pragma once

#include <Eigen/Sparse>
#include <vector>

#include "ns2d/linalg.hpp"
#include "ns2d/mesh.hpp"

namespace ns2d::extrap {

using linalg::Vector;

enum class Lattice { Velocity, Pressure };

int lattice_node_count(const CartesianGrid& grid, Lattice lat);
double lattice_spacing(const CartesianGrid& grid, Lattice lat);
Point lattice_coord(const CartesianGrid& grid, Lattice lat, int node);

/// Band bookkeeping for one lattice. chi = 1 marks nodes outside the active
/// set (the region to be filled); normals are grad(phi)/|grad(phi)| evaluated
/// directly from the level set, zero where the gradient degenerates.
struct BandField {
    Lattice lattice = Lattice::Velocity;
    CartesianGrid grid;
    double band_width = 0.0;
    std::vector<unsigned char> chi;
    std::vector<unsigned char> band_mask; // chi = 1 and distance to Gamma <= band_width
    std::vector<Vec2> normal;
    std::vector<double> distance; // signed phi/|grad phi| (positive off the fluid)
    int band_count = 0;
};

BandField build_band(const MeshSnapshot& mesh, const LevelSetField& ls, Lattice lat,
                     double band_width);

/// Lumped-mass L2-projected gradient operators over the full lattice,
/// row-major for per-node row access during pseudo-time sweeps.
struct GradientOperators {
    Eigen::SparseMatrix<double, Eigen::RowMajor> gx;
    Eigen::SparseMatrix<double, Eigen::RowMajor> gy;
};

GradientOperators build_gradient_operators(const CartesianGrid& grid, Lattice lat);

struct DirectionalDerivatives {
    Vector u_n;
    Vector u_nn;
};

/// u_n = n . grad(u), u_nn = n . grad(u_n) on the full lattice (values are
/// meaningful where the stencil stays clear of chi = 1 nodes).
DirectionalDerivatives directional_derivatives(const Vector& u_full, const BandField& band,
                                               const GradientOperators& ops);

struct TransportReport {
    int iterations = 0;
    double final_update = 0.0;
    bool converged = true;
};

struct TransportOptions {
    double dtau = 0.0;       // <= 0: 0.25 * lattice spacing
    double tol_scale = 1e-8; // tol = tol_scale * (1 + max|field|)
    int max_iterations = 0;  // <= 0: ceil(band/dtau) * 5
};

/// Pseudo-time transport d(tau) f + chi (n . grad f - source) = 0 to steady
/// state. The advective term uses second-order one-sided differences biased
/// upstream (toward the chi = 0 data), which is stable where central
/// differences are not and keeps stale values past the band from bleeding
/// back in. Nodes with chi = 0 and nodes outside the band keep their input
/// values bitwise (the iteration uses an internal buffer ring past the band).
Vector transport_to_steady(const Vector& field, const Vector* source, const BandField& band,
                           const TransportOptions& opts = {}, TransportReport* report = nullptr);

/// Algorithm-3 cascade: extend u from the chi = 0 region quadratically into
/// the band (u_nn transported with zero source, then u_n, then u).
Vector extrapolate_quadratic(const Vector& u_full, const BandField& band,
                             const GradientOperators& ops, const TransportOptions& opts = {},
                             TransportReport* report = nullptr);

/// Scatter an active-node vector onto the full lattice (zero elsewhere).
Vector to_lattice(const MeshSnapshot& mesh, Lattice lat, const Vector& active_values);
/// Gather full-lattice values back onto this mesh's active nodes.
Vector from_lattice(const MeshSnapshot& mesh, Lattice lat, const Vector& lattice_values);

} // namespace ns2d::extrap
