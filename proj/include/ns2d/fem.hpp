#pragma once

#include <array>
#include <functional>
#include <memory>

#include "ns2d/linalg.hpp"
#include "ns2d/mesh.hpp"

namespace ns2d::fem {

using linalg::Vector;

enum class ExecutionMode { Serial, Parallel };

/// Worker count for parallel assembly; reads NS2D_THREADS (0 = all cores).
int worker_count();

/// Vector-valued boundary/body data g(x, t) or f(x, t).
using VectorField = std::function<Vec2(const Point&, double)>;
/// Wall data may differ per side (inflow vs no-slip walls).
using WallField = std::function<Vec2(const Point&, double, WallSide)>;

/// One cached volume quadrature point: physical basis values and gradients
/// for the Q2 velocity and Q1 pressure bases of the owning cell.
struct VolumeQuadEntry {
    int cell = -1;
    double w = 0.0;
    Point x;
    std::array<double, 9> v_val;
    std::array<Vec2, 9> v_grad;
    std::array<double, 4> p_val;
};

/// One cached surface quadrature point (cut segment or box wall).
struct SurfaceQuadEntry {
    int cell = -1;
    double w = 0.0;
    Point x;
    Point z; // SBM-projected point on the true boundary (== x on walls or with SBM off)
    Vec2 n;  // outward normal
    bool on_cut = false;
    WallSide side = WallSide::Left; // meaningful only when !on_cut
    std::array<double, 9> v_val;
    std::array<Vec2, 9> v_grad;
    std::array<double, 4> p_val;
};

/// Precomputed quadrature/basis tables for one mesh snapshot; built once,
/// shared by every assembly and norm evaluation on that snapshot.
///
/// Volume integrals run over the fluid polygon Omega_h (cut cells clipped),
/// boundary terms over the polygonal Gamma_h and Dirichlet walls.
struct AssemblyCache {
    std::shared_ptr<const MeshSnapshot> mesh;
    std::vector<VolumeQuadEntry> volume;
    std::vector<std::pair<int, int>> cell_volume_range; // per active-cell position: [begin, end)
    std::vector<SurfaceQuadEntry> surface;
};

/// Build the cache; with sbm, cut-segment quadrature points carry their
/// closest-point projection onto the true boundary.
AssemblyCache build_assembly_cache(std::shared_ptr<const MeshSnapshot> mesh,
                                   const LevelSetField& ls, bool sbm = true);

/// Scalar Q2 mass matrix over the active domain (Dv x Dv).
linalg::SparseMatrix assemble_mass(const AssemblyCache& cache,
                                   ExecutionMode mode = ExecutionMode::Parallel);

/// Scalar viscous + Nitsche matrix, nu-scaled:
///   nu [ (grad u, grad w) - (dn u, w) - (u, dn w) + lambda (u, w) ]_Gamma_D
/// Boundary terms act on cut segments and Dirichlet walls.
linalg::SparseMatrix assemble_viscous_nitsche(const AssemblyCache& cache, double nu,
                                              double lambda,
                                              const std::array<bool, 4>& wall_dirichlet,
                                              ExecutionMode mode = ExecutionMode::Parallel);

/// Scalar ghost-penalty matrix (Dv x Dv), unit scale:
///   sum_F  h (["dn u"], ["dn w"])_F + h^3 (["dn^2 u"], ["dn^2 w"])_F
/// over faces F shared by two active cells at least one of which is cut.
/// Penalizing normal-derivative jumps extends coercivity from Omega_h to
/// the full cut cells, so small fluid slivers cannot carry near-zero-energy
/// modes; the jumps of the smooth solution vanish at the interpolation
/// order, so optimal convergence is kept. Callers scale by gamma_g * nu
/// (stiffness) or gamma_g * h^2 (mass).
linalg::SparseMatrix assemble_ghost_penalty(const AssemblyCache& cache,
                                            ExecutionMode mode = ExecutionMode::Parallel);

/// Pressure ghost-penalty matrix (Dp x Dp), unit scale:
///   sum_F  h^3 (["dn p"], ["dn q"])_F
/// over the same face set. Sliver cut cells leave pressure DOFs with
/// near-zero divergence rows that only the epsilon regularization sees;
/// this ties them to their neighbors. Callers scale by gamma_g / nu.
linalg::SparseMatrix assemble_pressure_ghost(const AssemblyCache& cache,
                                             ExecutionMode mode = ExecutionMode::Parallel);

/// Scalar convection matrix C[u], ((u.grad) phi_j, phi_i); u_nodal holds
/// 2 Dv values (x block then y block).
linalg::SparseMatrix assemble_convection(const AssemblyCache& cache, const Vector& u_nodal,
                                         ExecutionMode mode = ExecutionMode::Parallel);

/// Pressure coupling blocks per velocity component (Dv x Dp):
///   B^c_ij = -(p_j, d_c w_i) + (p_j n_c, w_i)_Gamma_D
struct PressureCoupling {
    linalg::SparseMatrix bx;
    linalg::SparseMatrix by;
};
PressureCoupling assemble_pressure_coupling(const AssemblyCache& cache,
                                            const std::array<bool, 4>& wall_dirichlet,
                                            ExecutionMode mode = ExecutionMode::Parallel);

/// Momentum right-hand side at time t (size 2 Dv):
///   (f, w) + nu lambda (g, w)_Gamma_D - nu (g, dn w)_Gamma_D
/// with g evaluated at the projected point on cut segments.
Vector assemble_momentum_rhs(const AssemblyCache& cache, double nu, double lambda,
                             const std::array<bool, 4>& wall_dirichlet,
                             const VectorField& body_force, const WallField& wall_data,
                             const VectorField& cut_data, double t);

/// Continuity right-hand side at time t (size Dp): (q n, g)_Gamma_D.
Vector assemble_continuity_rhs(const AssemblyCache& cache,
                               const std::array<bool, 4>& wall_dirichlet,
                               const WallField& wall_data, const VectorField& cut_data, double t);

struct PenaltyEstimate {
    double trace_constant = 0.0; // C = max Lambda of K v = Lambda M v
    double lambda = 0.0;         // gamma * C
    double gamma = 1.1;
    int eig_iterations = 0;
};

/// Calibrate the Nitsche penalty by the generalized eigenvalue problem
/// K v = Lambda M v with K the boundary normal-derivative Gramian and M the
/// gradient Gramian over the active domain. When the discrete operator is
/// ghost-stabilized the same stabilization must back M, otherwise sliver
/// cuts drive Lambda far above the trace constant the penalty calibrates.
PenaltyEstimate estimate_penalty(const AssemblyCache& cache,
                                 const std::array<bool, 4>& wall_dirichlet, double gamma = 1.1,
                                 const linalg::SparseMatrix* ghost = nullptr,
                                 double ghost_scale = 0.0);

/// Interpolate a vector field onto the active velocity nodes (2 Dv values).
Vector interpolate_velocity(const MeshSnapshot& mesh, const VectorField& f, double t);
/// Interpolate a scalar field onto the active pressure nodes.
Vector interpolate_pressure(const MeshSnapshot& mesh,
                            const std::function<double(const Point&, double)>& f, double t);

/// Point evaluation of discrete fields (probes). Throws if the containing
/// cell is inactive.
Vec2 evaluate_velocity(const MeshSnapshot& mesh, const Vector& u_nodal, const Point& p);
double evaluate_pressure(const MeshSnapshot& mesh, const Vector& p_nodal, const Point& p);

/// Mean of a discrete pressure over the active domain (gauge fixing).
double pressure_mean(const AssemblyCache& cache, const Vector& p_nodal);

} // namespace ns2d::fem
