#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <memory>
#include <optional>

#include "ns2d/extrapolation.hpp"
#include "ns2d/fem.hpp"
#include "ns2d/linalg.hpp"
#include "ns2d/mesh.hpp"

namespace ns2d::ts {

using linalg::Vector;

/// Double Butcher tableau (explicit/implicit pair), coefficients as printed.
struct ButcherPair {
    int s = 0;
    int order = 0;
    Eigen::MatrixXd a_ex, a_im;
    Eigen::VectorXd b_ex, b_im, c_ex, c_im;
};

/// order 2: two-stage scheme with eta = 1/sqrt(2); order 3: four-stage
/// scheme with gamma = 0.435866521508.
ButcherPair make_tableau(int order);

/// Problem data shared by every snapshot of one run.
struct Problem {
    LevelSetField ls;
    double nu = 1.0;
    std::array<bool, 4> wall_dirichlet{true, true, true, true};
    bool sbm = true;
    double penalty_gamma = 1.1;
    double lambda_override = -1.0; // <= 0: calibrate per snapshot
    double epsilon = 1e-10;
    double ghost_gamma = 0.5; // ghost-penalty strength on cut-cell faces
    fem::VectorField body_force;
    fem::WallField wall_data;
    fem::VectorField cut_data; // boundary velocity/data on Gamma; evaluated at SBM points
    fem::ExecutionMode mode = fem::ExecutionMode::Parallel;
    double band_width = -1.0; // <= 0: 3h
    extrap::TransportOptions transport;
};

/// Time-independent assembly of B q' = Theta[q] q + g(t) on one snapshot.
/// Unknown ordering: [u_x (Dv), u_y (Dv), p (Dp)].
struct SaddleOperator {
    std::shared_ptr<const MeshSnapshot> mesh;
    fem::AssemblyCache cache;
    Problem problem;
    double lambda = 0.0;
    fem::PenaltyEstimate penalty;

    linalg::SparseMatrix mass;   // scalar Dv x Dv
    linalg::SparseMatrix a_visc; // scalar, nu-scaled viscous + Nitsche
    Eigen::SparseMatrix<double> p_stab; // pressure ghost penalty, gamma_g/nu-scaled
    fem::PressureCoupling coupling;
    Eigen::SparseMatrix<double> bx_t, by_t;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> mass_ldlt;

    // Stage-system LU; the sparsity pattern is identical across stages and
    // steps, so the symbolic analysis is done once.
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> stage_lu;
    bool pattern_analyzed = false;

    SaddleOperator() = default;
    SaddleOperator(const SaddleOperator&) = delete;
    SaddleOperator& operator=(const SaddleOperator&) = delete;

    /// g(t) = [momentum rhs; continuity rhs], size 2 Dv + Dp.
    Vector assemble_gbar(double t) const;
};

std::unique_ptr<SaddleOperator> make_saddle_operator(std::shared_ptr<const MeshSnapshot> mesh,
                                                     const Problem& problem);

struct State {
    std::shared_ptr<const MeshSnapshot> mesh;
    Vector u; // 2 Dv
    Vector p; // Dp
    double t = 0.0;
};

State initial_state(std::shared_ptr<const MeshSnapshot> mesh, const fem::VectorField& u0 = {},
                    const std::function<double(const Point&, double)>& p0 = {});

struct StepStats {
    double t = 0.0;
    double u_l2 = 0.0;            // L2(Omega_h) norm of the velocity
    double div_residual = 0.0;    // || G^T u - g_hat ||_2
    double solver_residual = 0.0; // relative residual of the last stage solve
    double wall_ms = 0.0;
};

/// One IMEX step on a frozen snapshot. The final pressure is the last
/// implicit stage pressure; explicit-stage pressures are carried but unused.
State imex_step(const State& state, double dt, const ButcherPair& tab, SaddleOperator& op,
                StepStats* stats = nullptr);

/// Reusable pieces of the moving-domain orchestration (stage LU pattern,
/// lattice gradient operators).
struct MovingWorkspace {
    std::unique_ptr<SaddleOperator> op;
    std::optional<extrap::GradientOperators> v_ops, p_ops;
};

/// Moving-domain step: rebuild the snapshot at t + dt, Aslam-extrapolate u
/// and p componentwise to the newly active nodes, reassemble, step. Throws
/// NumericalError if a newly active node lies beyond the band.
State advance_moving(const State& state, double dt, const ButcherPair& tab,
                     const Problem& problem, MovingWorkspace& ws, StepStats* stats = nullptr);

/// Velocity L2 norm and divergence residual diagnostics on a snapshot.
double velocity_l2(const SaddleOperator& op, const Vector& u);
double divergence_residual(const SaddleOperator& op, const Vector& u, double t);

} // namespace ns2d::ts
