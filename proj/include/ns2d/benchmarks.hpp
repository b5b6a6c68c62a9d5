#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ns2d/cli_io.hpp"
#include "ns2d/fem.hpp"
#include "ns2d/timestepping.hpp"

namespace ns2d::bench {

using linalg::Vector;

/// Taylor-Green style analytic solution on [-1,1]^2 with wavenumber 2 pi.
struct KimMoin {
    double nu = 1.0;

    Vec2 velocity(const Point& p, double t) const;
    double pressure(const Point& p, double t) const;
    Vec2 grad_ux(const Point& p, double t) const;
    Vec2 grad_uy(const Point& p, double t) const;
    /// Body force making (velocity, pressure) solve the Navier-Stokes system.
    Vec2 forcing(const Point& p, double t) const;
};

struct ErrorNorms {
    double total_l2 = 0.0;
    double total_h1 = 0.0;
    double final_l2 = 0.0;
    double final_h1 = 0.0;
};

/// Relative space-time and final-time velocity errors:
///   total = sqrt(sum_n ||u_exa - u_h||^2) / sqrt(sum_n ||u_exa||^2),
/// accumulated once per accepted step over the step's own snapshot.
class ErrorAccumulator {
  public:
    ErrorAccumulator(fem::VectorField exact_u, fem::VectorField exact_grad_ux,
                     fem::VectorField exact_grad_uy);

    void accumulate(const fem::AssemblyCache& cache, const Vector& u, double t);
    ErrorNorms finish() const;

  private:
    fem::VectorField exact_u_, exact_gx_, exact_gy_;
    double l2_num_ = 0.0, l2_den_ = 0.0, h1_num_ = 0.0, h1_den_ = 0.0;
    double last_l2_num_ = 0.0, last_l2_den_ = 0.0, last_h1_num_ = 0.0, last_h1_den_ = 0.0;
};

/// Hydrodynamic force on the cut boundary, F = int (nu grad u - p I) n ds
/// with n pointing out of the obstacle (into the fluid).
Vec2 boundary_force(const fem::AssemblyCache& cache, const Vector& u, const Vector& p, double nu);

struct TurekMetrics {
    double strouhal = 0.0;
    double frequency = 0.0;
    double cd_max = 0.0;
    double cl_max = 0.0;
    double delta_p = 0.0;
    int peaks = 0;
};

/// Peak analysis of the lift series after t_min: peak times by quadratic
/// interpolation, frequency from the mean peak gap, St = 0.1 f, delta_p read
/// at t0 + 1/(2f) with t0 the last lift maximum. Needs >= 3 peaks.
TurekMetrics analyze_lift_series(const std::vector<double>& t, const std::vector<double>& cd,
                                 const std::vector<double>& cl, const std::vector<double>& dp,
                                 double t_min);

/// x positions where v = u_y changes sign + -> - along the line y = y_line
/// (clockwise vortex centers), sampled on [x_lo, x_hi].
std::vector<double> clockwise_vortex_centers(const MeshSnapshot& mesh, const Vector& u,
                                             double y_line, double x_lo, double x_hi,
                                             int samples = 400);

/// Geometry, boundary/body data, and (when analytic) the exact solution for
/// one configured scenario.
struct ScenarioSetup {
    CartesianGrid grid;
    ts::Problem problem;
    fem::VectorField exact_u;       // null when no analytic solution
    fem::VectorField exact_grad_ux; // rows of the exact velocity gradient
    fem::VectorField exact_grad_uy;
    fem::VectorField initial_u; // null = start from rest
    std::function<double(const Point&, double)> initial_p;
};

ScenarioSetup make_setup(const io::RunConfig& cfg);

/// Called after every accepted step with the new state and the assembly
/// cache of the snapshot it lives on.
using StepCallback =
    std::function<void(const ts::State&, const ts::StepStats&, const fem::AssemblyCache&)>;

struct RunResult {
    ts::State state;
    io::Series history; // per-step diagnostics; Turek adds cd, cl, dp columns
    std::optional<TurekMetrics> turek;
    fem::PenaltyEstimate penalty; // calibration on the initial snapshot
};

/// Run a configured scenario from t = 0 to t_end with dt adjusted to land on
/// t_end exactly.
RunResult run_transient(const io::RunConfig& cfg, const StepCallback& callback = {});

/// Kim-Moin convergence sweep with nx doubled per level; the table rows are
/// (total L2, total H1, final L2, final H1).
io::ConvergenceTable convergence_sweep(const io::RunConfig& base, int levels,
                                       const std::function<void(int, double, const ErrorNorms&)>&
                                           on_level = {});

} // namespace ns2d::bench
