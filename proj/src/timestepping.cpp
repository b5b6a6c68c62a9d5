#include <cstdlib>
#include "ns2d/timestepping.hpp"

#include <chrono>
#include <cmath>

namespace ns2d::ts {

ButcherPair make_tableau(int order) {
    ButcherPair tab;
    if (order == 2) {
        const double eta = 1.0 / std::sqrt(2.0);
        const double delta = 1.0 - 1.0 / (2.0 * eta);
        tab.s = 2;
        tab.order = 2;
        tab.a_ex = Eigen::MatrixXd::Zero(2, 2);
        tab.a_ex(1, 0) = 1.0;
        tab.a_im = Eigen::MatrixXd::Zero(2, 2);
        tab.a_im(0, 0) = 1.0 - eta;
        tab.a_im(1, 0) = eta - delta;
        tab.a_im(1, 1) = delta;
        tab.b_ex = tab.b_im = Eigen::Vector2d(0.5, 0.5);
    } else if (order == 3) {
        const double gamma = 0.435866521508;
        tab.s = 4;
        tab.order = 3;
        tab.a_ex = Eigen::MatrixXd::Zero(4, 4);
        tab.a_ex(1, 0) = gamma;
        tab.a_ex(2, 0) = 1.243893189;
        tab.a_ex(2, 1) = -0.5259599287;
        tab.a_ex(3, 0) = 0.6304125582;
        tab.a_ex(3, 1) = 0.7865807402;
        tab.a_ex(3, 2) = -0.4169932983;
        tab.a_im = Eigen::MatrixXd::Zero(4, 4);
        tab.a_im(0, 0) = gamma;
        tab.a_im(1, 1) = gamma;
        tab.a_im(2, 1) = 0.282066739245;
        tab.a_im(2, 2) = gamma;
        tab.a_im(3, 1) = 1.208496649176;
        tab.a_im(3, 2) = -0.644363170684;
        tab.a_im(3, 3) = gamma;
        tab.b_ex = tab.b_im = Eigen::Vector4d(0.0, 1.208496649176, -0.644363170684, gamma);
    } else {
        throw ConfigError("unsupported IMEX order " + std::to_string(order));
    }
    tab.c_ex = tab.a_ex.rowwise().sum();
    tab.c_im = tab.a_im.rowwise().sum();
    return tab;
}

Vector SaddleOperator::assemble_gbar(double t) const {
    const auto& p = problem;
    const Vector f = fem::assemble_momentum_rhs(cache, p.nu, lambda, p.wall_dirichlet,
                                                p.body_force, p.wall_data, p.cut_data, t);
    const Vector ghat =
        fem::assemble_continuity_rhs(cache, p.wall_dirichlet, p.wall_data, p.cut_data, t);
    Vector g(f.size() + ghat.size());
    g << f, ghat;
    return g;
}

std::unique_ptr<SaddleOperator> make_saddle_operator(std::shared_ptr<const MeshSnapshot> mesh,
                                                     const Problem& problem) {
    auto op = std::make_unique<SaddleOperator>();
    op->mesh = mesh;
    op->problem = problem;
    op->cache = fem::build_assembly_cache(mesh, problem.ls, problem.sbm);
    double gg = problem.ghost_gamma;
    if (const char* e = std::getenv("NS2D_GG")) gg = std::atof(e);
    const auto ghost = fem::assemble_ghost_penalty(op->cache, problem.mode);
    if (problem.lambda_override > 0.0) {
        op->lambda = problem.lambda_override;
    } else {
        op->penalty = fem::estimate_penalty(op->cache, problem.wall_dirichlet,
                                            problem.penalty_gamma, &ghost, gg);
        op->lambda = op->penalty.lambda;
    }
    const double h = mesh->grid.h;
    op->mass = fem::assemble_mass(op->cache, problem.mode);
    op->mass.eigen() += (gg * h * h) * ghost.eigen();
    op->a_visc = fem::assemble_viscous_nitsche(op->cache, problem.nu, op->lambda,
                                               problem.wall_dirichlet, problem.mode);
    op->a_visc.eigen() += (gg * problem.nu) * ghost.eigen();
    double pscale = gg / problem.nu;
    if (const char* e = std::getenv("NS2D_PG")) pscale = std::atof(e);
    op->p_stab = pscale * fem::assemble_pressure_ghost(op->cache, problem.mode).eigen();
    op->coupling = fem::assemble_pressure_coupling(op->cache, problem.wall_dirichlet,
                                                   problem.mode);
    op->bx_t = op->coupling.bx.eigen().transpose();
    op->by_t = op->coupling.by.eigen().transpose();
    op->mass_ldlt.compute(op->mass.eigen());
    if (op->mass_ldlt.info() != Eigen::Success)
        throw NumericalError("mass matrix LDLT factorization failed");
    return op;
}

State initial_state(std::shared_ptr<const MeshSnapshot> mesh, const fem::VectorField& u0,
                    const std::function<double(const Point&, double)>& p0) {
    State s;
    s.mesh = mesh;
    s.t = mesh->time;
    s.u = u0 ? fem::interpolate_velocity(*mesh, u0, s.t)
             : Vector::Zero(2 * mesh->n_velocity_dofs());
    s.p = p0 ? fem::interpolate_pressure(*mesh, p0, s.t)
             : Vector::Zero(mesh->n_pressure_dofs());
    return s;
}

double velocity_l2(const SaddleOperator& op, const Vector& u) {
    const auto& mesh = *op.mesh;
    const int dv = mesh.n_velocity_dofs();
    double acc = 0.0;
    for (const auto& q : op.cache.volume) {
        Vec2 uh{0.0, 0.0};
        for (int a = 0; a < 9; ++a) {
            const int dof = mesh.nodes.v.index[mesh.grid.cell_vnode(q.cell, a)];
            uh.x += u[dof] * q.v_val[a];
            uh.y += u[dv + dof] * q.v_val[a];
        }
        acc += q.w * (uh.x * uh.x + uh.y * uh.y);
    }
    return std::sqrt(acc);
}

double divergence_residual(const SaddleOperator& op, const Vector& u, double t) {
    const int dv = op.mesh->n_velocity_dofs();
    const Vector ghat = fem::assemble_continuity_rhs(op.cache, op.problem.wall_dirichlet,
                                                     op.problem.wall_data, op.problem.cut_data, t);
    return (op.bx_t * u.head(dv) + op.by_t * u.tail(dv) - ghat).norm();
}

namespace {

/// Theta[u_E] q for q = (u, p): velocity rows -(A + C) u - B p, pressure
/// rows -B^T u - (eps + S) p with S the pressure ghost penalty.
Vector apply_theta(const SaddleOperator& op, const Eigen::SparseMatrix<double>& conv,
                   const Vector& q) {
    const int dv = op.mesh->n_velocity_dofs();
    const int dp = op.mesh->n_pressure_dofs();
    const auto& a = op.a_visc.eigen();
    const Vector ux = q.segment(0, dv), uy = q.segment(dv, dv), p = q.tail(dp);
    Vector out(2 * dv + dp);
    out.segment(0, dv) = -(a * ux) - conv * ux - op.coupling.bx.eigen() * p;
    out.segment(dv, dv) = -(a * uy) - conv * uy - op.coupling.by.eigen() * p;
    // Both regularization terms must be dissipative: with the constraint
    // B^T u - (eps + S) p = g the energy balance picks up -p^T (eps + S) p
    // and the stage matrix is symmetric quasi-definite, hence nonsingular
    // for every dt. The opposite sign feeds energy into the sliver pressure
    // modes and makes the pressure Schur block indefinite, which hits exact
    // singularities at isolated time-step sizes.
    out.tail(dp) = -(op.bx_t * ux) - (op.by_t * uy) + op.problem.epsilon * p + op.p_stab * p;
    return out;
}

/// Stage matrix B - dt a_ii Theta[u_E] in the [u_x, u_y, p] ordering.
Eigen::SparseMatrix<double> stage_matrix(const SaddleOperator& op,
                                         const Eigen::SparseMatrix<double>& conv, double w) {
    const int dv = op.mesh->n_velocity_dofs();
    const int dp = op.mesh->n_pressure_dofs();
    const Eigen::SparseMatrix<double> s =
        op.mass.eigen() + w * (op.a_visc.eigen() + conv);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(2 * s.nonZeros() + 2 * op.coupling.bx.eigen().nonZeros() +
                 2 * op.coupling.by.eigen().nonZeros() + dp);
    for (int k = 0; k < s.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(s, k); it; ++it) {
            trip.emplace_back(it.row(), it.col(), it.value());
            trip.emplace_back(dv + it.row(), dv + it.col(), it.value());
        }
    const auto& bx = op.coupling.bx.eigen();
    for (int k = 0; k < bx.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(bx, k); it; ++it) {
            trip.emplace_back(it.row(), 2 * dv + it.col(), w * it.value());
            trip.emplace_back(2 * dv + it.col(), it.row(), w * it.value());
        }
    const auto& by = op.coupling.by.eigen();
    for (int k = 0; k < by.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(by, k); it; ++it) {
            trip.emplace_back(dv + it.row(), 2 * dv + it.col(), w * it.value());
            trip.emplace_back(2 * dv + it.col(), dv + it.row(), w * it.value());
        }
    for (int i = 0; i < dp; ++i)
        trip.emplace_back(2 * dv + i, 2 * dv + i, -w * op.problem.epsilon);
    for (int k = 0; k < op.p_stab.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(op.p_stab, k); it; ++it)
            trip.emplace_back(2 * dv + it.row(), 2 * dv + it.col(), -w * it.value());
    Eigen::SparseMatrix<double> t(2 * dv + dp, 2 * dv + dp);
    t.setFromTriplets(trip.begin(), trip.end());
    t.makeCompressed();
    return t;
}

} // namespace

State imex_step(const State& state, double dt, const ButcherPair& tab, SaddleOperator& op,
                StepStats* stats) {
    const auto t0 = std::chrono::steady_clock::now();
    const int dv = op.mesh->n_velocity_dofs();
    const int dp = op.mesh->n_pressure_dofs();
    const int n = 2 * dv + dp;
    if (state.u.size() != 2 * dv || state.p.size() != dp)
        throw NumericalError("state does not match the operator's mesh snapshot");

    Vector qn(n);
    qn << state.u, state.p;
    Vector b_qn(n);
    b_qn.segment(0, dv) = op.mass.eigen() * state.u.head(dv);
    b_qn.segment(dv, dv) = op.mass.eigen() * state.u.tail(dv);
    b_qn.tail(dp).setZero();

    // g(t) at stage times; explicit and implicit stage times often coincide.
    std::vector<std::pair<double, Vector>> gbar_memo;
    auto gbar = [&](double c) -> const Vector& {
        const double t = state.t + c * dt;
        for (const auto& entry : gbar_memo)
            if (entry.first == t) return entry.second;
        gbar_memo.emplace_back(t, op.assemble_gbar(t));
        return gbar_memo.back().second;
    };

    std::vector<Vector> flux(tab.s); // Theta[q_E^i] q_I^i
    Vector u_e = state.u;            // explicit stage velocity, q_E^1 = q^n
    Vector q_last(n);
    double solver_residual = 0.0;

    for (int i = 0; i < tab.s; ++i) {
        if (i > 0) {
            Vector acc = Vector::Zero(n);
            // Pair each stage flux with g at its own implicit abscissa (the
            // combination the stage solve balanced); see the update below.
            for (int j = 0; j < i; ++j)
                if (tab.a_ex(i, j) != 0.0)
                    acc += tab.a_ex(i, j) * (flux[j] + gbar(tab.c_im[j]));
            u_e.head(dv) =
                state.u.head(dv) + dt * op.mass_ldlt.solve(acc.segment(0, dv)).eval();
            u_e.tail(dv) =
                state.u.tail(dv) + dt * op.mass_ldlt.solve(acc.segment(dv, dv)).eval();
        }
        const auto conv = fem::assemble_convection(op.cache, u_e, op.problem.mode).eigen();
        const double aii = tab.a_im(i, i);

        Vector rhs = b_qn + dt * aii * gbar(tab.c_im[i]);
        for (int j = 0; j < i; ++j)
            if (tab.a_im(i, j) != 0.0)
                rhs += dt * tab.a_im(i, j) * (flux[j] + gbar(tab.c_im[j]));

        const auto mat = stage_matrix(op, conv, dt * aii);
        if (!op.pattern_analyzed) {
            op.stage_lu.analyzePattern(mat);
            op.pattern_analyzed = true;
        }
        op.stage_lu.factorize(mat);
        if (op.stage_lu.info() != Eigen::Success)
            throw NumericalError("stage " + std::to_string(i + 1) + " LU factorization failed");
        const Vector q_i = op.stage_lu.solve(rhs);
        if (!q_i.allFinite())
            throw NumericalError("NaN detected in implicit stage " + std::to_string(i + 1));
        solver_residual = (mat * q_i - rhs).norm() / std::max(1.0, rhs.norm());
        flux[i] = apply_theta(op, conv, q_i);
        q_last = q_i;
    }

    // Update: both tableaux share b, so the double sum collapses to a single
    // combination of stage fluxes. The data term must be paired at the
    // implicit abscissae c_i: Theta q_i + g(c_i) is the bounded residual the
    // stage solve balanced, and any other evaluation time reintroduces the
    // stiff Nitsche/viscous scales into the explicit update (O(lambda dt)
    // error growing under refinement).
    Vector acc = Vector::Zero(n);
    for (int i = 0; i < tab.s; ++i)
        if (tab.b_im[i] != 0.0) acc += tab.b_im[i] * (flux[i] + gbar(tab.c_im[i]));

    State next;
    next.mesh = state.mesh;
    next.t = state.t + dt;
    next.u.resize(2 * dv);
    next.u.head(dv) = state.u.head(dv) + dt * op.mass_ldlt.solve(acc.segment(0, dv)).eval();
    next.u.tail(dv) = state.u.tail(dv) + dt * op.mass_ldlt.solve(acc.segment(dv, dv)).eval();
    next.p = q_last.tail(dp);
    if (!next.u.allFinite() || !next.p.allFinite())
        throw NumericalError("NaN detected in IMEX update");

    if (stats) {
        stats->t = next.t;
        stats->u_l2 = velocity_l2(op, next.u);
        stats->div_residual = divergence_residual(op, next.u, next.t);
        stats->solver_residual = solver_residual;
        stats->wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    }
    return next;
}

namespace {

/// Extend one lattice family of the state to the new snapshot, transporting
/// only if genuinely new nodes appear.
Vector extend_family(const Vector& active_values, const MeshSnapshot& old_mesh,
                     const MeshSnapshot& new_mesh, extrap::Lattice lat,
                     const extrap::BandField& band, const extrap::GradientOperators& ops,
                     const extrap::TransportOptions& opts, bool needs_transport) {
    Vector full = extrap::to_lattice(old_mesh, lat, active_values);
    if (needs_transport) full = extrap::extrapolate_quadratic(full, band, ops, opts);
    return extrap::from_lattice(new_mesh, lat, full);
}

bool has_new_nodes(const NodeFamily& old_f, const NodeFamily& new_f,
                   const extrap::BandField& band, const CartesianGrid& grid, extrap::Lattice lat,
                   double band_width, double dt) {
    bool any_new = false;
    for (int node : new_f.active) {
        if (old_f.index[node] >= 0) continue;
        any_new = true;
        if (!band.band_mask[node]) {
            const Point x = extrap::lattice_coord(grid, lat, node);
            throw NumericalError(
                "moving-domain band violation: newly active node at (" + std::to_string(x.x) +
                ", " + std::to_string(x.y) + ") is " + std::to_string(band.distance[node]) +
                " from the boundary, beyond the band of " + std::to_string(band_width) +
                "; reduce dt (boundary moves more than the band per step, dt = " +
                std::to_string(dt) + ")");
        }
    }
    return any_new;
}

} // namespace

State advance_moving(const State& state, double dt, const ButcherPair& tab,
                     const Problem& problem, MovingWorkspace& ws, StepStats* stats) {
    if (problem.ls.motion.is_static()) {
        if (!ws.op) ws.op = make_saddle_operator(state.mesh, problem);
        return imex_step(state, dt, tab, *ws.op, stats);
    }

    const auto& grid = state.mesh->grid;
    const double band_width = problem.band_width > 0.0 ? problem.band_width : 3.0 * grid.h;
    auto new_mesh = build_mesh(grid, problem.ls, state.t + dt, state.mesh->snap_threshold);

    State moved = state;
    if (new_mesh->nodes.v.active == state.mesh->nodes.v.active &&
        new_mesh->nodes.p.active == state.mesh->nodes.p.active) {
        moved.mesh = new_mesh;
    } else {
        if (!ws.v_ops)
            ws.v_ops = extrap::build_gradient_operators(grid, extrap::Lattice::Velocity);
        if (!ws.p_ops)
            ws.p_ops = extrap::build_gradient_operators(grid, extrap::Lattice::Pressure);
        const auto v_band =
            extrap::build_band(*state.mesh, problem.ls, extrap::Lattice::Velocity, band_width);
        const auto p_band =
            extrap::build_band(*state.mesh, problem.ls, extrap::Lattice::Pressure, band_width);
        const bool v_new = has_new_nodes(state.mesh->nodes.v, new_mesh->nodes.v, v_band, grid,
                                         extrap::Lattice::Velocity, band_width, dt);
        const bool p_new = has_new_nodes(state.mesh->nodes.p, new_mesh->nodes.p, p_band, grid,
                                         extrap::Lattice::Pressure, band_width, dt);
        const int dv = state.mesh->n_velocity_dofs();
        moved.mesh = new_mesh;
        const Vector ux = extend_family(state.u.head(dv), *state.mesh, *new_mesh,
                                        extrap::Lattice::Velocity, v_band, *ws.v_ops,
                                        problem.transport, v_new);
        const Vector uy = extend_family(state.u.tail(dv), *state.mesh, *new_mesh,
                                        extrap::Lattice::Velocity, v_band, *ws.v_ops,
                                        problem.transport, v_new);
        moved.u.resize(2 * new_mesh->n_velocity_dofs());
        moved.u << ux, uy;
        moved.p = extend_family(state.p, *state.mesh, *new_mesh, extrap::Lattice::Pressure,
                                p_band, *ws.p_ops, problem.transport, p_new);
    }

    ws.op = make_saddle_operator(new_mesh, problem);
    return imex_step(moved, dt, tab, *ws.op, stats);
}

} // namespace ns2d::ts
