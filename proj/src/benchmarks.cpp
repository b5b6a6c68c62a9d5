#include "ns2d/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ns2d::bench {

namespace {
constexpr double two_pi = 2.0 * M_PI;
}

Vec2 KimMoin::velocity(const Point& p, double t) const {
    const double e = std::exp(-2.0 * nu * t);
    return {std::sin(two_pi * p.x) * std::cos(two_pi * p.y) * e,
            -std::cos(two_pi * p.x) * std::sin(two_pi * p.y) * e};
}

double KimMoin::pressure(const Point& p, double t) const {
    const double e = std::exp(-4.0 * nu * t);
    return -0.25 * (std::cos(2.0 * two_pi * p.x) + std::cos(2.0 * two_pi * p.y)) * e;
}

Vec2 KimMoin::grad_ux(const Point& p, double t) const {
    const double e = std::exp(-2.0 * nu * t);
    return {two_pi * std::cos(two_pi * p.x) * std::cos(two_pi * p.y) * e,
            -two_pi * std::sin(two_pi * p.x) * std::sin(two_pi * p.y) * e};
}

Vec2 KimMoin::grad_uy(const Point& p, double t) const {
    const double e = std::exp(-2.0 * nu * t);
    return {two_pi * std::sin(two_pi * p.x) * std::sin(two_pi * p.y) * e,
            -two_pi * std::cos(two_pi * p.x) * std::cos(two_pi * p.y) * e};
}

Vec2 KimMoin::forcing(const Point& p, double t) const {
    // u_t - nu lap u + (u.grad)u + grad p with the fields above.
    const double e2 = std::exp(-4.0 * nu * t);
    const Vec2 u = velocity(p, t);
    const double c = nu * (8.0 * M_PI * M_PI - 2.0);
    return {c * u.x + two_pi * std::sin(2.0 * two_pi * p.x) * e2,
            c * u.y + two_pi * std::sin(2.0 * two_pi * p.y) * e2};
}

ErrorAccumulator::ErrorAccumulator(fem::VectorField exact_u, fem::VectorField exact_grad_ux,
                                   fem::VectorField exact_grad_uy)
    : exact_u_(std::move(exact_u)), exact_gx_(std::move(exact_grad_ux)),
      exact_gy_(std::move(exact_grad_uy)) {}

void ErrorAccumulator::accumulate(const fem::AssemblyCache& cache, const Vector& u, double t) {
    const MeshSnapshot& mesh = *cache.mesh;
    const int dv = mesh.n_velocity_dofs();
    double l2n = 0.0, l2d = 0.0, gn = 0.0, gd = 0.0;
    for (const auto& q : cache.volume) {
        Vec2 uh{0.0, 0.0}, gxh{0.0, 0.0}, gyh{0.0, 0.0};
        for (int a = 0; a < 9; ++a) {
            const int dof = mesh.nodes.v.index[mesh.grid.cell_vnode(q.cell, a)];
            uh.x += u[dof] * q.v_val[a];
            uh.y += u[dv + dof] * q.v_val[a];
            gxh = gxh + u[dof] * q.v_grad[a];
            gyh = gyh + u[dv + dof] * q.v_grad[a];
        }
        const Vec2 ue = exact_u_(q.x, t);
        const Vec2 gxe = exact_gx_(q.x, t), gye = exact_gy_(q.x, t);
        const Vec2 de = ue - uh, dgx = gxe - gxh, dgy = gye - gyh;
        l2n += q.w * de.dot(de);
        l2d += q.w * ue.dot(ue);
        gn += q.w * (dgx.dot(dgx) + dgy.dot(dgy));
        gd += q.w * (gxe.dot(gxe) + gye.dot(gye));
    }
    l2_num_ += l2n;
    l2_den_ += l2d;
    h1_num_ += l2n + gn;
    h1_den_ += l2d + gd;
    last_l2_num_ = l2n;
    last_l2_den_ = l2d;
    last_h1_num_ = l2n + gn;
    last_h1_den_ = l2d + gd;
}

ErrorNorms ErrorAccumulator::finish() const {
    auto rel = [](double num, double den) { return std::sqrt(num / std::max(den, 1e-300)); };
    return {rel(l2_num_, l2_den_), rel(h1_num_, h1_den_), rel(last_l2_num_, last_l2_den_),
            rel(last_h1_num_, last_h1_den_)};
}

Vec2 boundary_force(const fem::AssemblyCache& cache, const Vector& u, const Vector& p,
                    double nu) {
    const MeshSnapshot& mesh = *cache.mesh;
    const int dv = mesh.n_velocity_dofs();
    Vec2 f{0.0, 0.0};
    for (const auto& s : cache.surface) {
        if (!s.on_cut) continue;
        Vec2 gx{0.0, 0.0}, gy{0.0, 0.0};
        double ph = 0.0;
        for (int a = 0; a < 9; ++a) {
            const int dof = mesh.nodes.v.index[mesh.grid.cell_vnode(s.cell, a)];
            gx = gx + u[dof] * s.v_grad[a];
            gy = gy + u[dv + dof] * s.v_grad[a];
        }
        for (int a = 0; a < 4; ++a)
            ph += p[mesh.nodes.p.index[mesh.grid.cell_pnode(s.cell, a)]] * s.p_val[a];
        const Vec2 n = -1.0 * s.n; // obstacle-outward
        f.x += s.w * (nu * gx.dot(n) - ph * n.x);
        f.y += s.w * (nu * gy.dot(n) - ph * n.y);
    }
    return f;
}

TurekMetrics analyze_lift_series(const std::vector<double>& t, const std::vector<double>& cd,
                                 const std::vector<double>& cl, const std::vector<double>& dp,
                                 double t_min) {
    const int n = static_cast<int>(t.size());
    std::vector<double> peak_t, peak_v;
    for (int i = 1; i + 1 < n; ++i) {
        if (t[i] <= t_min) continue;
        if (!(cl[i] >= cl[i - 1] && cl[i] > cl[i + 1])) continue;
        const double a = 0.5 * (cl[i + 1] + cl[i - 1] - 2.0 * cl[i]);
        const double b = 0.5 * (cl[i + 1] - cl[i - 1]);
        double tp = t[i], vp = cl[i];
        if (a < 0.0) {
            const double s = std::clamp(-b / (2.0 * a), -1.0, 1.0);
            tp = t[i] + s * (t[i + 1] - t[i]);
            vp = cl[i] + b * s + a * s * s;
        }
        peak_t.push_back(tp);
        peak_v.push_back(vp);
    }
    if (peak_t.size() < 3)
        throw NumericalError("lift series has " + std::to_string(peak_t.size()) +
                             " maxima after t = " + std::to_string(t_min) + "; need at least 3");
    double gap = 0.0;
    for (std::size_t k = 1; k < peak_t.size(); ++k) gap += peak_t[k] - peak_t[k - 1];
    gap /= static_cast<double>(peak_t.size() - 1);

    TurekMetrics m;
    m.peaks = static_cast<int>(peak_t.size());
    m.frequency = 1.0 / gap;
    m.strouhal = 0.1 * m.frequency;
    m.cl_max = *std::max_element(peak_v.begin(), peak_v.end());
    m.cd_max = 0.0;
    for (int i = 0; i < n; ++i)
        if (t[i] > t_min) m.cd_max = std::max(m.cd_max, cd[i]);

    // delta_p half a period after the last lift maximum that still fits.
    double t_eval = peak_t.back() + 0.5 * gap;
    for (auto it = peak_t.rbegin(); it != peak_t.rend(); ++it)
        if (*it + 0.5 * gap <= t.back()) {
            t_eval = *it + 0.5 * gap;
            break;
        }
    t_eval = std::min(t_eval, t.back());
    const auto hi = std::lower_bound(t.begin(), t.end(), t_eval) - t.begin();
    if (hi == 0) m.delta_p = dp.front();
    else if (hi >= n) m.delta_p = dp.back();
    else {
        const double w = (t_eval - t[hi - 1]) / (t[hi] - t[hi - 1]);
        m.delta_p = (1.0 - w) * dp[hi - 1] + w * dp[hi];
    }
    return m;
}

std::vector<double> clockwise_vortex_centers(const MeshSnapshot& mesh, const Vector& u,
                                             double y_line, double x_lo, double x_hi,
                                             int samples) {
    std::vector<double> xs, vs;
    for (int i = 0; i <= samples; ++i) {
        const double x = x_lo + (x_hi - x_lo) * i / samples;
        try {
            const Vec2 v = fem::evaluate_velocity(mesh, u, {x, y_line});
            xs.push_back(x);
            vs.push_back(v.y);
        } catch (const GeometryError&) {
            // inactive cell (inside the obstacle): break sampling continuity
            xs.push_back(x);
            vs.push_back(std::numeric_limits<double>::quiet_NaN());
        }
    }
    std::vector<double> centers;
    for (std::size_t i = 1; i < vs.size(); ++i) {
        if (std::isnan(vs[i - 1]) || std::isnan(vs[i])) continue;
        if (vs[i - 1] > 0.0 && vs[i] <= 0.0)
            centers.push_back(xs[i - 1] +
                              (xs[i] - xs[i - 1]) * vs[i - 1] / (vs[i - 1] - vs[i]));
    }
    return centers;
}

ScenarioSetup make_setup(const io::RunConfig& cfg) {
    ScenarioSetup s;
    s.grid = CartesianGrid::make(cfg.x_min, cfg.y_min, cfg.lx, cfg.ly, cfg.nx, cfg.ny);

    LevelSetField ls;
    ls.shape = cfg.shape;
    ls.center = {cfg.obstacle_x, cfg.obstacle_y};
    ls.disk_radius = cfg.disk_radius;
    ls.motion.kind = cfg.motion;
    ls.motion.omega = cfg.omega;
    ls.motion.amplitude = cfg.amplitude;
    ls.motion.frequency = cfg.frequency;
    ls.motion.bubble_radius = cfg.bubble_radius;
    if (cfg.shape == ShapeKind::None) ls = no_obstacle();

    ts::Problem prob;
    prob.ls = ls;
    prob.nu = cfg.resolved_nu();
    prob.penalty_gamma = cfg.gamma;
    prob.lambda_override = cfg.lambda_override;
    prob.band_width = cfg.band_width;
    prob.transport.dtau = cfg.dtau;
    prob.transport.tol_scale = cfg.tol;

    const auto zero2 = [](const Point&, double) { return Vec2{0.0, 0.0}; };
    const auto moving_cut = [ls](const Point& z, double t) { return boundary_velocity(ls, z, t); };

    switch (cfg.scenario) {
    case io::Scenario::KimMoinStatic:
    case io::Scenario::KimMoinMoving: {
        KimMoin km{prob.nu};
        prob.body_force = [km](const Point& p, double t) { return km.forcing(p, t); };
        prob.wall_data = [km](const Point& p, double t, WallSide) { return km.velocity(p, t); };
        prob.cut_data = [km](const Point& z, double t) { return km.velocity(z, t); };
        s.exact_u = [km](const Point& p, double t) { return km.velocity(p, t); };
        s.exact_grad_ux = [km](const Point& p, double t) { return km.grad_ux(p, t); };
        s.exact_grad_uy = [km](const Point& p, double t) { return km.grad_uy(p, t); };
        s.initial_u = s.exact_u;
        s.initial_p = [km](const Point& p, double t) { return km.pressure(p, t); };
        break;
    }
    case io::Scenario::TurekDisk: {
        prob.wall_dirichlet = {true, false, true, true}; // do-nothing outlet on the right
        const double height = cfg.ly;
        prob.wall_data = [height](const Point& p, double, WallSide side) -> Vec2 {
            if (side != WallSide::Left) return {0.0, 0.0};
            return {4.0 * 1.5 * p.y * (height - p.y) / (height * height), 0.0};
        };
        prob.cut_data = zero2;
        break;
    }
    case io::Scenario::DrivenCavity:
        prob.wall_data = [](const Point&, double, WallSide side) -> Vec2 {
            return side == WallSide::Top ? Vec2{1.0, 0.0} : Vec2{0.0, 0.0};
        };
        prob.cut_data = zero2;
        break;
    case io::Scenario::RotatingFlower:
    case io::Scenario::OscillatingBubble:
    case io::Scenario::EllipsoidalBubble:
        prob.wall_data = [](const Point&, double, WallSide) { return Vec2{0.0, 0.0}; };
        prob.cut_data = moving_cut;
        break;
    }
    s.problem = std::move(prob);
    return s;
}

RunResult run_transient(const io::RunConfig& cfg, const StepCallback& callback) {
    io::validate(cfg);
    ScenarioSetup setup = make_setup(cfg);
    const auto tab = ts::make_tableau(cfg.order);

    const int nts = std::max(1, static_cast<int>(std::lround(cfg.t_end / cfg.resolved_dt())));
    const double dt = cfg.t_end / nts;
    const bool turek = cfg.scenario == io::Scenario::TurekDisk;

    auto mesh = build_mesh(setup.grid, setup.problem.ls, 0.0, cfg.snap_threshold);
    ts::MovingWorkspace ws;
    ws.op = ts::make_saddle_operator(mesh, setup.problem);
    ts::State state = ts::initial_state(mesh, setup.initial_u, setup.initial_p);

    RunResult result;
    result.penalty = ws.op->penalty;
    result.history.columns = {"t", "u_l2", "div_residual", "solver_residual", "wall_ms"};
    if (turek) {
        result.history.columns.insert(result.history.columns.end(), {"cd", "cl", "dp"});
    }
    std::vector<double> ht, hcd, hcl, hdp;

    const bool moving = !setup.problem.ls.motion.is_static();
    for (int n = 0; n < nts; ++n) {
        ts::StepStats stats;
        if (moving) state = ts::advance_moving(state, dt, tab, setup.problem, ws, &stats);
        else state = ts::imex_step(state, dt, tab, *ws.op, &stats);

        std::vector<double> row = {stats.t, stats.u_l2, stats.div_residual,
                                   stats.solver_residual, stats.wall_ms};
        if (turek) {
            const Vec2 f = boundary_force(ws.op->cache, state.u, state.p, setup.problem.nu);
            const double cd = 20.0 * f.x, cl = 20.0 * f.y;
            const double dp = fem::evaluate_pressure(*state.mesh, state.p, {0.15, 0.2}) -
                              fem::evaluate_pressure(*state.mesh, state.p, {0.25, 0.2});
            row.insert(row.end(), {cd, cl, dp});
            ht.push_back(stats.t);
            hcd.push_back(cd);
            hcl.push_back(cl);
            hdp.push_back(dp);
        }
        result.history.rows.push_back(std::move(row));
        if (callback) callback(state, stats, ws.op->cache);
    }
    if (turek && cfg.t_end > 4.0 + 1e-12) {
        try {
            result.turek = analyze_lift_series(ht, hcd, hcl, hdp, 4.0);
        } catch (const NumericalError&) {
            // too few shedding cycles in this run; leave the metrics empty
        }
    }
    result.state = std::move(state);
    return result;
}

io::ConvergenceTable convergence_sweep(
    const io::RunConfig& base, int levels,
    const std::function<void(int, double, const ErrorNorms&)>& on_level) {
    if (base.scenario != io::Scenario::KimMoinStatic &&
        base.scenario != io::Scenario::KimMoinMoving)
        throw ConfigError("convergence sweep requires an analytic scenario");
    if (levels < 2) throw ConfigError("convergence sweep needs at least 2 levels");

    io::ConvergenceTable table;
    table.norms = {"total L2", "total H1", "final L2", "final H1"};
    for (int k = 0; k < levels; ++k) {
        io::RunConfig cfg = base;
        cfg.nx = base.nx << k;
        cfg.ny = base.ny << k;
        ScenarioSetup setup = make_setup(cfg);
        ErrorAccumulator acc(setup.exact_u, setup.exact_grad_ux, setup.exact_grad_uy);
        run_transient(cfg, [&](const ts::State& s, const ts::StepStats&,
                               const fem::AssemblyCache& cache) {
            acc.accumulate(cache, s.u, s.t);
        });
        const ErrorNorms e = acc.finish();
        table.h.push_back(cfg.h());
        table.rows.push_back({e.total_l2, e.total_h1, e.final_l2, e.final_h1});
        if (on_level) on_level(k, cfg.h(), e);
    }
    return table;
}

} // namespace ns2d::bench
