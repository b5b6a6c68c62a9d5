#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ns2d/benchmarks.hpp"
#include "ns2d/cli_io.hpp"
#include "ns2d/extrapolation.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ns2d;

namespace {

json tableau_json(const ts::ButcherPair& tab) {
    json j;
    j["stages"] = tab.s;
    j["order"] = tab.order;
    auto mat = [](const Eigen::MatrixXd& m) {
        json rows = json::array();
        for (int i = 0; i < m.rows(); ++i) {
            json r = json::array();
            for (int c = 0; c < m.cols(); ++c) r.push_back(m(i, c));
            rows.push_back(r);
        }
        return rows;
    };
    auto vec = [](const Eigen::VectorXd& v) {
        json r = json::array();
        for (int i = 0; i < v.size(); ++i) r.push_back(v[i]);
        return r;
    };
    j["a_explicit"] = mat(tab.a_ex);
    j["a_implicit"] = mat(tab.a_im);
    j["b_explicit"] = vec(tab.b_ex);
    j["b_implicit"] = vec(tab.b_im);
    j["c_explicit"] = vec(tab.c_ex);
    j["c_implicit"] = vec(tab.c_im);
    return j;
}

void write_manifest(const io::RunConfig& cfg, const bench::RunResult& result,
                    const std::string& dir) {
    json j;
    j["scenario"] = io::scenario_name(cfg.scenario);
    j["grid"] = {{"nx", cfg.nx}, {"ny", cfg.ny}, {"h", cfg.h()},
                 {"snap_threshold", cfg.snap_threshold}};
    j["physics"] = {{"nu", cfg.resolved_nu()}};
    if (cfg.reynolds > 0.0) j["physics"]["reynolds"] = cfg.reynolds;
    j["time"] = {{"t_end", cfg.t_end}, {"dt", cfg.resolved_dt()}, {"order", cfg.order}};
    j["penalty"] = {{"gamma", result.penalty.gamma},
                    {"lambda", result.penalty.lambda},
                    {"trace_constant", result.penalty.trace_constant},
                    {"eig_iterations", result.penalty.eig_iterations}};
    j["extrapolation"] = {{"band_width", cfg.resolved_band()},
                          {"dtau", cfg.dtau > 0.0 ? cfg.dtau : 0.25 * cfg.h()},
                          {"tol", cfg.tol}};
    if (cfg.scenario == io::Scenario::OscillatingBubble ||
        cfg.scenario == io::Scenario::EllipsoidalBubble) {
        // Re = U 2R / nu with the translation speed scale U = 2 pi f A
        j["physics"]["reynolds_convention"] = "U = 2*pi*frequency*amplitude, L = 2*bubble_radius";
    }
    j["tableau"] = tableau_json(ts::make_tableau(cfg.order));
    if (result.turek) {
        j["metrics"] = {{"strouhal", result.turek->strouhal},
                        {"frequency", result.turek->frequency},
                        {"cd_max", result.turek->cd_max},
                        {"cl_max", result.turek->cl_max},
                        {"delta_p", result.turek->delta_p},
                        {"peaks", result.turek->peaks}};
    }
    io::write_text_atomic(j.dump(2) + "\n", (fs::path(dir) / "manifest.json").string());
}

int run_config(const io::RunConfig& cfg) {
    io::DirectoryLock lock(cfg.output_dir);
    std::vector<double> wanted = cfg.snapshot_times;
    std::sort(wanted.begin(), wanted.end());
    std::size_t next_snap = 0;
    int snap_id = 0;
    const double dt = cfg.resolved_dt();

    bench::RunResult result = bench::run_transient(
        cfg, [&](const ts::State& s, const ts::StepStats&, const fem::AssemblyCache&) {
            while (next_snap < wanted.size() && s.t >= wanted[next_snap] - 0.5 * dt) {
                if (cfg.write_vtk) {
                    char name[64];
                    std::snprintf(name, sizeof name, "snapshot_%03d.vtk", snap_id);
                    io::write_vtk_snapshot(*s.mesh, s.u, s.p,
                                           (fs::path(cfg.output_dir) / name).string());
                }
                ++snap_id;
                ++next_snap;
            }
        });

    io::write_series_csv(result.history,
                         (fs::path(cfg.output_dir) / "history.csv").string());
    if (cfg.write_vtk)
        io::write_vtk_snapshot(*result.state.mesh, result.state.u, result.state.p,
                               (fs::path(cfg.output_dir) / "final.vtk").string());
    write_manifest(cfg, result, cfg.output_dir);

    const auto& last = result.history.rows.back();
    std::printf("done: t = %.6g  |u|_L2 = %.6g  constraint residual = %.3e\n", last[0], last[1],
                last[2]);
    if (result.turek)
        std::printf("turek: St = %.5f  Cd_max = %.5f  Cl_max = %.5f  dp = %.5f  (%d peaks)\n",
                    result.turek->strouhal, result.turek->cd_max, result.turek->cl_max,
                    result.turek->delta_p, result.turek->peaks);
    return 0;
}

int run_converge(const io::RunConfig& cfg, int levels) {
    io::DirectoryLock lock(cfg.output_dir);
    std::printf("%6s  %12s  %12s  %12s  %12s\n", "h", "total L2", "total H1", "final L2",
                "final H1");
    const auto table = bench::convergence_sweep(
        cfg, levels, [](int, double h, const bench::ErrorNorms& e) {
            std::printf("%6.4f  %12.5e  %12.5e  %12.5e  %12.5e\n", h, e.total_l2, e.total_h1,
                        e.final_l2, e.final_h1);
        });
    io::Series errors;
    errors.columns = {"h", "total_l2", "total_h1", "final_l2", "final_h1"};
    for (std::size_t i = 0; i < table.h.size(); ++i) {
        std::vector<double> row = {table.h[i]};
        row.insert(row.end(), table.rows[i].begin(), table.rows[i].end());
        errors.rows.push_back(std::move(row));
    }
    io::write_series_csv(errors, (fs::path(cfg.output_dir) / "errors.csv").string());
    io::emit_convergence_plot(table,
                              (fs::path(cfg.output_dir) / "convergence.svg").string());
    for (std::size_t j = 0; j < table.norms.size(); ++j) {
        std::vector<double> col;
        for (const auto& row : table.rows) col.push_back(row[j]);
        std::printf("fitted order, %s: %.3f\n", table.norms[j].c_str(),
                    io::fitted_order(table.h, col));
    }
    return 0;
}

int run_extrapolate_demo(const std::string& shape_name) {
    io::RunConfig cfg = io::default_config(io::Scenario::KimMoinStatic);
    if (shape_name == "disk") cfg.shape = ShapeKind::Disk;
    else if (shape_name == "ellipse") cfg.shape = ShapeKind::Ellipse;
    else if (shape_name == "flower") cfg.shape = ShapeKind::Flower;
    else throw ConfigError("unknown shape '" + shape_name + "' (disk|ellipse|flower)");
    cfg.nx = cfg.ny = 40;

    bench::ScenarioSetup setup = bench::make_setup(cfg);
    auto mesh = build_mesh(setup.grid, setup.problem.ls, 0.0, cfg.snap_threshold);
    const auto band =
        extrap::build_band(*mesh, setup.problem.ls, extrap::Lattice::Velocity, 3.0 * cfg.h());
    const auto ops = extrap::build_gradient_operators(setup.grid, extrap::Lattice::Velocity);

    // extend the quadratic q(x, y) = 1 + x + 2y + x^2 - xy + y^2 off the fluid
    const int n = extrap::lattice_node_count(setup.grid, extrap::Lattice::Velocity);
    linalg::Vector exact(n), field(n);
    for (int i = 0; i < n; ++i) {
        const Point p = extrap::lattice_coord(setup.grid, extrap::Lattice::Velocity, i);
        exact[i] = 1.0 + p.x + 2.0 * p.y + p.x * p.x - p.x * p.y + p.y * p.y;
        field[i] = band.chi[i] ? 0.0 : exact[i];
    }
    extrap::TransportReport report;
    const linalg::Vector extended = extrap::extrapolate_quadratic(field, band, ops,
                                                                  setup.problem.transport,
                                                                  &report);
    double max_err = 0.0;
    linalg::Vector chi(n), err(n);
    for (int i = 0; i < n; ++i) {
        chi[i] = band.chi[i];
        err[i] = band.band_mask[i] ? std::abs(extended[i] - exact[i]) : 0.0;
        max_err = std::max(max_err, err[i]);
    }
    std::printf("extrapolate-demo %s: band nodes = %d, iterations = %d, final update = %.3e\n",
                shape_name.c_str(), band.band_count, report.iterations, report.final_update);
    std::printf("max quadratic extension error in band = %.6e\n", max_err);

    fs::create_directories("out");
    io::write_vtk_lattice_fields(setup.grid, true, {"chi", "field", "extended", "error"},
                                 {chi, field, extended, err},
                                 "out/extrapolate_" + shape_name + ".vtk");
    std::printf("wrote out/extrapolate_%s.vtk\n", shape_name.c_str());
    return 0;
}

int run_mesh_info(const io::RunConfig& cfg) {
    bench::ScenarioSetup setup = bench::make_setup(cfg);
    auto mesh = build_mesh(setup.grid, setup.problem.ls, 0.0, cfg.snap_threshold);
    int internal = 0, cut = 0, inactive = 0;
    for (const auto tag : mesh->tags) {
        if (tag == CellTag::Internal) ++internal;
        else if (tag == CellTag::Cut) ++cut;
        else ++inactive;
    }
    int ghost_v = 0;
    for (const auto g : mesh->nodes.v.ghost) ghost_v += g ? 1 : 0;
    std::printf("grid: %d x %d cells, h = %.6g\n", cfg.nx, cfg.ny, cfg.h());
    std::printf("cells: %d internal, %d cut, %d inactive\n", internal, cut, inactive);
    std::printf("velocity dofs: %d (%d ghost)\n", mesh->n_velocity_dofs(), ghost_v);
    std::printf("pressure dofs: %d\n", mesh->n_pressure_dofs());
    std::printf("cut segments: %zu\n", mesh->cut_geometry.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ns2d: unfitted finite element Navier-Stokes solver"};
    app.require_subcommand(1);

    std::string config_path, bench_name, shape_name;
    int levels = 3;

    auto* cmd_run = app.add_subcommand("run", "run a configured scenario");
    cmd_run->add_option("config", config_path, "config file")->required();

    auto* cmd_conv = app.add_subcommand("converge", "grid convergence study");
    cmd_conv->add_option("config", config_path, "config file")->required();
    cmd_conv->add_option("--levels", levels, "number of refinement levels");

    auto* cmd_bench = app.add_subcommand("bench", "run a named benchmark with its defaults");
    cmd_bench->add_option("name", bench_name, "turek|cavity|flower|bubble")->required();

    auto* cmd_demo = app.add_subcommand("extrapolate-demo", "quadratic extension demo");
    cmd_demo->add_option("shape", shape_name, "disk|ellipse|flower")->required();

    auto* cmd_info = app.add_subcommand("mesh-info", "print unfitted mesh statistics");
    cmd_info->add_option("config", config_path, "config file")->required();

    try {
        app.parse(argc, argv);
        if (cmd_run->parsed()) return run_config(io::parse_config_file(config_path));
        if (cmd_conv->parsed()) return run_converge(io::parse_config_file(config_path), levels);
        if (cmd_bench->parsed()) {
            io::RunConfig cfg;
            if (bench_name == "turek") cfg = io::default_config(io::Scenario::TurekDisk);
            else if (bench_name == "cavity") cfg = io::default_config(io::Scenario::DrivenCavity);
            else if (bench_name == "flower")
                cfg = io::default_config(io::Scenario::RotatingFlower);
            else if (bench_name == "bubble")
                cfg = io::default_config(io::Scenario::OscillatingBubble);
            else throw ConfigError("unknown benchmark '" + bench_name +
                                   "' (turek|cavity|flower|bubble)");
            cfg.output_dir = "out/" + bench_name;
            return run_config(cfg);
        }
        if (cmd_demo->parsed()) return run_extrapolate_demo(shape_name);
        if (cmd_info->parsed()) return run_mesh_info(io::parse_config_file(config_path));
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const GeometryError& e) {
        std::fprintf(stderr, "geometry error: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    }
    return 0;
}
