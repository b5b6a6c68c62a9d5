#pragma once

#include <string>
#include <vector>

#include "ns2d/geometry.hpp"
#include "ns2d/linalg.hpp"
#include "ns2d/mesh.hpp"

namespace ns2d::io {

enum class Scenario {
    KimMoinStatic,
    KimMoinMoving,
    TurekDisk,
    DrivenCavity,
    RotatingFlower,
    OscillatingBubble,
    EllipsoidalBubble,
};

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

/// Fully resolved run configuration; defaults depend on the scenario.
struct RunConfig {
    Scenario scenario = Scenario::KimMoinStatic;

    // [geometry]
    ShapeKind shape = ShapeKind::Disk;
    MotionKind motion = MotionKind::Static;
    double omega = 2.0 * M_PI / 5.0;
    double amplitude = 0.01;
    double frequency = 10.0;
    double bubble_radius = 0.258;
    double obstacle_x = 0.0, obstacle_y = 0.0;
    double disk_radius = 1.0 / std::sqrt(15.0);

    // [grid]
    int nx = 32, ny = 32;
    double x_min = -1.0, y_min = -1.0, lx = 2.0, ly = 2.0;
    double snap_threshold = 1e-2;

    // [physics]
    double nu = 1.0;
    double reynolds = -1.0; // > 0: nu = 1/Re (cavity/flower convention)

    // [time]
    double t_end = 0.25;
    double dt = -1.0; // <= 0: dt = h (order 2) or h/2 (order 3)
    int order = 2;

    // [penalty]
    double gamma = 1.1;
    double lambda_override = -1.0;

    // [extrapolation]
    double band_width = -1.0; // <= 0: 3h
    double dtau = -1.0;       // <= 0: 0.25h
    double tol = 1e-8;

    // [output]
    std::string output_dir = "out";
    std::vector<double> snapshot_times;
    bool write_vtk = true;

    double h() const { return lx / nx; }
    double resolved_dt() const { return dt > 0.0 ? dt : (order == 2 ? h() : 0.5 * h()); }
    double resolved_nu() const { return reynolds > 0.0 ? 1.0 / reynolds : nu; }
    double resolved_band() const { return band_width > 0.0 ? band_width : 3.0 * h(); }
};

RunConfig default_config(Scenario s);
/// Parse the flat sectioned key = value document; unknown sections/keys and
/// type mismatches raise ConfigError naming the key path.
RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string serialize_config(const RunConfig& cfg);
/// Rejects non-square cells, dt <= 0, gamma <= 1, band < 3h with motion.
void validate(const RunConfig& cfg);

/// Columnar time series; written with 17 significant digits, LF endings,
/// atomically (temp file + rename).
struct Series {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};
void write_series_csv(const Series& series, const std::string& path);

/// Plain-text atomic write (manifests and friends).
void write_text_atomic(const std::string& text, const std::string& path);

/// Exclusive per-directory lock; throws ConfigError if already held.
class DirectoryLock {
  public:
    explicit DirectoryLock(const std::string& directory);
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

  private:
    std::string path_;
};

/// Legacy-ASCII VTK unstructured grid over the velocity lattice with
/// POINT_DATA: velocity vectors, pressure and phi scalars.
void write_vtk_snapshot(const MeshSnapshot& mesh, const linalg::Vector& u,
                        const linalg::Vector& p, const std::string& path);

/// Legacy-ASCII VTK dump of named scalar fields on one lattice (velocity
/// lattice when q2 = true, pressure lattice otherwise).
void write_vtk_lattice_fields(const CartesianGrid& grid, bool q2,
                              const std::vector<std::string>& names,
                              const std::vector<linalg::Vector>& fields, const std::string& path);

/// Log-log convergence plot: one polyline per norm plus slope-2/3 guides.
struct ConvergenceTable {
    std::vector<std::string> norms;        // column names
    std::vector<double> h;                 // one per row
    std::vector<std::vector<double>> rows; // rows[i][j]: error for h[i], norm j
};
void emit_convergence_plot(const ConvergenceTable& table, const std::string& path);

/// Least-squares slope of log(err) vs log(h).
double fitted_order(const std::vector<double>& h, const std::vector<double>& err);

} // namespace ns2d::io
