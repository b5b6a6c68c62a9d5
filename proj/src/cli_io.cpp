#include "ns2d/cli_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ns2d/shape_functions.hpp"

namespace ns2d::io {

namespace fs = std::filesystem;

std::string scenario_name(Scenario s) {
    switch (s) {
    case Scenario::KimMoinStatic: return "kim_moin_static";
    case Scenario::KimMoinMoving: return "kim_moin_moving";
    case Scenario::TurekDisk: return "turek_disk";
    case Scenario::DrivenCavity: return "driven_cavity";
    case Scenario::RotatingFlower: return "rotating_flower";
    case Scenario::OscillatingBubble: return "oscillating_bubble";
    case Scenario::EllipsoidalBubble: return "ellipsoidal_bubble";
    }
    return "unknown";
}

Scenario scenario_from_name(const std::string& name) {
    for (Scenario s : {Scenario::KimMoinStatic, Scenario::KimMoinMoving, Scenario::TurekDisk,
                       Scenario::DrivenCavity, Scenario::RotatingFlower,
                       Scenario::OscillatingBubble, Scenario::EllipsoidalBubble})
        if (scenario_name(s) == name) return s;
    throw ConfigError("unknown scenario '" + name + "'");
}

namespace {

std::string shape_name(ShapeKind s) {
    switch (s) {
    case ShapeKind::Disk: return "disk";
    case ShapeKind::Ellipse: return "ellipse";
    case ShapeKind::Flower: return "flower";
    case ShapeKind::Custom: return "custom";
    case ShapeKind::None: return "none";
    }
    return "none";
}

ShapeKind shape_from_name(const std::string& name, const std::string& key) {
    for (ShapeKind s :
         {ShapeKind::Disk, ShapeKind::Ellipse, ShapeKind::Flower, ShapeKind::None})
        if (shape_name(s) == name) return s;
    throw ConfigError(key + ": unknown shape '" + name + "'");
}

std::string motion_name(MotionKind m) {
    switch (m) {
    case MotionKind::Static: return "static";
    case MotionKind::RigidRotation: return "rigid_rotation";
    case MotionKind::BubbleTranslation: return "bubble_translation";
    case MotionKind::BubbleEllipsoidal: return "bubble_ellipsoidal";
    }
    return "static";
}

MotionKind motion_from_name(const std::string& name, const std::string& key) {
    for (MotionKind m : {MotionKind::Static, MotionKind::RigidRotation,
                         MotionKind::BubbleTranslation, MotionKind::BubbleEllipsoidal})
        if (motion_name(m) == name) return m;
    throw ConfigError(key + ": unknown motion '" + name + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, const std::string& key) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return x;
}

int parse_int(const std::string& v, const std::string& key) {
    const double x = parse_double(v, key);
    if (x != std::floor(x)) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return static_cast<int>(x);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

RunConfig default_config(Scenario s) {
    RunConfig c;
    c.scenario = s;
    switch (s) {
    case Scenario::KimMoinStatic:
        break; // struct defaults: disk in [-1,1]^2, nu = 1, T = 0.25, order 2
    case Scenario::KimMoinMoving:
        c.shape = ShapeKind::Ellipse;
        c.motion = MotionKind::RigidRotation;
        c.order = 3;
        break;
    case Scenario::TurekDisk:
        c.shape = ShapeKind::Disk;
        c.disk_radius = 0.05;
        c.obstacle_x = 0.2;
        c.obstacle_y = 0.2;
        c.nx = 220;
        c.ny = 41;
        c.x_min = 0.0;
        c.y_min = 0.0;
        c.lx = 2.2;
        c.ly = 0.41;
        c.nu = 0.001;
        c.dt = 0.01;
        c.t_end = 10.0;
        break;
    case Scenario::DrivenCavity:
        c.shape = ShapeKind::Flower;
        c.nx = c.ny = 100;
        c.reynolds = 1.0;
        c.t_end = 10.0;
        break;
    case Scenario::RotatingFlower:
        c.shape = ShapeKind::Flower;
        c.motion = MotionKind::RigidRotation;
        c.nx = c.ny = 60;
        c.reynolds = 100.0;
        c.t_end = 5.0;
        break;
    case Scenario::OscillatingBubble:
    case Scenario::EllipsoidalBubble:
        c.shape = ShapeKind::Disk;
        c.motion = s == Scenario::OscillatingBubble ? MotionKind::BubbleTranslation
                                                    : MotionKind::BubbleEllipsoidal;
        c.disk_radius = 0.258;
        c.nx = c.ny = 64;
        // Re = U 2R / nu with U = 2 pi f A (the paper states only Re = 0.1)
        c.nu = 2.0 * M_PI * 10.0 * 0.01 * 2.0 * 0.258 / 0.1;
        c.t_end = 0.1;
        break;
    }
    return c;
}

RunConfig parse_config(const std::string& text) {
    std::istringstream in(text);
    std::string line, section;
    std::optional<RunConfig> cfg;
    std::vector<std::array<std::string, 3>> pending; // section, key, value
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            static const std::vector<std::string> known = {
                "scenario", "geometry", "grid", "physics",
                "time",     "penalty",  "extrapolation", "output"};
            if (std::find(known.begin(), known.end(), section) == known.end())
                throw ConfigError("unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError("key '" + key + "' outside any section");
        if (section == "scenario" && key == "name") {
            cfg = default_config(scenario_from_name(value));
        } else {
            pending.push_back({section, key, value});
        }
    }
    if (!cfg) throw ConfigError("missing required key scenario.name");
    RunConfig& c = *cfg;

    for (const auto& [sec, key, value] : pending) {
        const std::string path = sec + "." + key;
        if (sec == "geometry") {
            if (key == "shape") c.shape = shape_from_name(value, path);
            else if (key == "motion") c.motion = motion_from_name(value, path);
            else if (key == "omega") c.omega = parse_double(value, path);
            else if (key == "amplitude") c.amplitude = parse_double(value, path);
            else if (key == "frequency") c.frequency = parse_double(value, path);
            else if (key == "bubble_radius") c.bubble_radius = parse_double(value, path);
            else if (key == "center_x") c.obstacle_x = parse_double(value, path);
            else if (key == "center_y") c.obstacle_y = parse_double(value, path);
            else if (key == "disk_radius") c.disk_radius = parse_double(value, path);
            else throw ConfigError("unknown key " + path);
        } else if (sec == "grid") {
            if (key == "nx") c.nx = parse_int(value, path);
            else if (key == "ny") c.ny = parse_int(value, path);
            else if (key == "x_min") c.x_min = parse_double(value, path);
            else if (key == "y_min") c.y_min = parse_double(value, path);
            else if (key == "lx") c.lx = parse_double(value, path);
            else if (key == "ly") c.ly = parse_double(value, path);
            else if (key == "snap_threshold") c.snap_threshold = parse_double(value, path);
            else throw ConfigError("unknown key " + path);
        } else if (sec == "physics") {
            if (key == "nu") c.nu = parse_double(value, path);
            else if (key == "reynolds") c.reynolds = parse_double(value, path);
            else throw ConfigError("unknown key " + path);
        } else if (sec == "time") {
            if (key == "t_end") c.t_end = parse_double(value, path);
            else if (key == "dt") {
                c.dt = parse_double(value, path);
                if (c.dt <= 0.0) throw ConfigError(path + ": dt must be positive");
            } else if (key == "order") c.order = parse_int(value, path);
            else throw ConfigError("unknown key " + path);
        } else if (sec == "penalty") {
            if (key == "gamma") c.gamma = parse_double(value, path);
            else if (key == "lambda") c.lambda_override = parse_double(value, path);
            else throw ConfigError("unknown key " + path);
        } else if (sec == "extrapolation") {
            if (key == "band_width") c.band_width = parse_double(value, path);
            else if (key == "dtau") c.dtau = parse_double(value, path);
            else if (key == "tol") c.tol = parse_double(value, path);
            else throw ConfigError("unknown key " + path);
        } else if (sec == "output") {
            if (key == "directory") c.output_dir = value;
            else if (key == "write_vtk") c.write_vtk = parse_bool(value, path);
            else if (key == "snapshot_times") {
                c.snapshot_times.clear();
                std::istringstream ls(value);
                std::string item;
                while (std::getline(ls, item, ','))
                    c.snapshot_times.push_back(parse_double(trim(item), path));
            } else throw ConfigError("unknown key " + path);
        } else if (sec == "scenario") {
            throw ConfigError("unknown key " + path);
        }
    }
    validate(c);
    return c;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    out << "[scenario]\nname = " << scenario_name(c.scenario) << "\n\n";
    out << "[geometry]\n";
    out << "shape = " << shape_name(c.shape) << "\n";
    out << "motion = " << motion_name(c.motion) << "\n";
    out << "omega = " << fmt(c.omega) << "\n";
    out << "amplitude = " << fmt(c.amplitude) << "\n";
    out << "frequency = " << fmt(c.frequency) << "\n";
    out << "bubble_radius = " << fmt(c.bubble_radius) << "\n";
    out << "center_x = " << fmt(c.obstacle_x) << "\n";
    out << "center_y = " << fmt(c.obstacle_y) << "\n";
    out << "disk_radius = " << fmt(c.disk_radius) << "\n\n";
    out << "[grid]\n";
    out << "nx = " << c.nx << "\nny = " << c.ny << "\n";
    out << "x_min = " << fmt(c.x_min) << "\ny_min = " << fmt(c.y_min) << "\n";
    out << "lx = " << fmt(c.lx) << "\nly = " << fmt(c.ly) << "\n";
    out << "snap_threshold = " << fmt(c.snap_threshold) << "\n\n";
    out << "[physics]\nnu = " << fmt(c.nu) << "\n";
    if (c.reynolds > 0.0) out << "reynolds = " << fmt(c.reynolds) << "\n";
    out << "\n[time]\nt_end = " << fmt(c.t_end) << "\n";
    if (c.dt > 0.0) out << "dt = " << fmt(c.dt) << "\n";
    out << "order = " << c.order << "\n\n";
    out << "[penalty]\ngamma = " << fmt(c.gamma) << "\n";
    if (c.lambda_override > 0.0) out << "lambda = " << fmt(c.lambda_override) << "\n";
    out << "\n[extrapolation]\n";
    if (c.band_width > 0.0) out << "band_width = " << fmt(c.band_width) << "\n";
    if (c.dtau > 0.0) out << "dtau = " << fmt(c.dtau) << "\n";
    out << "tol = " << fmt(c.tol) << "\n\n";
    out << "[output]\ndirectory = " << c.output_dir << "\n";
    out << "write_vtk = " << (c.write_vtk ? "true" : "false") << "\n";
    if (!c.snapshot_times.empty()) {
        out << "snapshot_times = ";
        for (std::size_t i = 0; i < c.snapshot_times.size(); ++i)
            out << (i ? "," : "") << fmt(c.snapshot_times[i]);
        out << "\n";
    }
    return out.str();
}

void validate(const RunConfig& c) {
    if (c.nx <= 0 || c.ny <= 0) throw ConfigError("grid.nx and grid.ny must be positive");
    const double hx = c.lx / c.nx, hy = c.ly / c.ny;
    if (std::abs(hx - hy) > 1e-12 * std::max(hx, hy))
        throw ConfigError("grid cells must be square: lx/nx = " + fmt(hx) +
                          " differs from ly/ny = " + fmt(hy));
    if (c.order != 2 && c.order != 3)
        throw ConfigError("time.order must be 2 or 3, got " + std::to_string(c.order));
    if (c.resolved_dt() <= 0.0) throw ConfigError("time.dt must be positive");
    if (c.t_end <= 0.0) throw ConfigError("time.t_end must be positive");
    if (c.gamma <= 1.0) throw ConfigError("penalty.gamma must exceed 1, got " + fmt(c.gamma));
    if (c.motion != MotionKind::Static && c.band_width > 0.0 &&
        c.band_width < 3.0 * c.h() - 1e-12)
        throw ConfigError("extrapolation.band_width must be at least 3h for moving geometry");
    if (c.resolved_nu() <= 0.0) throw ConfigError("physics.nu (or reynolds) must be positive");
}

void write_text_atomic(const std::string& text, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw ConfigError("cannot write '" + tmp + "'");
        out << text;
    }
    fs::rename(tmp, path);
}

void write_series_csv(const Series& series, const std::string& path) {
    if (series.rows.empty()) throw ConfigError("refusing to write empty series to " + path);
    std::ostringstream out;
    for (std::size_t i = 0; i < series.columns.size(); ++i)
        out << (i ? "," : "") << series.columns[i];
    out << "\n";
    for (const auto& row : series.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << fmt(row[i]);
        out << "\n";
    }
    write_text_atomic(out.str(), path);
}

DirectoryLock::DirectoryLock(const std::string& directory) {
    fs::create_directories(directory);
    path_ = (fs::path(directory) / ".ns2d.lock").string();
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
        throw ConfigError("output directory '" + directory +
                          "' is locked by another run (remove " + path_ + " if stale)");
    std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

namespace {

void write_vtk_header(std::ostringstream& out, const CartesianGrid& grid, bool q2,
                      const std::string& title) {
    const int w = q2 ? 2 * grid.nx + 1 : grid.nx + 1;
    const int hgt = q2 ? 2 * grid.ny + 1 : grid.ny + 1;
    out << "# vtk DataFile Version 2.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << w * hgt << " double\n";
    const double d = q2 ? 0.5 * grid.h : grid.h;
    for (int j = 0; j < hgt; ++j)
        for (int i = 0; i < w; ++i)
            out << fmt(grid.x_min + i * d) << " " << fmt(grid.y_min + j * d) << " 0\n";
    const int cx = w - 1, cy = hgt - 1;
    out << "CELLS " << cx * cy << " " << 5 * cx * cy << "\n";
    for (int j = 0; j < cy; ++j)
        for (int i = 0; i < cx; ++i)
            out << "4 " << j * w + i << " " << j * w + i + 1 << " " << (j + 1) * w + i + 1 << " "
                << (j + 1) * w + i << "\n";
    out << "CELL_TYPES " << cx * cy << "\n";
    for (int k = 0; k < cx * cy; ++k) out << "9\n";
    out << "POINT_DATA " << w * hgt << "\n";
}

} // namespace

void write_vtk_snapshot(const MeshSnapshot& mesh, const linalg::Vector& u,
                        const linalg::Vector& p, const std::string& path) {
    const auto& g = mesh.grid;
    std::ostringstream out;
    write_vtk_header(out, g, true, "ns2d snapshot t=" + fmt(mesh.time));
    const int n = g.n_vnodes();
    const int dv = mesh.n_velocity_dofs();
    out << "VECTORS velocity double\n";
    for (int i = 0; i < n; ++i) {
        const int dof = mesh.nodes.v.index[i];
        if (dof >= 0) out << fmt(u[dof]) << " " << fmt(u[dv + dof]) << " 0\n";
        else out << "0 0 0\n";
    }
    out << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
    const int w = 2 * g.nx + 1;
    for (int i = 0; i < n; ++i) {
        const int ix = i % w, iy = i / w;
        const int cx = std::min(ix / 2, g.nx - 1), cy = std::min(iy / 2, g.ny - 1);
        const int cell = g.cell_index(cx, cy);
        if (mesh.tags[cell] == CellTag::Inactive) {
            out << "0\n";
            continue;
        }
        const Point x = g.vnode_coord(i);
        const Point ll = g.cell_lower_left(cell);
        const auto val = q1::values((x.x - ll.x) / g.h, (x.y - ll.y) / g.h);
        double pv = 0.0;
        for (int a = 0; a < 4; ++a) pv += p[mesh.nodes.p.index[g.cell_pnode(cell, a)]] * val[a];
        out << fmt(pv) << "\n";
    }
    out << "SCALARS phi double 1\nLOOKUP_TABLE default\n";
    for (int i = 0; i < n; ++i) out << fmt(mesh.nodal_phi[i]) << "\n";
    write_text_atomic(out.str(), path);
}

void write_vtk_lattice_fields(const CartesianGrid& grid, bool q2,
                              const std::vector<std::string>& names,
                              const std::vector<linalg::Vector>& fields,
                              const std::string& path) {
    std::ostringstream out;
    write_vtk_header(out, grid, q2, "ns2d lattice fields");
    for (std::size_t k = 0; k < names.size(); ++k) {
        out << "SCALARS " << names[k] << " double 1\nLOOKUP_TABLE default\n";
        for (int i = 0; i < fields[k].size(); ++i) out << fmt(fields[k][i]) << "\n";
    }
    write_text_atomic(out.str(), path);
}

double fitted_order(const std::vector<double>& h, const std::vector<double>& err) {
    const int n = static_cast<int>(h.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        const double x = std::log(h[i]), y = std::log(std::max(err[i], 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void emit_convergence_plot(const ConvergenceTable& table, const std::string& path) {
    if (table.h.size() < 2)
        throw ConfigError("convergence plot needs at least 2 rows, got " +
                          std::to_string(table.h.size()));
    const int width = 640, height = 480, ml = 70, mr = 20, mt = 30, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (double h : table.h) {
        xmin = std::min(xmin, std::log10(h));
        xmax = std::max(xmax, std::log10(h));
    }
    for (const auto& row : table.rows)
        for (double e : row) {
            const double l = std::log10(std::max(e, 1e-300));
            ymin = std::min(ymin, l);
            ymax = std::max(ymax, l);
        }
    ymin -= 0.4;
    ymax += 0.4;
    xmin -= 0.1;
    xmax += 0.1;
    auto px = [&](double lx) {
        return ml + (lx - xmin) / (xmax - xmin) * (width - ml - mr);
    };
    auto py = [&](double ly) {
        return height - mb - (ly - ymin) / (ymax - ymin) * (height - mt - mb);
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << width - ml - mr
        << "\" height=\"" << height - mt - mb
        << "\" fill=\"white\" stroke=\"black\" stroke-width=\"1\"/>\n";
    for (int k = static_cast<int>(std::ceil(xmin)); k <= std::floor(xmax); ++k) {
        out << "<line x1=\"" << px(k) << "\" y1=\"" << py(ymin) << "\" x2=\"" << px(k)
            << "\" y2=\"" << py(ymax) << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << px(k) << "\" y=\"" << height - mb + 18
            << "\" text-anchor=\"middle\">1e" << k << "</text>\n";
    }
    for (int k = static_cast<int>(std::ceil(ymin)); k <= std::floor(ymax); ++k) {
        out << "<line x1=\"" << px(xmin) << "\" y1=\"" << py(k) << "\" x2=\"" << px(xmax)
            << "\" y2=\"" << py(k) << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << ml - 6 << "\" y=\"" << py(k) + 4
            << "\" text-anchor=\"end\">1e" << k << "</text>\n";
    }
    out << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\">h</text>\n";

    // Slope guides anchored near the coarsest point of the first norm.
    for (int order = 2; order <= 3; ++order) {
        const double h0 = *std::max_element(table.h.begin(), table.h.end());
        std::size_t i0 = 0;
        for (std::size_t i = 0; i < table.h.size(); ++i)
            if (table.h[i] == h0) i0 = i;
        const double e0 = table.rows[i0][0] * 0.5;
        const double lx0 = std::log10(h0), ly0 = std::log10(std::max(e0, 1e-300));
        const double lx1 = xmin + 0.1;
        const double ly1 = ly0 + order * (lx1 - lx0);
        out << "<line x1=\"" << px(lx0) << "\" y1=\"" << py(ly0) << "\" x2=\"" << px(lx1)
            << "\" y2=\"" << py(ly1)
            << "\" stroke=\"#999999\" stroke-dasharray=\"5,4\"/>\n";
        out << "<text x=\"" << px(lx0) + 4 << "\" y=\"" << py(ly0) + 12
            << "\" fill=\"#666666\">slope " << order << "</text>\n";
    }

    for (std::size_t j = 0; j < table.norms.size(); ++j) {
        std::vector<double> errs;
        out << "<polyline fill=\"none\" stroke=\"" << colors[j % 5]
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < table.h.size(); ++i) {
            errs.push_back(table.rows[i][j]);
            out << px(std::log10(table.h[i])) << ","
                << py(std::log10(std::max(table.rows[i][j], 1e-300))) << " ";
        }
        out << "\"/>\n";
        for (std::size_t i = 0; i < table.h.size(); ++i)
            out << "<circle cx=\"" << px(std::log10(table.h[i])) << "\" cy=\""
                << py(std::log10(std::max(table.rows[i][j], 1e-300))) << "\" r=\"3\" fill=\""
                << colors[j % 5] << "\"/>\n";
        char label[128];
        std::snprintf(label, sizeof label, "%s (order %.2f)", table.norms[j].c_str(),
                      fitted_order(table.h, errs));
        out << "<text x=\"" << ml + 10 << "\" y=\"" << mt + 18 + 16 * j << "\" fill=\""
            << colors[j % 5] << "\">" << label << "</text>\n";
    }
    out << "</svg>\n";
    write_text_atomic(out.str(), path);
}

} // namespace ns2d::io
