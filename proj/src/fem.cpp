#include "ns2d/fem.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>

#include "ns2d/shape_functions.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ns2d::fem {

using linalg::SparseMatrix;
using linalg::Triplet;

int worker_count() {
    int n = 0;
    if (const char* env = std::getenv("NS2D_THREADS")) n = std::atoi(env);
#ifdef _OPENMP
    if (n <= 0) n = omp_get_max_threads();
#else
    n = 1;
#endif
    return std::max(1, n);
}

namespace {

VolumeQuadEntry make_volume_entry(const CartesianGrid& grid, int cell, const QuadPoint& qp) {
    VolumeQuadEntry e;
    e.cell = cell;
    e.w = qp.w;
    e.x = qp.p;
    const Point ll = grid.cell_lower_left(cell);
    const double xi = (qp.p.x - ll.x) / grid.h, eta = (qp.p.y - ll.y) / grid.h;
    e.v_val = q2::values(xi, eta);
    e.v_grad = q2::gradients(xi, eta);
    for (auto& g : e.v_grad) g = g * (1.0 / grid.h);
    e.p_val = q1::values(xi, eta);
    return e;
}

SurfaceQuadEntry make_surface_entry(const CartesianGrid& grid, int cell, const QuadPoint& qp,
                                    const Vec2& n) {
    SurfaceQuadEntry e;
    e.cell = cell;
    e.w = qp.w;
    e.x = qp.p;
    e.z = qp.p;
    e.n = n;
    const Point ll = grid.cell_lower_left(cell);
    const double xi = (qp.p.x - ll.x) / grid.h, eta = (qp.p.y - ll.y) / grid.h;
    e.v_val = q2::values(xi, eta);
    e.v_grad = q2::gradients(xi, eta);
    for (auto& g : e.v_grad) g = g * (1.0 / grid.h);
    e.p_val = q1::values(xi, eta);
    return e;
}

bool surface_is_dirichlet(const SurfaceQuadEntry& s, const std::array<bool, 4>& wall_dirichlet) {
    return s.on_cut || wall_dirichlet[static_cast<int>(s.side)];
}

/// Run a per-active-cell triplet kernel, serial or OpenMP. Static scheduling
/// plus thread-order concatenation keeps the triplet stream identical to the
/// serial one, so both paths compress to the same matrix.
template <class Kernel>
std::vector<Triplet> assemble_over_cells(const AssemblyCache& cache, ExecutionMode mode,
                                         std::size_t per_cell_hint, Kernel&& kernel) {
    const int n = static_cast<int>(cache.mesh->active_cells.size());
    std::vector<Triplet> out;
#ifdef _OPENMP
    if (mode == ExecutionMode::Parallel) {
        const int nt = worker_count();
        std::vector<std::vector<Triplet>> bufs(nt);
#pragma omp parallel num_threads(nt)
        {
            auto& buf = bufs[omp_get_thread_num()];
            buf.reserve(per_cell_hint * (n / nt + 1));
#pragma omp for schedule(static)
            for (int i = 0; i < n; ++i) kernel(i, buf);
        }
        std::size_t total = 0;
        for (const auto& b : bufs) total += b.size();
        out.reserve(total);
        for (const auto& b : bufs) out.insert(out.end(), b.begin(), b.end());
        return out;
    }
#else
    (void)mode;
#endif
    out.reserve(per_cell_hint * n);
    for (int i = 0; i < n; ++i) kernel(i, out);
    return out;
}

std::array<int, 9> cell_vdofs(const MeshSnapshot& mesh, int cell) {
    std::array<int, 9> d{};
    for (int a = 0; a < 9; ++a) d[a] = mesh.nodes.v.index[mesh.grid.cell_vnode(cell, a)];
    return d;
}

std::array<int, 4> cell_pdofs(const MeshSnapshot& mesh, int cell) {
    std::array<int, 4> d{};
    for (int a = 0; a < 4; ++a) d[a] = mesh.nodes.p.index[mesh.grid.cell_pnode(cell, a)];
    return d;
}

} // namespace

AssemblyCache build_assembly_cache(std::shared_ptr<const MeshSnapshot> mesh,
                                   const LevelSetField& ls, bool sbm) {
    AssemblyCache cache;
    cache.mesh = mesh;
    const auto& m = *mesh;
    const int n_active = static_cast<int>(m.active_cells.size());

    std::vector<std::vector<VolumeQuadEntry>> per_cell(n_active);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(worker_count())
#endif
    for (int i = 0; i < n_active; ++i) {
        const int cell = m.active_cells[i];
        if (m.tags[cell] == CellTag::Internal) {
            for (const auto& qp : cell_gauss3x3(m.grid.cell_lower_left(cell), m.grid.h))
                per_cell[i].push_back(make_volume_entry(m.grid, cell, qp));
        } else {
            const auto& cut = m.cut_geometry[m.cut_of_cell[cell]];
            for (const auto& qp : cut.volume_quadrature)
                per_cell[i].push_back(make_volume_entry(m.grid, cell, qp));
        }
    }
    cache.cell_volume_range.resize(n_active);
    for (int i = 0; i < n_active; ++i) {
        const int begin = static_cast<int>(cache.volume.size());
        cache.volume.insert(cache.volume.end(), per_cell[i].begin(), per_cell[i].end());
        cache.cell_volume_range[i] = {begin, static_cast<int>(cache.volume.size())};
    }

    for (const auto& cut : m.cut_geometry) {
        for (std::size_t k = 0; k < cut.surface_quadrature.size(); ++k) {
            const auto& qp = cut.surface_quadrature[k];
            auto e = make_surface_entry(m.grid, cut.segment.parent_cell, qp,
                                        cut.surface_normal[k]);
            e.on_cut = true;
            if (sbm) e.z = project_to_boundary(ls, qp.p, m.time, m.grid.h).z;
            cache.surface.push_back(e);
        }
    }
    for (const auto& edge : m.wall_edges) {
        for (const auto& qp : edge.quadrature) {
            auto e = make_surface_entry(m.grid, edge.cell, qp, edge.outward_normal);
            e.side = edge.side;
            cache.surface.push_back(e);
        }
    }
    return cache;
}

SparseMatrix assemble_mass(const AssemblyCache& cache, ExecutionMode mode) {
    const auto& m = *cache.mesh;
    const int dv = m.n_velocity_dofs();
    auto triplets = assemble_over_cells(cache, mode, 81, [&](int i, std::vector<Triplet>& out) {
        const auto dofs = cell_vdofs(m, m.active_cells[i]);
        double local[9][9] = {};
        const auto [b, e] = cache.cell_volume_range[i];
        for (int q = b; q < e; ++q) {
            const auto& p = cache.volume[q];
            for (int r = 0; r < 9; ++r)
                for (int c = 0; c < 9; ++c) local[r][c] += p.w * p.v_val[r] * p.v_val[c];
        }
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 9; ++c) out.emplace_back(dofs[r], dofs[c], local[r][c]);
    });
    SparseMatrix mass(dv, dv);
    mass.add_triplets(triplets);
    mass.compress();
    return mass;
}

SparseMatrix assemble_viscous_nitsche(const AssemblyCache& cache, double nu, double lambda,
                                      const std::array<bool, 4>& wall_dirichlet,
                                      ExecutionMode mode) {
    const auto& m = *cache.mesh;
    const int dv = m.n_velocity_dofs();
    auto triplets = assemble_over_cells(cache, mode, 81, [&](int i, std::vector<Triplet>& out) {
        const auto dofs = cell_vdofs(m, m.active_cells[i]);
        double local[9][9] = {};
        const auto [b, e] = cache.cell_volume_range[i];
        for (int q = b; q < e; ++q) {
            const auto& p = cache.volume[q];
            for (int r = 0; r < 9; ++r)
                for (int c = 0; c < 9; ++c)
                    local[r][c] += nu * p.w * p.v_grad[r].dot(p.v_grad[c]);
        }
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 9; ++c) out.emplace_back(dofs[r], dofs[c], local[r][c]);
    });
    for (const auto& s : cache.surface) {
        if (!surface_is_dirichlet(s, wall_dirichlet)) continue;
        const auto dofs = cell_vdofs(m, s.cell);
        double dn[9];
        for (int a = 0; a < 9; ++a) dn[a] = s.n.dot(s.v_grad[a]);
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 9; ++c) {
                const double v = nu * s.w *
                                 (-dn[c] * s.v_val[r] - s.v_val[c] * dn[r] +
                                  lambda * s.v_val[c] * s.v_val[r]);
                triplets.emplace_back(dofs[r], dofs[c], v);
            }
    }
    SparseMatrix a(dv, dv);
    a.add_triplets(triplets);
    a.compress();
    return a;
}

namespace {

/// Run a face kernel over every face shared by two active cells at least
/// one of which is cut. Such faces always have an active cell on the lower
/// side, so visiting the +x/+y neighbors of active cells covers each face
/// exactly once. Axis 0 has normal x (the lower cell's xi = 1 edge meets
/// the upper cell's xi = 0 edge), axis 1 normal y.
template <class FaceKernel>
std::vector<Triplet> assemble_over_ghost_faces(const AssemblyCache& cache, ExecutionMode mode,
                                               FaceKernel&& face) {
    const auto& m = *cache.mesh;
    const auto& g = m.grid;
    return assemble_over_cells(cache, mode, 81, [&](int i, std::vector<Triplet>& out) {
        const int cell = m.active_cells[i];
        const int cx = cell % g.nx, cy = cell / g.nx;
        if (cx + 1 < g.nx) {
            const int nb = cell + 1;
            if (m.tags[nb] != CellTag::Inactive &&
                (m.tags[cell] == CellTag::Cut || m.tags[nb] == CellTag::Cut))
                face(cell, nb, 0, out);
        }
        if (cy + 1 < g.ny) {
            const int nb = cell + g.nx;
            if (m.tags[nb] != CellTag::Inactive &&
                (m.tags[cell] == CellTag::Cut || m.tags[nb] == CellTag::Cut))
                face(cell, nb, 1, out);
        }
    });
}

} // namespace

SparseMatrix assemble_ghost_penalty(const AssemblyCache& cache, ExecutionMode mode) {
    const auto& m = *cache.mesh;
    const int dv = m.n_velocity_dofs();
    const double h = m.grid.h;
    const auto face = [&](int cl, int cr, int axis, std::vector<Triplet>& out) {
        const auto dl = cell_vdofs(m, cl);
        const auto dr = cell_vdofs(m, cr);
        const auto d1l = q2::line_deriv(1.0), d1r = q2::line_deriv(0.0);
        const auto d2 = q2::line_deriv2();
        double local[18][18] = {};
        for (const auto& [t, wt] : gauss3_unit()) {
            const auto tv = q2::line(t);
            double j1[18], j2[18];
            for (int a = 0; a < 9; ++a) {
                const int an = axis == 0 ? a % 3 : a / 3; // 1D index along the normal
                const int at = axis == 0 ? a / 3 : a % 3; // along the face
                j1[a] = d1l[an] / h * tv[at];
                j2[a] = d2[an] / (h * h) * tv[at];
                j1[9 + a] = -d1r[an] / h * tv[at];
                j2[9 + a] = -d2[an] / (h * h) * tv[at];
            }
            const double w = wt * h;
            for (int r = 0; r < 18; ++r)
                for (int c = 0; c < 18; ++c)
                    local[r][c] += w * (h * j1[r] * j1[c] + h * h * h * j2[r] * j2[c]);
        }
        const auto dof = [&](int k) { return k < 9 ? dl[k] : dr[k - 9]; };
        for (int r = 0; r < 18; ++r)
            for (int c = 0; c < 18; ++c) out.emplace_back(dof(r), dof(c), local[r][c]);
    };
    auto triplets = assemble_over_ghost_faces(cache, mode, face);
    SparseMatrix gp(dv, dv);
    gp.add_triplets(triplets);
    gp.compress();
    return gp;
}

SparseMatrix assemble_pressure_ghost(const AssemblyCache& cache, ExecutionMode mode) {
    const auto& m = *cache.mesh;
    const int dp = m.n_pressure_dofs();
    const double h = m.grid.h;
    const auto face = [&](int cl, int cr, int axis, std::vector<Triplet>& out) {
        const auto dl = cell_pdofs(m, cl);
        const auto dr = cell_pdofs(m, cr);
        double local[8][8] = {};
        for (const auto& [t, wt] : gauss3_unit()) {
            const auto tv = q1::line(t);
            double j1[8];
            for (int a = 0; a < 4; ++a) {
                const int an = axis == 0 ? a % 2 : a / 2;
                const int at = axis == 0 ? a / 2 : a % 2;
                // Q1 normal derivative is +-1/h on either side of the face.
                j1[a] = (an == 0 ? -1.0 : 1.0) / h * tv[at];
                j1[4 + a] = -j1[a];
            }
            const double w = wt * h;
            for (int r = 0; r < 8; ++r)
                for (int c = 0; c < 8; ++c) local[r][c] += w * h * h * h * j1[r] * j1[c];
        }
        const auto dof = [&](int k) { return k < 4 ? dl[k] : dr[k - 4]; };
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) out.emplace_back(dof(r), dof(c), local[r][c]);
    };
    auto triplets = assemble_over_ghost_faces(cache, mode, face);
    SparseMatrix gp(dp, dp);
    gp.add_triplets(triplets);
    gp.compress();
    return gp;
}

SparseMatrix assemble_convection(const AssemblyCache& cache, const Vector& u_nodal,
                                 ExecutionMode mode) {
    const auto& m = *cache.mesh;
    const int dv = m.n_velocity_dofs();
    auto triplets = assemble_over_cells(cache, mode, 81, [&](int i, std::vector<Triplet>& out) {
        const auto dofs = cell_vdofs(m, m.active_cells[i]);
        double local[9][9] = {};
        const auto [b, e] = cache.cell_volume_range[i];
        for (int q = b; q < e; ++q) {
            const auto& p = cache.volume[q];
            Vec2 u{0.0, 0.0};
            for (int a = 0; a < 9; ++a) {
                u.x += u_nodal[dofs[a]] * p.v_val[a];
                u.y += u_nodal[dv + dofs[a]] * p.v_val[a];
            }
            for (int r = 0; r < 9; ++r)
                for (int c = 0; c < 9; ++c)
                    local[r][c] += p.w * u.dot(p.v_grad[c]) * p.v_val[r];
        }
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 9; ++c) out.emplace_back(dofs[r], dofs[c], local[r][c]);
    });
    SparseMatrix conv(dv, dv);
    conv.add_triplets(triplets);
    conv.compress();
    return conv;
}

PressureCoupling assemble_pressure_coupling(const AssemblyCache& cache,
                                            const std::array<bool, 4>& wall_dirichlet,
                                            ExecutionMode mode) {
    const auto& m = *cache.mesh;
    const int dv = m.n_velocity_dofs(), dp = m.n_pressure_dofs();
    std::vector<Triplet> tx, ty;
    auto add_component = [&](int comp, std::vector<Triplet>& t) {
        t = assemble_over_cells(cache, mode, 36, [&](int i, std::vector<Triplet>& out) {
            const int cell = m.active_cells[i];
            const auto vdofs = cell_vdofs(m, cell);
            const auto pdofs = cell_pdofs(m, cell);
            double local[9][4] = {};
            const auto [b, e] = cache.cell_volume_range[i];
            for (int q = b; q < e; ++q) {
                const auto& p = cache.volume[q];
                for (int r = 0; r < 9; ++r) {
                    const double d = comp == 0 ? p.v_grad[r].x : p.v_grad[r].y;
                    for (int c = 0; c < 4; ++c) local[r][c] -= p.w * p.p_val[c] * d;
                }
            }
            for (int r = 0; r < 9; ++r)
                for (int c = 0; c < 4; ++c) out.emplace_back(vdofs[r], pdofs[c], local[r][c]);
        });
        for (const auto& s : cache.surface) {
            if (!surface_is_dirichlet(s, wall_dirichlet)) continue;
            const auto vdofs = cell_vdofs(m, s.cell);
            const auto pdofs = cell_pdofs(m, s.cell);
            const double nc = comp == 0 ? s.n.x : s.n.y;
            for (int r = 0; r < 9; ++r)
                for (int c = 0; c < 4; ++c)
                    t.emplace_back(vdofs[r], pdofs[c], s.w * s.p_val[c] * nc * s.v_val[r]);
        }
    };
    add_component(0, tx);
    add_component(1, ty);
    PressureCoupling out{SparseMatrix(dv, dp), SparseMatrix(dv, dp)};
    out.bx.add_triplets(tx);
    out.by.add_triplets(ty);
    out.bx.compress();
    out.by.compress();
    return out;
}

Vector assemble_momentum_rhs(const AssemblyCache& cache, double nu, double lambda,
                             const std::array<bool, 4>& wall_dirichlet,
                             const VectorField& body_force, const WallField& wall_data,
                             const VectorField& cut_data, double t) {
    const auto& m = *cache.mesh;
    const int dv = m.n_velocity_dofs();
    Vector rhs = Vector::Zero(2 * dv);
    if (body_force) {
        for (const auto& p : cache.volume) {
            const Vec2 f = body_force(p.x, t);
            const auto dofs = cell_vdofs(m, p.cell);
            for (int a = 0; a < 9; ++a) {
                rhs[dofs[a]] += p.w * f.x * p.v_val[a];
                rhs[dv + dofs[a]] += p.w * f.y * p.v_val[a];
            }
        }
    }
    for (const auto& s : cache.surface) {
        if (!surface_is_dirichlet(s, wall_dirichlet)) continue;
        const Vec2 g = s.on_cut ? (cut_data ? cut_data(s.z, t) : Vec2{})
                                : (wall_data ? wall_data(s.x, t, s.side) : Vec2{});
        if (g.x == 0.0 && g.y == 0.0) continue;
        const auto dofs = cell_vdofs(m, s.cell);
        for (int a = 0; a < 9; ++a) {
            const double dn = s.n.dot(s.v_grad[a]);
            const double coeff = nu * s.w * (lambda * s.v_val[a] - dn);
            rhs[dofs[a]] += coeff * g.x;
            rhs[dv + dofs[a]] += coeff * g.y;
        }
    }
    return rhs;
}

Vector assemble_continuity_rhs(const AssemblyCache& cache,
                               const std::array<bool, 4>& wall_dirichlet,
                               const WallField& wall_data, const VectorField& cut_data,
                               double t) {
    const auto& m = *cache.mesh;
    Vector rhs = Vector::Zero(m.n_pressure_dofs());
    for (const auto& s : cache.surface) {
        if (!surface_is_dirichlet(s, wall_dirichlet)) continue;
        const Vec2 g = s.on_cut ? (cut_data ? cut_data(s.z, t) : Vec2{})
                                : (wall_data ? wall_data(s.x, t, s.side) : Vec2{});
        const double gn = s.n.dot(g);
        if (gn == 0.0) continue;
        const auto pdofs = cell_pdofs(m, s.cell);
        for (int a = 0; a < 4; ++a) rhs[pdofs[a]] += s.w * s.p_val[a] * gn;
    }
    return rhs;
}

PenaltyEstimate estimate_penalty(const AssemblyCache& cache,
                                 const std::array<bool, 4>& wall_dirichlet, double gamma,
                                 const linalg::SparseMatrix* ghost, double ghost_scale) {
    const auto& m = *cache.mesh;
    const int dv = m.n_velocity_dofs();
    SparseMatrix k(dv, dv), grad_gramian(dv, dv);
    for (const auto& s : cache.surface) {
        if (!surface_is_dirichlet(s, wall_dirichlet)) continue;
        const auto dofs = cell_vdofs(m, s.cell);
        double dn[9];
        for (int a = 0; a < 9; ++a) dn[a] = s.n.dot(s.v_grad[a]);
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 9; ++c) k.add(dofs[r], dofs[c], s.w * dn[r] * dn[c]);
    }
    for (const auto& p : cache.volume) {
        const auto dofs = cell_vdofs(m, p.cell);
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 9; ++c)
                grad_gramian.add(dofs[r], dofs[c], p.w * p.v_grad[r].dot(p.v_grad[c]));
    }
    k.compress();
    grad_gramian.compress();
    if (ghost) grad_gramian.eigen() += ghost_scale * ghost->eigen();

    // Pin the deepest interior node; it removes the constant from ker(M)
    // while staying clear of the boundary rows of K.
    int pin = 0;
    double best = std::numeric_limits<double>::max();
    for (int i = 0; i < dv; ++i) {
        const double phi = m.nodal_phi[m.nodes.v.active[i]];
        if (phi < best) {
            best = phi;
            pin = i;
        }
    }
    const auto eig = linalg::max_generalized_eig(k, grad_gramian, pin);
    PenaltyEstimate est;
    est.trace_constant = eig.lambda;
    est.gamma = gamma;
    est.lambda = gamma * eig.lambda;
    est.eig_iterations = eig.iterations;
    return est;
}

Vector interpolate_velocity(const MeshSnapshot& mesh, const VectorField& f, double t) {
    const int dv = mesh.n_velocity_dofs();
    Vector u = Vector::Zero(2 * dv);
    for (int i = 0; i < dv; ++i) {
        const Vec2 v = f(mesh.grid.vnode_coord(mesh.nodes.v.active[i]), t);
        u[i] = v.x;
        u[dv + i] = v.y;
    }
    return u;
}

Vector interpolate_pressure(const MeshSnapshot& mesh,
                            const std::function<double(const Point&, double)>& f, double t) {
    const int dp = mesh.n_pressure_dofs();
    Vector p(dp);
    for (int i = 0; i < dp; ++i) p[i] = f(mesh.grid.pnode_coord(mesh.nodes.p.active[i]), t);
    return p;
}

namespace {
int locate_active_cell(const MeshSnapshot& mesh, const Point& p) {
    const auto& g = mesh.grid;
    const int cx = std::clamp(static_cast<int>((p.x - g.x_min) / g.h), 0, g.nx - 1);
    const int cy = std::clamp(static_cast<int>((p.y - g.y_min) / g.h), 0, g.ny - 1);
    const int cell = g.cell_index(cx, cy);
    if (mesh.tags[cell] == CellTag::Inactive)
        throw GeometryError("point evaluation in an inactive cell");
    return cell;
}
} // namespace

Vec2 evaluate_velocity(const MeshSnapshot& mesh, const Vector& u_nodal, const Point& p) {
    const int cell = locate_active_cell(mesh, p);
    const Point ll = mesh.grid.cell_lower_left(cell);
    const auto val = q2::values((p.x - ll.x) / mesh.grid.h, (p.y - ll.y) / mesh.grid.h);
    const int dv = mesh.n_velocity_dofs();
    Vec2 u{0.0, 0.0};
    for (int a = 0; a < 9; ++a) {
        const int dof = mesh.nodes.v.index[mesh.grid.cell_vnode(cell, a)];
        u.x += u_nodal[dof] * val[a];
        u.y += u_nodal[dv + dof] * val[a];
    }
    return u;
}

double evaluate_pressure(const MeshSnapshot& mesh, const Vector& p_nodal, const Point& p) {
    const int cell = locate_active_cell(mesh, p);
    const Point ll = mesh.grid.cell_lower_left(cell);
    const auto val = q1::values((p.x - ll.x) / mesh.grid.h, (p.y - ll.y) / mesh.grid.h);
    double out = 0.0;
    for (int a = 0; a < 4; ++a)
        out += p_nodal[mesh.nodes.p.index[mesh.grid.cell_pnode(cell, a)]] * val[a];
    return out;
}

double pressure_mean(const AssemblyCache& cache, const Vector& p_nodal) {
    const auto& m = *cache.mesh;
    double integral = 0.0, area = 0.0;
    for (const auto& p : cache.volume) {
        double v = 0.0;
        const auto pdofs = cell_pdofs(m, p.cell);
        for (int a = 0; a < 4; ++a) v += p_nodal[pdofs[a]] * p.p_val[a];
        integral += p.w * v;
        area += p.w;
    }
    return integral / area;
}

} // namespace ns2d::fem
