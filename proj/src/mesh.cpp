#include "ns2d/mesh.hpp"

#include <algorithm>
#include <cmath>

namespace ns2d {

CartesianGrid CartesianGrid::make(double x_min, double y_min, double lx, double ly, int nx,
                                  int ny) {
    if (nx <= 0 || ny <= 0) throw ConfigError("grid: cell counts must be positive");
    const double hx = lx / nx, hy = ly / ny;
    if (std::abs(hx - hy) > 1e-12 * std::max(hx, hy))
        throw ConfigError("grid: cells must be square (Lx/Nx == Ly/Ny)");
    return {x_min, y_min, lx, ly, nx, ny, hx};
}

double snap_nodal_phi(std::vector<double>& nodal_phi, const CartesianGrid& grid,
                      const LevelSetField& ls, double t, double threshold) {
    double max_perturbation = 0.0;
    for (int n = 0; n < grid.n_vnodes(); ++n) {
        double& phi = nodal_phi[n];
        const Vec2 g = ls.grad(grid.vnode_coord(n), t);
        const double mag = std::max(std::hypot(g.x, g.y), 1e-12);
        const double delta = threshold * grid.h * mag;
        if (std::abs(phi) < delta) {
            max_perturbation = std::max(max_perturbation, std::abs(delta - phi));
            phi = delta;
        }
    }
    return max_perturbation;
}

std::vector<CellTag> classify_cells(const CartesianGrid& grid,
                                    const std::vector<double>& nodal_phi) {
    std::vector<CellTag> tags(grid.n_cells());
    int n_active = 0;
    for (int cell = 0; cell < grid.n_cells(); ++cell) {
        // corner values live at the even lattice positions (local Q2 nodes 0,2,6,8)
        int inside = 0;
        for (int a : {0, 2, 6, 8})
            if (nodal_phi[grid.cell_vnode(cell, a)] < 0.0) ++inside;
        tags[cell] = inside == 4 ? CellTag::Internal
                     : inside == 0 ? CellTag::Inactive
                                   : CellTag::Cut;
        if (tags[cell] != CellTag::Inactive) ++n_active;
    }
    if (n_active == 0) throw GeometryError("classify_cells: empty domain (no active cells)");
    return tags;
}

NodeSets build_node_sets(const CartesianGrid& grid, const std::vector<CellTag>& tags,
                         const std::vector<double>& nodal_phi) {
    NodeSets sets;
    std::vector<bool> v_active(grid.n_vnodes(), false), p_active(grid.n_pnodes(), false);
    for (int cell = 0; cell < grid.n_cells(); ++cell) {
        if (tags[cell] == CellTag::Inactive) continue;
        for (int a = 0; a < 9; ++a) v_active[grid.cell_vnode(cell, a)] = true;
        for (int a = 0; a < 4; ++a) p_active[grid.cell_pnode(cell, a)] = true;
    }

    sets.v.index.assign(grid.n_vnodes(), -1);
    for (int n = 0; n < grid.n_vnodes(); ++n) {
        if (!v_active[n]) continue;
        sets.v.index[n] = static_cast<int>(sets.v.active.size());
        sets.v.active.push_back(n);
        sets.v.ghost.push_back(nodal_phi[n] >= 0.0);
    }

    sets.p.index.assign(grid.n_pnodes(), -1);
    for (int n = 0; n < grid.n_pnodes(); ++n) {
        if (!p_active[n]) continue;
        // pressure nodes coincide with even velocity-lattice nodes
        const int ix = n % (grid.nx + 1), iy = n / (grid.nx + 1);
        const double phi = nodal_phi[grid.vnode_index(2 * ix, 2 * iy)];
        sets.p.index[n] = static_cast<int>(sets.p.active.size());
        sets.p.active.push_back(n);
        sets.p.ghost.push_back(phi >= 0.0);
    }
    return sets;
}

CutCellGeometry build_cut_cell_geometry(const CartesianGrid& grid, int cell,
                                        const std::vector<double>& nodal_phi,
                                        const LevelSetField& ls, double t) {
    const Point ll = grid.cell_lower_left(cell);
    const double h = grid.h;
    const Point corners[4] = {ll, {ll.x + h, ll.y}, {ll.x + h, ll.y + h}, {ll.x, ll.y + h}};
    const int corner_local[4] = {0, 2, 8, 6}; // CCW cycle on the Q2 lattice
    double phis[4];
    for (int i = 0; i < 4; ++i) phis[i] = nodal_phi[grid.cell_vnode(cell, corner_local[i])];

    const CellCut cut = intersect_cell(phis, corners);

    // Fluid polygon: walk the corner cycle, keeping inside corners and
    // inserting edge crossings. The walk is CCW, so the polygon is too.
    std::vector<Point> poly;
    for (int i = 0; i < 4; ++i) {
        if (phis[i] < 0.0) poly.push_back(corners[i]);
        const int j = (i + 1) % 4;
        if (phis[i] * phis[j] < 0.0) {
            const double theta = phis[i] / (phis[i] - phis[j]);
            poly.push_back({corners[i].x + theta * (corners[j].x - corners[i].x),
                            corners[i].y + theta * (corners[j].y - corners[i].y)});
        }
    }
    // rotate so the polygon starts at the segment endpoint A
    auto at_a = std::min_element(poly.begin(), poly.end(), [&](const Point& p, const Point& q) {
        return (p - cut.a).norm() < (q - cut.a).norm();
    });
    std::rotate(poly.begin(), at_a, poly.end());

    // Refine the chord into a polyline tracking phi = 0: bisect each piece
    // and project the midpoint onto the zero set until the sagitta is
    // negligible. A single chord misassigns O(kappa h^3) of area per cell,
    // which dominates the continuity residual on high-curvature cuts.
    std::vector<Point> arc{cut.a, cut.b};
    if ((cut.b - cut.a).norm() > 1e-12) {
        for (int level = 0; level < 3; ++level) {
            std::vector<Point> fine;
            fine.reserve(2 * arc.size());
            bool split = false;
            for (std::size_t i = 0; i + 1 < arc.size(); ++i) {
                fine.push_back(arc[i]);
                const Point mid = {0.5 * (arc[i].x + arc[i + 1].x),
                                   0.5 * (arc[i].y + arc[i + 1].y)};
                const Point z = project_to_boundary(ls, mid, t, h).z;
                // near-tangent cuts can project outside the cell; keep the
                // chord there so the polygon stays within the cell box
                const bool in_cell = z.x >= ll.x && z.x <= ll.x + h && z.y >= ll.y &&
                                     z.y <= ll.y + h;
                if (in_cell && (z - mid).norm() > 1e-4 * h) {
                    fine.push_back(z);
                    split = true;
                }
            }
            fine.push_back(arc.back());
            arc.swap(fine);
            if (!split) break;
        }
    }

    // splice the refined polyline into the polygon in place of the chord edge
    if (arc.size() > 2) {
        const double tol = 1e-9 * h;
        if ((poly[1] - cut.b).norm() < tol) {
            poly.insert(poly.begin() + 1, arc.begin() + 1, arc.end() - 1);
        } else if ((poly.back() - cut.b).norm() < tol) {
            poly.insert(poly.end(), arc.rbegin() + 1, arc.rend() - 1);
        }
    }

    CutCellGeometry geom;
    geom.fluid_polygon = std::move(poly);

    const Point mid = {0.5 * (cut.a.x + cut.b.x), 0.5 * (cut.a.y + cut.b.y)};
    Vec2 n = boundary_normal(ls, mid, t);
    // sign check: the level-set normal must point away from the fluid polygon
    const Vec2 tangent = cut.b - cut.a;
    Vec2 perp{tangent.y, -tangent.x};
    double centroid_side = 0.0;
    for (const auto& p : geom.fluid_polygon) centroid_side += perp.dot(p - mid);
    if (centroid_side > 0.0) perp = {-perp.x, -perp.y}; // make perp point off the fluid side
    const bool flip = n.dot(perp) < 0.0;
    if (flip) n = {-n.x, -n.y};

    geom.segment = {cut.a, cut.b, n, cell};
    geom.volume_quadrature = polygon_degree4(geom.fluid_polygon);
    for (std::size_t i = 0; i + 1 < arc.size(); ++i)
        for (const auto& qp : segment_gauss3(arc[i], arc[i + 1]))
            geom.surface_quadrature.push_back(qp);
    geom.surface_normal.reserve(geom.surface_quadrature.size());
    for (const auto& qp : geom.surface_quadrature) {
        Vec2 nq = boundary_normal(ls, qp.p, t);
        if (flip) nq = {-nq.x, -nq.y};
        geom.surface_normal.push_back(nq);
    }
    return geom;
}

std::vector<WallEdge> fitted_boundary_quadrature(const CartesianGrid& grid,
                                                 const std::vector<CellTag>& tags) {
    std::vector<WallEdge> edges;
    const double h = grid.h;
    auto add = [&](int cell, WallSide side, Point a, Point b, Vec2 n) {
        if (tags[cell] == CellTag::Inactive) return;
        edges.push_back({cell, side, n, segment_gauss3(a, b)});
    };
    for (int cy = 0; cy < grid.ny; ++cy) {
        const Point l0 = grid.cell_lower_left(grid.cell_index(0, cy));
        add(grid.cell_index(0, cy), WallSide::Left, l0, {l0.x, l0.y + h}, {-1.0, 0.0});
        const Point r0 = grid.cell_lower_left(grid.cell_index(grid.nx - 1, cy));
        add(grid.cell_index(grid.nx - 1, cy), WallSide::Right, {r0.x + h, r0.y},
            {r0.x + h, r0.y + h}, {1.0, 0.0});
    }
    for (int cx = 0; cx < grid.nx; ++cx) {
        const Point b0 = grid.cell_lower_left(grid.cell_index(cx, 0));
        add(grid.cell_index(cx, 0), WallSide::Bottom, b0, {b0.x + h, b0.y}, {0.0, -1.0});
        const Point t0 = grid.cell_lower_left(grid.cell_index(cx, grid.ny - 1));
        add(grid.cell_index(cx, grid.ny - 1), WallSide::Top, {t0.x, t0.y + h},
            {t0.x + h, t0.y + h}, {0.0, 1.0});
    }
    return edges;
}

double MeshSnapshot::active_area() const {
    double area = 0.0;
    for (int cell : active_cells) {
        if (tags[cell] == CellTag::Internal)
            area += grid.h * grid.h;
        else
            area += polygon_area(cut_geometry[cut_of_cell[cell]].fluid_polygon);
    }
    return area;
}

double MeshSnapshot::cut_boundary_length() const {
    double len = 0.0;
    for (const auto& g : cut_geometry)
        for (const auto& qp : g.surface_quadrature) len += qp.w;
    return len;
}

std::shared_ptr<const MeshSnapshot> build_mesh(const CartesianGrid& grid, const LevelSetField& ls,
                                               double t, double snap_threshold) {
    auto mesh = std::make_shared<MeshSnapshot>();
    mesh->grid = grid;
    mesh->time = t;
    mesh->snap_threshold = snap_threshold;

    mesh->nodal_phi.resize(grid.n_vnodes());
    for (int n = 0; n < grid.n_vnodes(); ++n) mesh->nodal_phi[n] = ls.eval(grid.vnode_coord(n), t);
    mesh->snap_perturbation = snap_nodal_phi(mesh->nodal_phi, grid, ls, t, snap_threshold);

    mesh->tags = classify_cells(grid, mesh->nodal_phi);
    mesh->nodes = build_node_sets(grid, mesh->tags, mesh->nodal_phi);

    mesh->cut_of_cell.assign(grid.n_cells(), -1);
    for (int cell = 0; cell < grid.n_cells(); ++cell) {
        if (mesh->tags[cell] == CellTag::Inactive) continue;
        mesh->active_cells.push_back(cell);
        if (mesh->tags[cell] == CellTag::Cut) {
            mesh->cut_of_cell[cell] = static_cast<int>(mesh->cut_geometry.size());
            mesh->cut_geometry.push_back(
                build_cut_cell_geometry(grid, cell, mesh->nodal_phi, ls, t));
        }
    }
    mesh->wall_edges = fitted_boundary_quadrature(grid, mesh->tags);
    return mesh;
}

} // namespace ns2d
