#pragma once

#include <memory>
#include <vector>

#include "ns2d/geometry.hpp"
#include "ns2d/quadrature.hpp"

namespace ns2d {

/// Uniform Cartesian background grid of square cells.
struct CartesianGrid {
    double x_min = 0.0;
    double y_min = 0.0;
    double lx = 1.0;
    double ly = 1.0;
    int nx = 1;
    int ny = 1;
    double h = 1.0;

    static CartesianGrid make(double x_min, double y_min, double lx, double ly, int nx, int ny);

    int n_cells() const { return nx * ny; }
    int cell_index(int cx, int cy) const { return cy * nx + cx; }
    Point cell_lower_left(int cell) const {
        return {x_min + (cell % nx) * h, y_min + (cell / nx) * h};
    }

    // Q2 velocity lattice: (2nx+1) x (2ny+1) nodes spaced h/2.
    int n_vnodes() const { return (2 * nx + 1) * (2 * ny + 1); }
    int vnode_index(int ix, int iy) const { return iy * (2 * nx + 1) + ix; }
    Point vnode_coord(int node) const {
        const int w = 2 * nx + 1;
        return {x_min + (node % w) * 0.5 * h, y_min + (node / w) * 0.5 * h};
    }

    // Q1 pressure lattice: (nx+1) x (ny+1) nodes spaced h.
    int n_pnodes() const { return (nx + 1) * (ny + 1); }
    int pnode_index(int ix, int iy) const { return iy * (nx + 1) + ix; }
    Point pnode_coord(int node) const {
        const int w = nx + 1;
        return {x_min + (node % w) * h, y_min + (node / w) * h};
    }

    /// Lattice index of local Q2 node a (row-major 0..8) of a cell.
    int cell_vnode(int cell, int a) const {
        const int cx = cell % nx, cy = cell / nx;
        return vnode_index(2 * cx + a % 3, 2 * cy + a / 3);
    }
    /// Lattice index of local Q1 node a (row-major 0..3) of a cell.
    int cell_pnode(int cell, int a) const {
        const int cx = cell % nx, cy = cell / nx;
        return pnode_index(cx + a % 2, cy + a / 2);
    }
};

enum class CellTag : unsigned char { Inactive, Internal, Cut };

/// Active node bookkeeping for one lattice (velocity or pressure).
struct NodeFamily {
    std::vector<int> active;  // lattice indices, lexicographic
    std::vector<int> index;   // lattice -> dense active index, -1 if inactive
    std::vector<bool> ghost;  // per dense active index
    int count() const { return static_cast<int>(active.size()); }
};

struct NodeSets {
    NodeFamily v;
    NodeFamily p;
};

struct CutCellGeometry {
    BoundarySegment segment;                   // overall chord, endpoints on phi = 0
    std::vector<Point> fluid_polygon;          // CCW, starts at segment.a
    std::vector<QuadPoint> volume_quadrature;  // fluid polygon
    std::vector<QuadPoint> surface_quadrature; // refined interface polyline
    std::vector<Vec2> surface_normal;          // outward normal per quadrature point
};

enum class WallSide : unsigned char { Left, Right, Bottom, Top };

/// One cell edge lying on the box boundary, with its quadrature rule.
struct WallEdge {
    int cell = -1;
    WallSide side = WallSide::Left;
    Vec2 outward_normal;
    std::vector<QuadPoint> quadrature;
};

/// Immutable snapshot of the unfitted mesh at one time instant. Rebuilds on
/// moving domains produce new snapshots; time stepping holds two at once.
struct MeshSnapshot {
    CartesianGrid grid;
    double time = 0.0;
    double snap_threshold = 1e-2;

    std::vector<CellTag> tags;        // per cell
    std::vector<double> nodal_phi;    // snapped, on the velocity lattice
    NodeSets nodes;
    std::vector<int> active_cells;    // internal + cut, ascending
    std::vector<int> cut_of_cell;     // per cell: index into cut_geometry or -1
    std::vector<CutCellGeometry> cut_geometry;
    std::vector<WallEdge> wall_edges;
    double snap_perturbation = 0.0;   // max |phi change| applied by snapping

    int n_velocity_dofs() const { return nodes.v.count(); }
    int n_pressure_dofs() const { return nodes.p.count(); }
    int n_total_dofs() const { return 2 * nodes.v.count() + nodes.p.count(); }

    double active_area() const;
    double cut_boundary_length() const;
};

/// Snapping-back-to-grid: nodal values closer to the boundary than
/// threshold*h are pushed to the non-fluid side, relabeling borderline
/// internal nodes as ghost. The test is normalized by the nodal |grad phi|
/// so the tolerance is a geometric distance even when phi is not a signed
/// distance function (otherwise sliver cut cells survive wherever
/// |grad phi| >> 1). Returns the max perturbation applied, in phi units.
double snap_nodal_phi(std::vector<double>& nodal_phi, const CartesianGrid& grid,
                      const LevelSetField& ls, double t, double threshold);

/// Classify cells from snapped corner values. Throws on an empty domain.
std::vector<CellTag> classify_cells(const CartesianGrid& grid,
                                    const std::vector<double>& nodal_phi);

NodeSets build_node_sets(const CartesianGrid& grid, const std::vector<CellTag>& tags,
                         const std::vector<double>& nodal_phi);

CutCellGeometry build_cut_cell_geometry(const CartesianGrid& grid, int cell,
                                        const std::vector<double>& nodal_phi,
                                        const LevelSetField& ls, double t);

/// Per-cell 3-point Gauss rules on the four box walls (active cells only).
std::vector<WallEdge> fitted_boundary_quadrature(const CartesianGrid& grid,
                                                 const std::vector<CellTag>& tags);

/// Full pipeline: evaluate phi on the lattice, snap, classify, build node
/// sets, cut geometry and wall quadrature.
std::shared_ptr<const MeshSnapshot> build_mesh(const CartesianGrid& grid, const LevelSetField& ls,
                                               double t, double snap_threshold = 1e-2);

} // namespace ns2d
