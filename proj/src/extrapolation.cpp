#include "ns2d/extrapolation.hpp"

#include <algorithm>
#include <cmath>

#include "ns2d/shape_functions.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ns2d::extrap {

namespace {

struct LatticeDims {
    int w = 0, h = 0;
};

LatticeDims dims(const CartesianGrid& grid, Lattice lat) {
    if (lat == Lattice::Velocity) return {2 * grid.nx + 1, 2 * grid.ny + 1};
    return {grid.nx + 1, grid.ny + 1};
}

/// Chebyshev-ball dilation of a 0/1 mask on the lattice (radius-1 passes).
std::vector<unsigned char> dilate(const std::vector<unsigned char>& mask, const LatticeDims& d,
                                  int radius) {
    std::vector<unsigned char> cur = mask;
    std::vector<unsigned char> out(mask.size());
    for (int r = 0; r < radius; ++r) {
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                bool hit = false;
                for (int dy = -1; dy <= 1 && !hit; ++dy)
                    for (int dx = -1; dx <= 1 && !hit; ++dx) {
                        const int xx = x + dx, yy = y + dy;
                        if (xx >= 0 && xx < d.w && yy >= 0 && yy < d.h && cur[yy * d.w + xx])
                            hit = true;
                    }
                out[y * d.w + x] = hit ? 1 : 0;
            }
        cur.swap(out);
    }
    return cur;
}

std::vector<unsigned char> complement(const std::vector<unsigned char>& mask) {
    std::vector<unsigned char> out(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 0 : 1;
    return out;
}

/// Ring count of a band width: lattice-graph distance from the active set.
/// phi / |grad phi| is unreliable away from Gamma (it collapses near interior
/// critical points of phi), so band membership is measured in dilation rings.
int band_rings(const BandField& band) {
    const double spacing = lattice_spacing(band.grid, band.lattice);
    return std::max(1, static_cast<int>(std::ceil(band.band_width / spacing - 1e-9)));
}

} // namespace

int lattice_node_count(const CartesianGrid& grid, Lattice lat) {
    const auto d = dims(grid, lat);
    return d.w * d.h;
}

double lattice_spacing(const CartesianGrid& grid, Lattice lat) {
    return lat == Lattice::Velocity ? 0.5 * grid.h : grid.h;
}

Point lattice_coord(const CartesianGrid& grid, Lattice lat, int node) {
    return lat == Lattice::Velocity ? grid.vnode_coord(node) : grid.pnode_coord(node);
}

BandField build_band(const MeshSnapshot& mesh, const LevelSetField& ls, Lattice lat,
                     double band_width) {
    BandField band;
    band.lattice = lat;
    band.grid = mesh.grid;
    band.band_width = band_width;
    const int n = lattice_node_count(mesh.grid, lat);
    band.chi.resize(n);
    band.band_mask.assign(n, 0);
    band.normal.resize(n);
    band.distance.resize(n);

    const auto& family = lat == Lattice::Velocity ? mesh.nodes.v : mesh.nodes.p;
    for (int i = 0; i < n; ++i) {
        band.chi[i] = family.index[i] < 0 ? 1 : 0;
        const Point x = lattice_coord(mesh.grid, lat, i);
        const double phi = ls(x, mesh.time);
        const Vec2 g = ls.grad(x, mesh.time);
        const double gn = g.norm();
        band.normal[i] = gn > 1e-10 ? g * (1.0 / gn) : Vec2{0.0, 0.0};
        band.distance[i] = phi / std::max(gn, 1e-12);
    }
    // Ring reach filters out interior nodes whose phi/|grad phi| estimate
    // collapses (e.g. near critical points of phi); the metric estimate trims
    // the Chebyshev corners the dilation over-reaches. Near Gamma, where the
    // band lives, both are reliable.
    const auto reach = dilate(complement(band.chi), dims(mesh.grid, lat), band_rings(band));
    for (int i = 0; i < n; ++i)
        if (band.chi[i] && reach[i] && band.normal[i].norm() > 0.5 &&
            std::abs(band.distance[i]) <= band_width) {
            band.band_mask[i] = 1;
            ++band.band_count;
        }
    return band;
}

GradientOperators build_gradient_operators(const CartesianGrid& grid, Lattice lat) {
    const int n = lattice_node_count(grid, lat);
    const int nl = lat == Lattice::Velocity ? 9 : 4;
    std::vector<Eigen::Triplet<double>> tx, ty;
    Vector lumped = Vector::Zero(n);
    const auto rule = gauss3_unit();
    for (int cell = 0; cell < grid.n_cells(); ++cell) {
        int nodes[9];
        for (int a = 0; a < nl; ++a)
            nodes[a] = lat == Lattice::Velocity ? grid.cell_vnode(cell, a)
                                                : grid.cell_pnode(cell, a);
        for (const auto& [xi, wxi] : rule)
            for (const auto& [eta, weta] : rule) {
                const double w = wxi * weta * grid.h * grid.h;
                double val[9];
                Vec2 grad[9];
                if (lat == Lattice::Velocity) {
                    const auto v = q2::values(xi, eta);
                    const auto g = q2::gradients(xi, eta);
                    for (int a = 0; a < 9; ++a) val[a] = v[a], grad[a] = g[a] * (1.0 / grid.h);
                } else {
                    const auto v = q1::values(xi, eta);
                    const auto g = q1::gradients(xi, eta);
                    for (int a = 0; a < 4; ++a) val[a] = v[a], grad[a] = g[a] * (1.0 / grid.h);
                }
                for (int r = 0; r < nl; ++r) {
                    lumped[nodes[r]] += w * val[r];
                    for (int c = 0; c < nl; ++c) {
                        tx.emplace_back(nodes[r], nodes[c], w * val[r] * grad[c].x);
                        ty.emplace_back(nodes[r], nodes[c], w * val[r] * grad[c].y);
                    }
                }
            }
    }
    GradientOperators ops;
    ops.gx.resize(n, n);
    ops.gy.resize(n, n);
    ops.gx.setFromTriplets(tx.begin(), tx.end());
    ops.gy.setFromTriplets(ty.begin(), ty.end());
    for (int i = 0; i < n; ++i) {
        ops.gx.row(i) /= lumped[i];
        ops.gy.row(i) /= lumped[i];
    }
    ops.gx.makeCompressed();
    ops.gy.makeCompressed();
    return ops;
}

DirectionalDerivatives directional_derivatives(const Vector& u_full, const BandField& band,
                                               const GradientOperators& ops) {
    DirectionalDerivatives d;
    const Vector gx = ops.gx * u_full, gy = ops.gy * u_full;
    const int n = static_cast<int>(u_full.size());
    d.u_n.resize(n);
    for (int i = 0; i < n; ++i)
        d.u_n[i] = band.normal[i].x * gx[i] + band.normal[i].y * gy[i];
    const Vector gnx = ops.gx * d.u_n, gny = ops.gy * d.u_n;
    d.u_nn.resize(n);
    for (int i = 0; i < n; ++i)
        d.u_nn[i] = band.normal[i].x * gnx[i] + band.normal[i].y * gny[i];
    return d;
}

namespace {

/// Upstream-biased directional derivative n . grad as a sparse operator with
/// nonzero rows only on the given nodes. Per axis: second-order one-sided
/// difference toward -n (where valid data lives), degrading to first order or
/// the opposite side only against the lattice edge.
Eigen::SparseMatrix<double, Eigen::RowMajor> build_upwind_operator(
    const BandField& band, const std::vector<int>& rows) {
    const auto d = dims(band.grid, band.lattice);
    const double delta = lattice_spacing(band.grid, band.lattice);
    const int n = d.w * d.h;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(rows.size() * 6);

    // A chi neighbor whose normal opposes ours sits across a characteristic
    // shock; the second-order stencil's overshoot weight is anti-diffusive
    // there (opposing pairs form an indefinite block), so drop to first order
    // unless both upstream nodes are frozen data or aligned.
    auto reliable = [&](int j, const Vec2& ni) {
        return !band.chi[j] || band.normal[j].dot(ni) > 0.1;
    };

    for (const int i : rows) {
        const int ix = i % d.w, iy = i / d.w;
        for (int axis = 0; axis < 2; ++axis) {
            const double nc = axis == 0 ? band.normal[i].x : band.normal[i].y;
            if (nc == 0.0) continue;
            const int stride = axis == 0 ? 1 : d.w;
            const int pos = axis == 0 ? ix : iy;
            const int len = axis == 0 ? d.w : d.h;
            int up = nc > 0.0 ? -1 : 1;
            if (pos + up < 0 || pos + up >= len) up = -up; // lattice edge
            const int j1 = i + up * stride, j2 = i + 2 * up * stride;
            const bool second = pos + 2 * up >= 0 && pos + 2 * up < len &&
                                reliable(j1, band.normal[i]) && reliable(j2, band.normal[i]);
            if (second) {
                const double c = -up * nc / (2.0 * delta);
                trip.emplace_back(i, i, 3.0 * c);
                trip.emplace_back(i, j1, -4.0 * c);
                trip.emplace_back(i, j2, c);
            } else if (pos + up >= 0 && pos + up < len) {
                const double c = -up * nc / delta;
                trip.emplace_back(i, i, c);
                trip.emplace_back(i, j1, -c);
            }
        }
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> dn(n, n);
    dn.setFromTriplets(trip.begin(), trip.end());
    dn.makeCompressed();
    return dn;
}

} // namespace

Vector transport_to_steady(const Vector& field, const Vector* source, const BandField& band,
                           const TransportOptions& opts, TransportReport* report) {
    const int n = static_cast<int>(field.size());
    const double spacing = lattice_spacing(band.grid, band.lattice);
    const double dtau = opts.dtau > 0.0 ? opts.dtau : 0.25 * spacing;
    const int cap = opts.max_iterations > 0
                        ? opts.max_iterations
                        : static_cast<int>(std::ceil(band.band_width / dtau)) * 5;

    // Update set: chi = 1 nodes within band + 3-ring buffer with a usable
    // normal. The buffer keeps band-node stencils clear of stale outer
    // values; only band nodes are written back.
    const auto reach = dilate(complement(band.chi), dims(band.grid, band.lattice),
                              band_rings(band) + 3);
    std::vector<int> update;
    update.reserve(band.band_count * 2);
    for (int i = 0; i < n; ++i)
        if (band.chi[i] && reach[i] && band.normal[i].norm() > 0.5) update.push_back(i);

    double ref = 0.0;
    for (int i = 0; i < n; ++i)
        if (!band.chi[i]) ref = std::max(ref, std::abs(field[i]));
    const double tol = opts.tol_scale * (1.0 + ref);

    const auto dn = build_upwind_operator(band, update);
    auto apply_row = [&dn](int i, const Vector& v) {
        double sum = 0.0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it2(dn, i); it2; ++it2)
            sum += it2.value() * v[it2.col()];
        return sum;
    };

    Vector work = field;
    Vector resid = Vector::Zero(n);
    const int nu = static_cast<int>(update.size());
    TransportReport rep;
    for (int it = 0; it < cap && nu > 0; ++it) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int k = 0; k < nu; ++k) {
            const int i = update[k];
            resid[i] = apply_row(i, work) - (source ? (*source)[i] : 0.0);
        }
        // Taylor (Lax-Wendroff) correction: forward Euler alone is weakly
        // unstable with this spatial operator; the extra term is zero at the
        // fixed point, so it cannot shift the converged solution.
        double max_update = 0.0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(max : max_update)
#endif
        for (int k = 0; k < nu; ++k) {
            const int i = update[k];
            const double delta = dtau * (resid[i] - 0.5 * dtau * apply_row(i, resid));
            work[i] -= delta;
            if (band.band_mask[i]) max_update = std::max(max_update, std::abs(delta));
        }
        rep.iterations = it + 1;
        rep.final_update = max_update;
        if (max_update <= tol) break;
    }
    rep.converged = rep.final_update <= 10.0 * tol;

    Vector out = field;
    for (int i = 0; i < n; ++i)
        if (band.band_mask[i]) out[i] = work[i];
    if (report) *report = rep;
    return out;
}

Vector extrapolate_quadratic(const Vector& u_full, const BandField& band,
                             const GradientOperators& ops, const TransportOptions& opts,
                             TransportReport* report) {
    const auto d = dims(band.grid, band.lattice);
    const double spacing = lattice_spacing(band.grid, band.lattice);
    const int radius = band.lattice == Lattice::Velocity ? 2 : 1;

    // Each derivative level is only reliable one stencil ring further inside
    // the active set (chi dilated by the projection radius); its transport
    // writes a correspondingly wider band so the next stage sees a valid
    // source everywhere it updates (band + buffer + the chi offset).
    auto level_band = [&](const std::vector<unsigned char>& chi, int rings) {
        BandField b = band;
        b.chi = chi;
        b.band_width = rings * spacing;
        b.band_count = 0;
        const auto reach = dilate(complement(chi), d, rings);
        for (std::size_t i = 0; i < chi.size(); ++i) {
            b.band_mask[i] = chi[i] && reach[i] && b.normal[i].norm() > 0.5 ? 1 : 0;
            if (b.band_mask[i]) ++b.band_count;
        }
        return b;
    };
    const auto chi1 = dilate(band.chi, d, radius);
    const auto chi2 = dilate(chi1, d, radius);
    const int rings = band_rings(band);
    const BandField band1 = level_band(chi1, rings + 3 + radius);
    const BandField band2 = level_band(chi2, rings + 6 + 2 * radius);

    const auto derivs = directional_derivatives(u_full, band, ops);
    TransportReport r1, r2, r3;
    const Vector u_nn = transport_to_steady(derivs.u_nn, nullptr, band2, opts, &r1);
    const Vector u_n = transport_to_steady(derivs.u_n, &u_nn, band1, opts, &r2);
    Vector out = transport_to_steady(u_full, &u_n, band, opts, &r3);
    if (report) {
        report->iterations = r1.iterations + r2.iterations + r3.iterations;
        report->final_update = r3.final_update;
        report->converged = r1.converged && r2.converged && r3.converged;
    }
    return out;
}

Vector to_lattice(const MeshSnapshot& mesh, Lattice lat, const Vector& active_values) {
    const auto& family = lat == Lattice::Velocity ? mesh.nodes.v : mesh.nodes.p;
    Vector full = Vector::Zero(lattice_node_count(mesh.grid, lat));
    for (int i = 0; i < family.count(); ++i) full[family.active[i]] = active_values[i];
    return full;
}

Vector from_lattice(const MeshSnapshot& mesh, Lattice lat, const Vector& lattice_values) {
    const auto& family = lat == Lattice::Velocity ? mesh.nodes.v : mesh.nodes.p;
    Vector active(family.count());
    for (int i = 0; i < family.count(); ++i) active[i] = lattice_values[family.active[i]];
    return active;
}

} // namespace ns2d::extrap
