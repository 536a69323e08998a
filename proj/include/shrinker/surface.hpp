#pragma once

// The initial surface: one fundamental patch (wings, core, cap, disk and plane
// sectors) meshed in the conformal (s, y) chart, replicated by the symmetry
// group and welded.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "assembler.hpp"
#include "mesh.hpp"

namespace shrinker {

/// Combinatorial layout. Depends on m, a, delta_s and resolution only, so
/// meshes for different b share connectivity vertex by vertex.
struct SurfaceLayout {
    int n_y = 0;
    int n_s = 0;
    std::vector<int> core_segments;  // per row |i| = 0..n_y, even
    std::vector<int> cap_segments;   // per cap ring, ring 0 is the wing end
    std::vector<int> disk_segments;  // per disk ring, ring 0 is the wing end
    int plane_rings = 0;
};

namespace detail {

// Point of the Scherk slice sinh x sinh z = sin y (y >= 0) with z - x = u and x >= 0.
inline Vec3 core_slice_point(double u, double y)
{
    double target = std::sin(y);
    double lo = std::max(0.0, -u);
    if (target <= 0) return {lo, y, lo + u};
    double hi = lo + 1;
    while (std::sinh(hi) * std::sinh(hi + u) < target) hi = lo + 2 * (hi - lo);
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
        double mid = 0.5 * (lo + hi);
        (std::sinh(mid) * std::sinh(mid + u) < target ? lo : hi) = mid;
    }
    double x = 0.5 * (lo + hi);
    return {x, y, x + u};
}

inline double core_row_length(double y, double a)
{
    double u0 = a - sigma(0, y, a);
    double len = 0;
    Vec3 prev = core_slice_point(u0, y);
    for (int j = 1; j <= 400; ++j) {
        Vec3 q = core_slice_point(u0 - 2 * u0 * j / 400.0, y);
        len += (q - prev).norm();
        prev = q;
    }
    return len;
}

// Triangulate the strip between polylines A and B whose endpoints correspond,
// merging by parameter fraction.
inline void zipper(const std::vector<int>& A, const std::vector<double>& fa, const std::vector<int>& B,
                   const std::vector<double>& fb, std::vector<Tri>& out)
{
    std::size_t i = 0, j = 0;
    while (i + 1 < A.size() || j + 1 < B.size()) {
        bool advance_a = j + 1 >= B.size() || (i + 1 < A.size() && fa[i + 1] <= fb[j + 1] + 1e-12);
        if (advance_a) {
            out.push_back({A[i], A[i + 1], B[j]});
            ++i;
        } else {
            out.push_back({A[i], B[j + 1], B[j]});
            ++j;
        }
    }
}

inline std::vector<double> uniform_fractions(std::size_t n)
{
    std::vector<double> f(n);
    for (std::size_t k = 0; k < n; ++k) f[k] = n == 1 ? 0.0 : static_cast<double>(k) / (n - 1);
    return f;
}

inline void zip_uniform(const std::vector<int>& A, const std::vector<int>& B, std::vector<Tri>& out)
{
    zipper(A, uniform_fractions(A.size()), B, uniform_fractions(B.size()), out);
}

// Make triangle windings consistent by flood fill across shared edges.
inline void orient_consistently(std::vector<Tri>& F)
{
    std::map<std::pair<int, int>, std::vector<int>> edge_faces;
    for (std::size_t f = 0; f < F.size(); ++f)
        for (int k = 0; k < 3; ++k) {
            int a = F[f][k], b = F[f][(k + 1) % 3];
            edge_faces[{std::min(a, b), std::max(a, b)}].push_back(static_cast<int>(f));
        }
    std::vector<char> done(F.size(), 0);
    auto has_directed = [&](int f, int a, int b) {
        for (int k = 0; k < 3; ++k)
            if (F[f][k] == a && F[f][(k + 1) % 3] == b) return true;
        return false;
    };
    for (std::size_t seed = 0; seed < F.size(); ++seed) {
        if (done[seed]) continue;
        done[seed] = 1;
        std::vector<int> stack{static_cast<int>(seed)};
        while (!stack.empty()) {
            int f = stack.back();
            stack.pop_back();
            for (int k = 0; k < 3; ++k) {
                int a = F[f][k], b = F[f][(k + 1) % 3];
                for (int g : edge_faces[{std::min(a, b), std::max(a, b)}]) {
                    if (g == f || done[g]) continue;
                    if (has_directed(g, a, b)) std::swap(F[g][1], F[g][2]);
                    done[g] = 1;
                    stack.push_back(g);
                }
            }
        }
    }
}

} // namespace detail

/// Layout from the balanced reference geometry at the same m and a.
inline SurfaceLayout make_layout(const ConstructionParams& params)
{
    ConstructionParams p = params;
    p.b = 0;
    apply_cap_fit(p);
    SurfaceLayout L;
    L.n_y = p.n_y();
    L.n_s = p.n_s();
    const double h = p.resolution, tau = p.tau(), hs = p.h_s();
    for (int i = 0; i <= L.n_y; ++i) {
        double len = detail::core_row_length(p.y_at(i), p.a);
        L.core_segments.push_back(std::max(2, 2 * static_cast<int>(std::lround(len / (2 * h)))));
    }
    // Cap: rings uniform in arclength with the wing's end spacing.
    KappaProfile k = kappa_profile(p);
    auto end = k.at(p.s_max());
    auto cross = first_descending_crossing(p.c, tau * p.a, 1e-12);
    if (!cross) throw MeshError("make_layout: reference cap does not reach the pivot line");
    double t_w = cross->t - end[3];
    double spacing = tau * hs * end[1] / kSqrt2;
    int rings = std::max(2, static_cast<int>(std::lround(t_w / spacing)));
    CapProfile cap = integrate_geodesic(p.c, t_w, 1e-12);
    int prev = 2 * L.n_y;
    for (int r = 0; r < rings; ++r) {
        double rr = r == 0 ? end[1] : cap.at(t_w * (1 - static_cast<double>(r) / rings)).r;
        int n = std::clamp(static_cast<int>(std::lround(2 * L.n_y * rr / end[1])), 1, prev);
        L.cap_segments.push_back(r == 0 ? 2 * L.n_y : n);
        prev = L.cap_segments.back();
    }
    // Disk: uniform radial rings with the inner wing's end spacing.
    int disk = std::max(2, static_cast<int>(std::lround(p.R_tilde / (tau * hs))));
    for (int r = 0; r < disk; ++r)
        L.disk_segments.push_back(
            std::clamp(static_cast<int>(std::lround(L.n_y * (1 - static_cast<double>(r) / disk))), 1, L.n_y));
    // Plane: log-polar rings continuing the outer wing.
    double r_out = p.R_tilde * std::exp(tau * (p.s_max() + p.a) / p.R_tilde);
    double span = std::log(std::max(p.rho_max() / r_out, 1.0 + 1e-9));
    L.plane_rings = std::max(2, static_cast<int>(std::lround(span * p.R_tilde / (tau * hs))));
    return L;
}

/// Fundamental patch in small-scale coordinates.
struct FundamentalPatch {
    std::vector<Vec3> V;
    std::vector<Region> region;
    std::vector<double> s;
    std::vector<Vec3> flat;  // undeformed Scherk point (large scale), NaN off the desingularizing piece
    std::vector<Tri> F;
    std::vector<std::array<int, 2>> rim_prev;
    int pole = -1;

    int add(const Vec3& p, Region r, double sv, const Vec3& fl)
    {
        V.push_back(p);
        region.push_back(r);
        s.push_back(sv);
        flat.push_back(fl);
        rim_prev.push_back({-1, -1});
        return static_cast<int>(V.size()) - 1;
    }
};

inline FundamentalPatch build_fundamental_patch(const ConstructionParams& p, const SurfaceLayout& L)
{
    const double tau = p.tau(), a = p.a, R = p.R();
    const int ny = L.n_y, ns = L.n_s;
    if (ny != p.n_y() || ns != p.n_s()) throw MeshError("build_fundamental_patch: layout does not match params");
    if (a < 0.9) throw DomainError("build_fundamental_patch: a must be at least 0.9");
    const Vec3 none = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
    KappaProfile kap = kappa_profile(p);
    FundamentalPatch P;
    auto wrapped = [&](const Vec3& q) -> Vec3 { return tau * wrap_map(R, tau, unbalance_map(p.b, q)); };

    // Wing grids: T[k][i + ny] (i in [-ny, ny]), O[k][i] (i in [0, ny]), I[k][i + ny] (i in [-ny, 0]).
    std::vector<std::vector<int>> T(ns + 1), O(ns + 1), I(ns + 1);
    for (int k = 0; k <= ns; ++k) {
        double s = p.s_at(k);
        for (int i = -ny; i <= ny; ++i) {
            double y = p.y_at(i);
            T[k].push_back(P.add(tau * wing_embedding(p, kap, s, y), Region::wing_top, s, top_wing(s, y, a)));
        }
        for (int i = 0; i <= ny; ++i) {
            double y = p.y_at(i);
            O[k].push_back(P.add(tau * flat_wing_embedding(p, 1, s, y), Region::wing_outer, s, outer_wing(s, y, a)));
        }
        for (int i = -ny; i <= 0; ++i) {
            double y = p.y_at(i);
            I[k].push_back(P.add(tau * flat_wing_embedding(p, -1, s, y), Region::wing_inner, s, inner_wing(s, y, a)));
        }
    }
    for (int k = 0; k < ns; ++k) {
        detail::zip_uniform(T[k], T[k + 1], P.F);
        detail::zip_uniform(O[k], O[k + 1], P.F);
        detail::zip_uniform(I[k], I[k + 1], P.F);
    }

    // Core rows from the top ring to the outer (y > 0) or inner (y < 0) ring.
    auto core_vertex = [&](const Vec3& fl) {
        double sv = std::max(std::abs(fl.x()), std::abs(fl.z())) - a;
        return P.add(wrapped(fl), Region::core, sv, fl);
    };
    std::vector<std::vector<int>> rows_out(ny + 1), rows_in(ny + 1);
    for (int i = 0; i <= ny; ++i) {
        int n = L.core_segments[i];
        double y = p.y_at(i), u0 = a - sigma(0, y, a);
        auto& ro = rows_out[i];
        auto& ri = rows_in[i];
        ro.push_back(T[0][i + ny]);
        ri.push_back(T[0][-i + ny]);
        for (int j = 1; j < n; ++j) {
            Vec3 q = detail::core_slice_point(u0 - 2 * u0 * j / n, y);
            if (i == 0 && 2 * j <= n) {
                // Shared z-axis segment and the origin.
                int v = core_vertex(Vec3(0, 0, q.z()));
                ro.push_back(v);
                ri.push_back(v);
                continue;
            }
            ro.push_back(core_vertex(q));
            ri.push_back(core_vertex(Vec3(-q.x(), -y, q.z())));
        }
        ro.push_back(O[0][i]);
        ri.push_back(I[0][ny - i]);
    }
    for (int i = 0; i < ny; ++i) {
        detail::zip_uniform(rows_out[i], rows_out[i + 1], P.F);
        detail::zip_uniform(rows_in[i], rows_in[i + 1], P.F);
    }

    // Cap rings along the cap profile, ending at the pole.
    {
        auto end = kap.at(p.s_max());
        auto cross = first_descending_crossing(p.c, tau * a, 1e-12);
        if (!cross) throw MeshError("build_fundamental_patch: cap does not reach the pivot line");
        double t_w = cross->t - end[3];
        int rings = static_cast<int>(L.cap_segments.size());
        ProfileOptions po;
        po.delta_c = p.delta_c;
        for (int r = 1; r < rings; ++r) po.output_times.push_back(t_w * (1 - static_cast<double>(r) / rings));
        std::sort(po.output_times.begin(), po.output_times.end());
        CapProfile cap = integrate_geodesic(p.c, t_w, 1e-12, po);
        std::vector<int> prev = T[ns];
        for (int r = 1; r < rings; ++r) {
            GeodesicState g = cap.at(t_w * (1 - static_cast<double>(r) / rings));
            int n = L.cap_segments[r];
            std::vector<int> ring;
            for (int j = 0; j <= n; ++j) {
                double phi = kPi / (2 * p.m) * (2.0 * j / n - 1);
                ring.push_back(P.add({g.r * std::cos(phi), g.r * std::sin(phi), g.z}, Region::cap_top, p.s_max(), none));
            }
            detail::zip_uniform(prev, ring, P.F);
            prev = ring;
        }
        P.pole = P.add({0, 0, p.c}, Region::cap_top, p.s_max(), none);
        detail::zip_uniform(prev, {P.pole}, P.F);
    }

    // Inner disk down to the centre.
    {
        const Vec3& e = P.V[I[ns][0]];
        double r_in = std::hypot(e.x(), e.y());
        int rings = static_cast<int>(L.disk_segments.size());
        std::vector<int> prev = I[ns];
        for (int r = 1; r < rings; ++r) {
            double rad = r_in * (1 - static_cast<double>(r) / rings);
            int n = L.disk_segments[r];
            std::vector<int> ring;
            for (int j = 0; j <= n; ++j) {
                double phi = -kPi / (2 * p.m) * (1 - static_cast<double>(j) / n);
                ring.push_back(P.add({rad * std::cos(phi), rad * std::sin(phi), 0}, Region::disk, p.s_max(), none));
            }
            detail::zip_uniform(prev, ring, P.F);
            prev = ring;
        }
        int centre = P.add(Vec3::Zero(), Region::disk, p.s_max(), none);
        detail::zip_uniform(prev, {centre}, P.F);
    }

    // Outer plane out to rho_max, log-polar in the radius.
    {
        const Vec3& e = P.V[O[ns][0]];
        double r_out = std::hypot(e.x(), e.y());
        int rings = L.plane_rings;
        std::vector<std::vector<int>> all{O[ns]};
        for (int r = 1; r <= rings; ++r) {
            double rad = r_out * std::pow(p.rho_max() / r_out, static_cast<double>(r) / rings);
            std::vector<int> ring;
            for (int j = 0; j <= ny; ++j) {
                double phi = tau * p.y_at(j) / kSqrt2;
                ring.push_back(P.add({rad * std::cos(phi), rad * std::sin(phi), 0}, Region::plane, p.s_max(), none));
            }
            detail::zip_uniform(all.back(), ring, P.F);
            all.push_back(ring);
        }
        for (int j = 0; j <= ny; ++j) P.rim_prev[all[rings][j]] = {all[rings - 1][j], all[rings - 2][j]};
    }

    detail::orient_consistently(P.F);
    // Normal at the top pole points down (into the sphere).
    Vec3 n = Vec3::Zero();
    for (const auto& f : P.F)
        if (f[0] == P.pole || f[1] == P.pole || f[2] == P.pole)
            n += (P.V[f[1]] - P.V[f[0]]).cross(P.V[f[2]] - P.V[f[0]]);
    if (n.z() > 0)
        for (auto& f : P.F) std::swap(f[1], f[2]);
    return P;
}

struct GroupElement {
    Mat3 A;
    Vec3 t = Vec3::Zero();
    int chi = 1;  // -1 when the sides of the surface are swapped
};

/// Rotations by 2 pi k / m, the reflection across the plane at angle pi/(2m)
/// and the half-turn about the x-axis.
inline std::vector<GroupElement> symmetry_group(int m)
{
    Mat3 H = Vec3(1, -1, -1).asDiagonal();
    double al = kPi / (2 * m);
    Mat3 rot_al = Eigen::AngleAxisd(al, Vec3::UnitZ()).toRotationMatrix();
    Mat3 S = rot_al * Mat3(Vec3(1, -1, 1).asDiagonal()) * rot_al.transpose();
    std::vector<GroupElement> g;
    for (int eta = 0; eta < 2; ++eta)
        for (int sg = 0; sg < 2; ++sg)
            for (int k = 0; k < m; ++k) {
                Mat3 A = Eigen::AngleAxisd(2 * kPi * k / m, Vec3::UnitZ()).toRotationMatrix();
                if (sg) A = A * S;
                if (eta) A = A * H;
                g.push_back({A, Vec3::Zero(), eta ? -1 : 1});
            }
    return g;
}

struct Replicated {
    SurfaceMesh mesh;
    std::vector<int> global;  // (element * patch size + patch vertex) -> mesh vertex
};

/// Copy the patch (restricted to keep[v]) by every element, weld, and record
/// orbit data. Region tags swap top/bottom under side-swapping elements.
inline Replicated replicate(const FundamentalPatch& P, const std::vector<GroupElement>& G,
                            const std::vector<char>& keep, const std::vector<Vec3>& pos, double tol = 1e-9)
{
    const int n = static_cast<int>(pos.size());
    std::vector<Vec3> all;
    std::vector<int> src_vertex, src_elem;
    for (std::size_t g = 0; g < G.size(); ++g)
        for (int v = 0; v < n; ++v) {
            all.push_back(keep[v] ? Vec3(G[g].A * pos[v] + G[g].t) : Vec3::Constant(1e300));
            src_vertex.push_back(v);
            src_elem.push_back(static_cast<int>(g));
        }
    std::vector<int> wm = weld_map(all, tol);
    Replicated out;
    SurfaceMesh& M = out.mesh;
    int count = 0;
    for (int w : wm) count = std::max(count, w + 1);
    std::vector<int> first(count, -1);
    for (std::size_t q = 0; q < all.size(); ++q)
        if (keep[src_vertex[q]] && first[wm[q]] < 0) first[wm[q]] = static_cast<int>(q);
    // Compact to the kept vertices.
    std::vector<int> compact(count, -1);
    for (int c = 0; c < count; ++c)
        if (first[c] >= 0) {
            compact[c] = static_cast<int>(M.V.size());
            int q = first[c];
            int v = src_vertex[q], g = src_elem[q];
            M.V.push_back(all[q]);
            Region r = P.region[v];
            if (G[g].chi < 0) {
                if (r == Region::wing_top) r = Region::wing_bottom;
                else if (r == Region::cap_top) r = Region::cap_bottom;
            }
            M.region.push_back(r);
            M.s.push_back(P.s[v]);
            M.orbit.push_back(v);
            M.element.push_back(g);
        }
    out.global.assign(all.size(), -1);
    for (std::size_t q = 0; q < all.size(); ++q)
        if (keep[src_vertex[q]]) out.global[q] = compact[wm[q]];
    for (const auto& e : G) {
        M.group.push_back(e.A);
        M.group_chi.push_back(e.chi);
    }
    // Orbits are indexed by patch vertex; unused patch vertices map to -1.
    M.orbit_rep.assign(n, -1);
    M.orbit_odd.assign(n, 0);
    for (int v = 0; v < n; ++v)
        if (keep[v]) M.orbit_rep[v] = out.global[v];
    for (std::size_t q = 0; q < all.size(); ++q) {
        int v = src_vertex[q];
        if (keep[v] && G[src_elem[q]].chi < 0 && out.global[q] == M.orbit_rep[v]) M.orbit_odd[v] = 1;
    }
    for (std::size_t g = 0; g < G.size(); ++g) {
        bool flip = (G[g].A.determinant() < 0) != (G[g].chi < 0);
        for (const auto& f : P.F) {
            if (!keep[f[0]] || !keep[f[1]] || !keep[f[2]]) continue;
            Tri t;
            for (int k = 0; k < 3; ++k) t[k] = out.global[g * n + f[k]];
            if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
            if (flip) std::swap(t[1], t[2]);
            M.F.push_back(t);
        }
    }
    M.rim_prev.assign(M.V.size(), {-1, -1});
    for (std::size_t q = 0; q < all.size(); ++q) {
        int v = src_vertex[q];
        if (!keep[v] || P.rim_prev[v][0] < 0) continue;
        int g = src_elem[q];
        M.rim_prev[out.global[q]] = {out.global[g * n + P.rim_prev[v][0]], out.global[g * n + P.rim_prev[v][1]]};
    }
    return out;
}

/// The initial surface M(b, tau) for fitted params.
inline SurfaceMesh assemble_initial_surface(const ConstructionParams& p, const SurfaceLayout& L)
{
    p.validate();
    FundamentalPatch P = build_fundamental_patch(p, L);
    std::vector<char> keep(P.V.size(), 1);
    SurfaceMesh M = replicate(P, symmetry_group(p.m), keep, P.V).mesh;
    auto topo = check_topology(M);
    std::vector<int> loose;
    for (int v : topo.boundary_vertices)
        if (!M.is_rim(v)) loose.push_back(v);
    if (!topo.manifold || !topo.oriented || !loose.empty()) {
        std::vector<int> items = loose;
        items.insert(items.end(), topo.bad_edges.begin(), topo.bad_edges.end());
        throw MeshError("assemble_initial_surface: stitching failed (unmatched or non-manifold vertices)", items);
    }
    M.params_json = to_json(p).dump();
    return M;
}

inline SurfaceMesh assemble_initial_surface(const ConstructionParams& p)
{
    return assemble_initial_surface(p, make_layout(p));
}

/// The patch and its copies under the twelve elements that touch it. Orbits
/// whose vertex and 1-ring keep all their faces are complete; local quantities
/// there agree with the full surface. Other orbits get orbit_rep = -1.
struct PatchNeighbourhood {
    SurfaceMesh mesh;
    int complete = 0;
};

inline PatchNeighbourhood assemble_patch_neighbourhood(const ConstructionParams& p, const SurfaceLayout& L)
{
    p.validate();
    FundamentalPatch P = build_fundamental_patch(p, L);
    std::vector<GroupElement> all = symmetry_group(p.m), G;
    for (int eta = 0; eta < 2; ++eta)
        for (int sg = 0; sg < 2; ++sg)
            for (int k : {0, 1, p.m - 1}) G.push_back(all[(eta * 2 + sg) * p.m + k]);
    std::vector<char> keep(P.V.size(), 1);
    PatchNeighbourhood out;
    SurfaceMesh& M = out.mesh;
    M = replicate(P, G, keep, P.V).mesh;
    auto topo = check_topology(M);
    std::vector<char> open(M.V.size(), 0);
    for (int v : topo.boundary_vertices)
        if (!M.is_rim(v)) open[v] = 1;
    auto nb = vertex_neighbors(M);
    for (int& r : M.orbit_rep) {
        if (r < 0) continue;
        bool ok = !open[r];
        for (int q : nb[r]) ok = ok && !open[q];
        if (ok) ++out.complete;
        else r = -1;
    }
    M.params_json = to_json(p).dump();
    return out;
}

inline PatchNeighbourhood assemble_patch_neighbourhood(const ConstructionParams& p)
{
    return assemble_patch_neighbourhood(p, make_layout(p));
}

/// Flat (unwrapped) unbalanced Scherk surface meshed with the desingularizing
/// part of the patch: `periods` periods in y, large scale, wing rows up to s_cut.
struct FlatFamily {
    SurfaceMesh mesh;
    std::vector<int> patch_to_mesh;  // middle-period identity copy, -1 off the piece
};

inline FlatFamily flat_scherk_mesh(const FundamentalPatch& P, double b, int periods = 3,
                                   double s_cut = std::numeric_limits<double>::infinity())
{
    if (periods < 1 || periods % 2 == 0) throw DomainError("flat_scherk_mesh: periods must be odd and positive");
    Mat3 H = Vec3(1, -1, -1).asDiagonal();
    Mat3 S = Vec3(1, -1, 1).asDiagonal();
    std::vector<GroupElement> G;
    std::vector<int> shifts{0};
    for (int j = 1; j <= periods / 2; ++j) {
        shifts.push_back(j);
        shifts.push_back(-j);
    }
    for (int j : shifts)
        for (int eta = 0; eta < 2; ++eta)
            for (int sg = 0; sg < 2; ++sg) {
                GroupElement e;
                e.A = Mat3::Identity();
                if (sg) e.A = S;
                if (eta) e.A = e.A * H;
                e.t = Vec3(0, 2 * kPi * j + (sg ? kPi : 0.0), 0);
                e.chi = eta ? -1 : 1;
                G.push_back(e);
            }
    std::vector<char> keep(P.V.size());
    std::vector<Vec3> pos(P.V.size(), Vec3::Zero());
    for (std::size_t v = 0; v < P.V.size(); ++v) {
        keep[v] = !std::isnan(P.flat[v].x()) && P.s[v] <= s_cut;
        if (keep[v]) pos[v] = unbalance_map(b, P.flat[v]);
    }
    Replicated r = replicate(P, G, keep, pos);
    FlatFamily out;
    out.mesh = std::move(r.mesh);
    out.patch_to_mesh.assign(P.V.size(), -1);
    for (std::size_t v = 0; v < P.V.size(); ++v)
        if (keep[v]) out.patch_to_mesh[v] = r.global[v];
    return out;
}

} // namespace shrinker
