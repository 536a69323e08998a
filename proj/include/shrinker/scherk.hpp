#pragma once

// The Scherk surface sin y = sinh x sinh z: exact wing graphs, the offset a,
// and a resolution-controlled triangulation of the saddle region.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "common.hpp"
#include "mesh.hpp"

namespace shrinker {

inline double implicit_value(double x, double y, double z) { return std::sin(y) - std::sinh(x) * std::sinh(z); }

inline Vec3 implicit_gradient(const Vec3& p)
{
    return {-std::cosh(p.x()) * std::sinh(p.z()), std::cos(p.y()), -std::sinh(p.x()) * std::cosh(p.z())};
}

/// Exact top-wing graph: (sigma, y, s + a) lies on the surface.
inline double sigma(double s, double y, double a)
{
    if (!(s + a > 0)) throw DomainError("sigma: requires s + a > 0");
    return std::asinh(std::sin(y) / std::sinh(s + a));
}

// The four wings in (s, y) coordinates. Inner and bottom follow from the
// rotation by pi about the y-axis and the z-axis symmetry of the surface.
inline Vec3 top_wing(double s, double y, double a) { return {sigma(s, y, a), y, s + a}; }
inline Vec3 bottom_wing(double s, double y, double a) { return {-sigma(s, y, a), y, -(s + a)}; }
inline Vec3 outer_wing(double s, double y, double a) { return {s + a, y, sigma(s, y, a)}; }
inline Vec3 inner_wing(double s, double y, double a) { return {-(s + a), y, -sigma(s, y, a)}; }

/// Discrete C^5 decay proxy: sup over s in [0, s_max], y in [0, pi/2]
/// of e^{s} max |D^k sigma| (|k| <= 5), centred differences with spacing h.
inline double sigma_decay_norm(double a, double h = 0.05, double s_max = 8.0)
{
    const int pad = 3;
    int ns = static_cast<int>(std::lround(s_max / h)) + 1;
    int ny = static_cast<int>(std::lround(kPi / 2 / h)) + 1;
    int NS = ns + 2 * pad, NY = ny + 2 * pad;
    std::vector<double> g(static_cast<std::size_t>(NS) * NY);
    auto at = [&](std::vector<double>& v, int i, int j) -> double& { return v[static_cast<std::size_t>(i) * NY + j]; };
    for (int i = 0; i < NS; ++i)
        for (int j = 0; j < NY; ++j) at(g, i, j) = sigma((i - pad) * h, (j - pad) * h, a);

    static const std::vector<std::vector<double>> stencil = {
        {0, 0, 0, 1, 0, 0, 0},           {0, 0, -0.5, 0, 0.5, 0, 0},     {0, 0, 1, -2, 1, 0, 0},
        {0, -0.5, 1, 0, -1, 0.5, 0},     {0, 1, -4, 6, -4, 1, 0},        {-0.5, 2, -2.5, 0, 2.5, -2, 0.5},
    };
    double worst = 0;
    for (int ks = 0; ks <= 5; ++ks) {
        std::vector<double> ds(g.size(), 0.0);
        for (int i = pad; i < NS - pad; ++i)
            for (int j = 0; j < NY; ++j) {
                double acc = 0;
                for (int q = 0; q < 7; ++q) acc += stencil[ks][q] * at(g, i + q - 3, j);
                at(ds, i, j) = acc / std::pow(h, ks);
            }
        for (int ky = 0; ky + ks <= 5; ++ky)
            for (int i = pad; i < NS - pad; ++i)
                for (int j = pad; j < NY - pad; ++j) {
                    double acc = 0;
                    for (int q = 0; q < 7; ++q) acc += stencil[ky][q] * at(ds, i, j + q - 3);
                    acc /= std::pow(h, ky);
                    worst = std::max(worst, std::exp((i - pad) * h) * std::abs(acc));
                }
    }
    return worst;
}

struct OffsetResult {
    double a = 0;
    double achieved = 0;
};

/// Smallest a on the grid 0.5 + 0.05 k (a <= 20) with sigma_decay_norm(a) <= epsilon.
inline OffsetResult determine_a(double epsilon)
{
    if (!(epsilon > 0 && epsilon <= 1e-3)) throw DomainError("determine_a: epsilon must lie in (0, 1e-3]");
    auto grid = [](int k) { return 0.5 + 0.05 * k; };
    int hi = static_cast<int>(std::lround((20.0 - 0.5) / 0.05));
    double nhi = sigma_decay_norm(grid(hi));
    if (nhi > epsilon) throw ConvergenceError("determine_a: no a <= 20 meets the bound", {nhi});
    int lo = 0;
    if (sigma_decay_norm(grid(lo)) <= epsilon) return {grid(lo), sigma_decay_norm(grid(lo))};
    // The norm decreases like e^{-a}; bisect on the grid index.
    while (hi - lo > 1) {
        int mid = (lo + hi) / 2;
        if (sigma_decay_norm(grid(mid)) <= epsilon)
            hi = mid;
        else
            lo = mid;
    }
    return {grid(hi), sigma_decay_norm(grid(hi))};
}

/// Newton projection along the gradient onto the zero set.
inline Vec3 project_to_scherk(Vec3 p, double tol = 1e-13)
{
    for (int it = 0; it < 60; ++it) {
        double f = implicit_value(p.x(), p.y(), p.z());
        if (std::abs(f) < tol) break;
        Vec3 g = implicit_gradient(p);
        p -= f * g / g.squaredNorm();
    }
    return p;
}

inline Region scherk_region(const Vec3& p, double a)
{
    if (std::abs(p.x()) <= a && std::abs(p.z()) <= a) return Region::core;
    if (p.z() > a) return Region::wing_top;
    if (p.z() < -a) return Region::wing_bottom;
    return p.x() > a ? Region::wing_outer : Region::wing_inner;
}

/// Surface-nets extraction of the zero set on |x|,|z| <= a + 1, |y| < pi,
/// followed by Newton projection. The node lattice is symmetric under
/// y -> pi - y and (y, z) -> (-y, -z), with x = 0, z = 0 and y = k pi avoided
/// as nodes.
inline SurfaceMesh extract_core(double resolution, double a)
{
    if (!(resolution > 0 && resolution <= 0.2)) throw DomainError("extract_core: resolution must lie in (0, 0.2]");
    const double X = a + 1;
    int nx = static_cast<int>(std::ceil(2 * X / resolution));
    if (nx % 2 == 0) ++nx;
    double hx = 2 * X / nx;
    // y nodes at (j + 1/2) pi / n: symmetric about 0 and pi/2 and never on the
    // lines y = k pi where the surface contains two crossing straight lines.
    int n = static_cast<int>(std::ceil(kPi / resolution));
    double hy = kPi / n;
    int ny = 2 * n - 1;
    auto xn = [&](int i) { return -X + i * hx; };
    auto yn = [&](int j) { return -kPi + (j + 0.5) * hy; };
    int NX = nx + 1, NY = ny + 1;
    auto nid = [&](int i, int j, int k) { return (static_cast<long>(i) * NY + j) * NX + k; };
    std::vector<double> val(static_cast<std::size_t>(NX) * NY * NX);
    for (int i = 0; i < NX; ++i)
        for (int j = 0; j < NY; ++j)
            for (int k = 0; k < NX; ++k) val[nid(i, j, k)] = implicit_value(xn(i), yn(j), xn(k));

    // One vertex per sign-changing cube.
    auto cid = [&](int i, int j, int k) { return (static_cast<long>(i) * ny + j) * nx + k; };
    std::vector<int> cube_vertex(static_cast<std::size_t>(nx) * ny * nx, -1);
    std::vector<std::array<int, 3>> vertex_cube;
    SurfaceMesh m;
    static const int corner[8][3] = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0},
                                     {0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
    static const int edges[12][2] = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3},
                                     {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            for (int k = 0; k < nx; ++k) {
                Vec3 sum = Vec3::Zero();
                int cnt = 0;
                for (const auto& e : edges) {
                    const int* c0 = corner[e[0]];
                    const int* c1 = corner[e[1]];
                    double f0 = val[nid(i + c0[0], j + c0[1], k + c0[2])];
                    double f1 = val[nid(i + c1[0], j + c1[1], k + c1[2])];
                    if ((f0 > 0) == (f1 > 0)) continue;
                    double t = f0 / (f0 - f1);
                    Vec3 p0(xn(i + c0[0]), yn(j + c0[1]), xn(k + c0[2]));
                    Vec3 p1(xn(i + c1[0]), yn(j + c1[1]), xn(k + c1[2]));
                    sum += p0 + t * (p1 - p0);
                    ++cnt;
                }
                if (cnt == 0) continue;
                cube_vertex[cid(i, j, k)] = static_cast<int>(m.V.size());
                m.V.push_back(project_to_scherk(sum / cnt));
                vertex_cube.push_back({i, j, k});
            }

    // One quad per sign-changing interior lattice edge.
    auto emit = [&](std::array<long, 4> cubes, bool flip) {
        std::array<int, 4> q;
        for (int t = 0; t < 4; ++t) {
            q[t] = cube_vertex[cubes[t]];
            if (q[t] < 0) throw MeshError("extract_core: inconsistent cube classification");
        }
        if (flip) std::swap(q[1], q[3]);
        double d02 = (m.V[q[0]] - m.V[q[2]]).norm(), d13 = (m.V[q[1]] - m.V[q[3]]).norm();
        if (d02 <= d13) {
            m.F.push_back({q[0], q[1], q[2]});
            m.F.push_back({q[0], q[2], q[3]});
        } else {
            m.F.push_back({q[0], q[1], q[3]});
            m.F.push_back({q[1], q[2], q[3]});
        }
    };
    for (int i = 0; i < NX; ++i)
        for (int j = 0; j < NY; ++j)
            for (int k = 0; k < NX; ++k) {
                double f0 = val[nid(i, j, k)];
                // x-directed edge: cubes around it vary in (j, k).
                if (i + 1 < NX && j > 0 && j < ny && k > 0 && k < nx) {
                    double f1 = val[nid(i + 1, j, k)];
                    if ((f0 > 0) != (f1 > 0))
                        emit({cid(i, j - 1, k - 1), cid(i, j, k - 1), cid(i, j, k), cid(i, j - 1, k)}, f0 > 0);
                }
                if (j + 1 < NY && i > 0 && i < nx && k > 0 && k < nx) {
                    double f1 = val[nid(i, j + 1, k)];
                    if ((f0 > 0) != (f1 > 0))
                        emit({cid(i - 1, j, k - 1), cid(i - 1, j, k), cid(i, j, k), cid(i, j, k - 1)}, f0 > 0);
                }
                if (k + 1 < NX && i > 0 && i < nx && j > 0 && j < ny) {
                    double f1 = val[nid(i, j, k + 1)];
                    if ((f0 > 0) != (f1 > 0))
                        emit({cid(i - 1, j - 1, k), cid(i, j - 1, k), cid(i, j, k), cid(i - 1, j, k)}, f0 > 0);
                }
            }

    auto topo = check_topology(m);
    if (!topo.manifold) {
        std::vector<int> cells;
        for (int v : topo.bad_edges) {
            auto c = vertex_cube[v];
            cells.push_back(static_cast<int>(cid(c[0], c[1], c[2])));
        }
        throw MeshError("extract_core: non-manifold extraction", cells);
    }
    m.region.resize(m.V.size());
    m.s.resize(m.V.size());
    for (std::size_t v = 0; v < m.V.size(); ++v) {
        m.region[v] = scherk_region(m.V[v], a);
        const Vec3& p = m.V[v];
        m.s[v] = std::max(std::abs(p.x()), std::abs(p.z())) - a;
    }
    return m;
}

} // namespace shrinker
