#pragma once

// Small analytic meshes: sphere, plane and cylinder.

#include <map>

#include "mesh.hpp"

namespace shrinker::refmesh {


/// Icosphere of the given radius; faces wound so the normal points inward.
inline SurfaceMesh icosphere(int levels, double radius)
{
    const double t = (1 + std::sqrt(5.0)) / 2;
    SurfaceMesh M;
    M.V = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    M.F = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
           {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
           {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int l = 0; l < levels; ++l) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            M.V.push_back((M.V[a] + M.V[b]) / 2);
            return mid[key] = static_cast<int>(M.V.size()) - 1;
        };
        std::vector<Tri> F;
        for (const auto& f : M.F) {
            int a = midpoint(f[0], f[1]), b = midpoint(f[1], f[2]), c = midpoint(f[2], f[0]);
            F.push_back({f[0], a, c});
            F.push_back({f[1], b, a});
            F.push_back({f[2], c, b});
            F.push_back({a, b, c});
        }
        M.F = F;
        for (auto& v : M.V) v = v.normalized();
    }
    for (auto& v : M.V) v *= radius;
    // Outward winding above; flip for the inward normal.
    for (auto& f : M.F) std::swap(f[1], f[2]);
    return M;
}

/// Triangulated grid over [-L, L]^2 at height 0 with n cells per side.
inline SurfaceMesh plane(int n, double L)
{
    SurfaceMesh M;
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) M.V.emplace_back(-L + 2 * L * i / n, -L + 2 * L * j / n, 0);
    auto id = [&](int i, int j) { return i * (n + 1) + j; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            M.F.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            M.F.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return M;
}

/// Closed-in-angle cylinder of radius r, height 2 Z, inward normal.
inline SurfaceMesh cylinder(int n_theta, int n_z, double r, double Z)
{
    SurfaceMesh M;
    for (int i = 0; i < n_theta; ++i)
        for (int j = 0; j <= n_z; ++j) {
            double th = 2 * M_PI * i / n_theta;
            M.V.emplace_back(r * std::cos(th), r * std::sin(th), -Z + 2 * Z * j / n_z);
        }
    auto id = [&](int i, int j) { return (i % n_theta) * (n_z + 1) + j; };
    for (int i = 0; i < n_theta; ++i)
        for (int j = 0; j < n_z; ++j) {
            M.F.push_back({id(i, j), id(i, j + 1), id(i + 1, j + 1)});
            M.F.push_back({id(i, j), id(i + 1, j + 1), id(i + 1, j)});
        }
    return M;
}

} // namespace shrinker::refmesh
