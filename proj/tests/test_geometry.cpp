#include <gtest/gtest.h>

#include <sstream>

#include "shrinker/geometry.hpp"
#include "shrinker/surface.hpp"
#include "shrinker/reference_meshes.hpp"

using namespace shrinker;

namespace {

double sup_abs(const MeshField& f, const std::vector<char>& skip = {})
{
    double s = 0;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (skip.empty() || !skip[i]) s = std::max(s, std::abs(f[i]));
    return s;
}

} // namespace

TEST(VertexFrame, SphereOfRadiusSqrt2)
{
    std::vector<double> err, err_a;
    for (int level : {3, 4, 5}) {
        SurfaceMesh M = refmesh::icosphere(level, kSqrt2);
        MeshAdjacency adj(M);
        double eh = 0, ea = 0, en = 0;
        for (std::size_t v = 0; v < M.V.size(); ++v) {
            VertexFrame fr = vertex_frame(M, adj, M.V, static_cast<int>(v));
            eh = std::max(eh, std::abs(fr.H - kSqrt2));
            ea = std::max(ea, std::abs(fr.A2 - 1.0));
            en = std::max(en, (fr.normal + M.V[v] / kSqrt2).norm());
        }
        err.push_back(eh);
        err_a.push_back(ea);
        EXPECT_LT(en, 1e-3);
    }
    EXPECT_LT(err.back(), 3e-3);
    EXPECT_LT(err_a.back(), 4e-3);
    EXPECT_GT(err_a[1] / err_a[2], 3.0);
    // Second order: halving h divides the error by about 4.
    EXPECT_GT(err[1] / err[2], 3.0);
    EXPECT_GT(err[0] / err[1], 3.0);
}

TEST(VertexFrame, PlaneIsExact)
{
    SurfaceMesh M = refmesh::plane(12, 1.0);
    MeshAdjacency adj(M);
    auto bnd = boundary_flags(M);
    for (std::size_t v = 0; v < M.V.size(); ++v) {
        VertexFrame fr = vertex_frame(M, adj, M.V, static_cast<int>(v));
        EXPECT_EQ(fr.H, 0.0);
        EXPECT_EQ(fr.A2, 0.0);
        EXPECT_NEAR(std::abs(fr.normal.z()), 1.0, 1e-15);
    }
}

TEST(VertexFrame, UnitCylinder)
{
    std::vector<double> err;
    for (int n : {24, 48, 96}) {
        SurfaceMesh M = refmesh::cylinder(n, n / 4, 1.0, 0.5 * kPi);
        MeshAdjacency adj(M);
        auto bnd = boundary_flags(M);
        double e = 0;
        for (std::size_t v = 0; v < M.V.size(); ++v) {
            if (bnd[v] || std::abs(M.V[v].z()) > 1.0) continue;
            VertexFrame fr = vertex_frame(M, adj, M.V, static_cast<int>(v));
            e = std::max({e, std::abs(fr.H - 1), std::abs(fr.A2 - 1)});
        }
        err.push_back(e);
    }
    EXPECT_LT(err.back(), 1e-2);
    EXPECT_GT(err[0] / err[1], 3.0);
    EXPECT_GT(err[1] / err[2], 3.0);
}

TEST(VertexFrame, DegenerateNeighbourhoodIsReported)
{
    SurfaceMesh M;
    M.V = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    M.F = {{0, 1, 2}};
    try {
        vertex_frame(M, 0);
        FAIL();
    } catch (const MeshError& e) {
        ASSERT_EQ(e.items.size(), 1u);
        EXPECT_EQ(e.items[0], 0);
    }
}

TEST(Residual, TrivialShrinkers)
{
    std::vector<double> sup;
    for (int level : {3, 4, 5}) sup.push_back(sup_abs(residual(refmesh::icosphere(level, kSqrt2))));
    EXPECT_LT(sup.back(), 3e-3);
    EXPECT_GT(sup[1] / sup[2], 3.0);
    EXPECT_EQ(sup_abs(residual(refmesh::plane(10, 2.0))), 0.0);
    // A sphere of the wrong radius is not a shrinker.
    EXPECT_GT(sup_abs(residual(refmesh::icosphere(4, 1.2))), 0.2);
    // Large scale is tau times small scale.
    SurfaceMesh S = refmesh::icosphere(3, 1.3);
    MeshField a = residual(S), b = residual(S, Scale::large, 0.25);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], 0.25 * a[i], 1e-15);
}

TEST(SymmetryProject, Averaging)
{
    ConstructionParams p;
    p.m = 8;
    apply_cap_fit(p);
    SurfaceMesh M = assemble_initial_surface(p);
    MeshField E = residual(M);
    // The residual is built orbit by orbit, so it is already symmetric.
    auto pr = symmetry_project(M, E);
    EXPECT_LT(pr.deviation, 1e-9);
    // Odd orbits carry zero.
    for (std::size_t v = 0; v < M.V.size(); ++v)
        if (M.orbit_odd[M.orbit[v]]) {
            EXPECT_EQ(E[v], 0.0);
        }
    // Spike at one vertex of a free orbit.
    int v = -1;
    for (std::size_t i = 0; i < M.V.size() && v < 0; ++i)
        if (!M.orbit_odd[M.orbit[i]] && M.region[i] == Region::core) v = static_cast<int>(i);
    int size = 0;
    for (std::size_t i = 0; i < M.V.size(); ++i) size += M.orbit[i] == M.orbit[v];
    EXPECT_EQ(size, 4 * p.m);
    MeshField spiked = E;
    const double eps = 1e-3;
    spiked[v] += eps;
    auto ps = symmetry_project(M, spiked);
    EXPECT_NEAR(ps.deviation, eps * (1 - 1.0 / size), 1e-12);
    MeshField zero;
    zero.values.assign(M.V.size(), 0.0);
    EXPECT_EQ(symmetry_project(M, zero).deviation, 0.0);
}

TEST(FieldCsv, Format)
{
    MeshField f;
    f.values = {0.5, -1.25};
    std::ostringstream os;
    write_field_csv(os, f);
    EXPECT_EQ(os.str(), "vertex_id,value\n0,0.5\n1,-1.25\n");
}
