#include <gtest/gtest.h>

#include "shrinker/wfield.hpp"

using namespace shrinker;

namespace {

struct FlatPiece {
    ConstructionParams p;
    FundamentalPatch P;
};

const FlatPiece& flat_piece()
{
    static FlatPiece S = [] {
        FlatPiece s;
        s.p.m = 8;
        apply_cap_fit(s.p);
        s.P = build_fundamental_patch(s.p, make_layout(s.p));
        return s;
    }();
    return S;
}

bool in_identity_region(const Vec3& q) { return std::abs(q.z()) < std::abs(q.x()) / 2; }

} // namespace

TEST(Balancing, BalancedPeriodIsZero)
{
    const FlatPiece& S = flat_piece();
    BalancingResult r = balancing_check(flat_scherk_mesh(S.P, 0.0).mesh, -kPi);
    ASSERT_EQ(r.wing_directions.size(), 4u);
    EXPECT_NEAR(r.wing_sum, 0.0, 1e-12);
    EXPECT_NEAR(r.integral, 0.0, 0.05);
}

TEST(Balancing, WingSumAndMonotoneIntegral)
{
    const FlatPiece& S = flat_piece();
    std::vector<double> I;
    for (double b : {-0.02, 0.0, 0.02}) {
        BalancingResult r = balancing_check(flat_scherk_mesh(S.P, b).mesh, -kPi);
        EXPECT_NEAR(r.wing_sum, 4 * kPi * std::sin(b), 1e-9);
        I.push_back(r.integral);
    }
    EXPECT_LT(I[0], I[1]);
    EXPECT_LT(I[1], I[2]);
}

TEST(WField, VanishesWhereTheUnbalancingIsTheIdentity)
{
    const FlatPiece& S = flat_piece();
    FlatFamily F = flat_scherk_mesh(S.P, 0.0);
    MeshAdjacency adj(F.mesh);
    std::vector<double> w = flat_w(S.P, 0.0, 1e-3);
    int checked = 0;
    for (std::size_t v = 0; v < S.P.V.size(); ++v) {
        int g = F.patch_to_mesh[v];
        if (g < 0) continue;
        bool inside = true;
        for (int q : adj.ring2(g)) inside = inside && in_identity_region(F.mesh.V[q]);
        if (!inside || !in_identity_region(F.mesh.V[g])) continue;
        EXPECT_EQ(w[v], 0.0);
        ++checked;
    }
    EXPECT_GT(checked, 20);
}

TEST(WField, CentralDifferenceIsSecondOrder)
{
    const FlatPiece& S = flat_piece();
    std::vector<double> w1 = flat_w(S.P, 0.0, 1e-2), w2 = flat_w(S.P, 0.0, 5e-3), w3 = flat_w(S.P, 0.0, 2.5e-3);
    double d1 = 0, d2 = 0;
    for (std::size_t v = 0; v < w1.size(); ++v) {
        if (!std::isfinite(w1[v])) continue;
        d1 = std::max(d1, std::abs(w1[v] - w2[v]));
        d2 = std::max(d2, std::abs(w2[v] - w3[v]));
    }
    EXPECT_GT(d1 / d2, 3.5);
    EXPECT_LT(d1 / d2, 4.5);
}

TEST(WField, PairingWithTranslationIsNonzero)
{
    const FlatPiece& S = flat_piece();
    FlatFamily F = flat_scherk_mesh(S.P, 0.0);
    MeshAdjacency adj(F.mesh);
    MeshField w = w_field(flat_scherk_mesh(S.P, -1e-4).mesh, flat_scherk_mesh(S.P, 1e-4).mesh, 1e-4);
    std::vector<double> g(F.mesh.V.size());
    for (std::size_t v = 0; v < g.size(); ++v)
        g[v] = w[v] * vertex_frame(F.mesh, adj, F.mesh.V, static_cast<int>(v)).normal.x();
    double pairing = integrate_faces(F.mesh, g, [](const Vec3& c) { return c.y() >= -kPi && c.y() < kPi; });
    EXPECT_GT(pairing, 1.0);
}

TEST(WField, SpreadIsSymmetric)
{
    const FlatPiece& S = flat_piece();
    SurfaceMesh M = assemble_initial_surface(S.p);
    MeshField w = sigma_w(M, S.p, make_layout(S.p));
    EXPECT_LT(symmetry_project(M, w).deviation, 1e-12);
    double mx = 0;
    for (std::size_t v = 0; v < M.V.size(); ++v) {
        if (!on_sigma(M.region[v])) {
            EXPECT_EQ(w[v], 0.0);
        }
        mx = std::max(mx, std::abs(w[v]));
    }
    EXPECT_GT(mx, 1.0);
}
