#include <gtest/gtest.h>

#include "shrinker/assembler.hpp"

using namespace shrinker;

TEST(UnbalanceMap, Examples)
{
    Vec3 p(1, 0, 0.2);
    for (double b : {-0.09, 0.03, 0.05}) EXPECT_EQ(unbalance_map(b, p), p);
    Vec3 q = unbalance_map(0.05, Vec3(0, 0, 2));
    EXPECT_NEAR(q.x(), 2 * std::sin(0.05), 1e-15);
    EXPECT_NEAR(q.y(), 0, 1e-15);
    EXPECT_NEAR(q.z(), 2 * std::cos(0.05), 1e-15);
    for (Vec3 r : {Vec3(0.3, 1, 0.7), Vec3(-2, 0.5, 3), Vec3(0.1, 0.2, -0.6)}) EXPECT_EQ(unbalance_map(0, r), r);
}

TEST(UnbalanceMap, CommutesWithHalfTurnAndIsRigidOnCones)
{
    const double b = 0.07;
    for (Vec3 p : {Vec3(0.4, 0.3, 0.9), Vec3(-0.2, 1.1, 1.7), Vec3(0.7, -0.5, 0.6)}) {
        Vec3 h(p.x(), -p.y(), -p.z());
        Vec3 a = unbalance_map(b, h), c = unbalance_map(b, p);
        EXPECT_NEAR((a - Vec3(c.x(), -c.y(), -c.z())).norm(), 0, 1e-15);
    }
    // Norm preserved (rotation about the y-axis) everywhere.
    for (Vec3 p : {Vec3(0.4, 0.3, 0.9), Vec3(1.0, 0.2, 1.2)})
        EXPECT_NEAR(unbalance_map(b, p).norm(), p.norm(), 1e-14);
}

TEST(WrapMap, Examples)
{
    const double tau = kSqrt2 / 8, R = 9.0;
    EXPECT_NEAR((wrap_map(R, tau, Vec3::Zero()) - Vec3(R, 0, 0)).norm(), 0, 1e-14);
    Vec3 q = wrap_map(R, tau, Vec3(0, kSqrt2 / tau * kPi / 2, 0));
    EXPECT_NEAR((q - Vec3(0, R, 0)).norm(), 0, 1e-13);
    EXPECT_THROW(wrap_map(0, tau, Vec3::Zero()), DomainError);
}

TEST(WrapMap, ConformalAtTheSeam)
{
    const double tau = kSqrt2 / 16, d = 1e-6;
    for (double R : {kSqrt2 / tau, 1.35 / tau}) {
        Vec3 dx = (wrap_map(R, tau, Vec3(d, 0, 0)) - wrap_map(R, tau, Vec3(-d, 0, 0))) / (2 * d);
        Vec3 dy = (wrap_map(R, tau, Vec3(0, d, 0)) - wrap_map(R, tau, Vec3(0, -d, 0))) / (2 * d);
        Vec3 dz = (wrap_map(R, tau, Vec3(0, 0, d)) - wrap_map(R, tau, Vec3(0, 0, -d))) / (2 * d);
        EXPECT_NEAR(dx.norm(), 1, 1e-8);
        EXPECT_NEAR(dz.norm(), 1, 1e-8);
        // |d/dy| = R tau / sqrt2: unit exactly when R = sqrt2 / tau.
        EXPECT_NEAR(dy.norm(), R * tau / kSqrt2, 1e-8);
        EXPECT_NEAR(dx.dot(dy), 0, 1e-8);
    }
}

TEST(FitCapAndRadius, BalancedCapApproachesSphere)
{
    double prev = 1e9;
    for (int m : {8, 16, 32}) {
        double tau = kSqrt2 / m;
        CapFit f = fit_cap_and_radius(0, tau, 1.0);
        std::cout << "m=" << m << " c=" << f.c << " R_tilde=" << f.R_tilde << " |c-sqrt2|=" << std::abs(f.c - kSqrt2)
                  << " rounds=" << f.rounds << "\n";
        EXPECT_LT(f.position_mismatch, 1e-10);
        EXPECT_LT(f.angle_mismatch, 1e-10);
        EXPECT_NEAR(f.theta_cross, kPi, 1e-10);
        EXPECT_EQ(f.beta, 0.0);
        EXPECT_LT(std::abs(f.c - kSqrt2), prev);
        prev = std::abs(f.c - kSqrt2);
    }
}

TEST(FitCapAndRadius, UnbalancedMatchesPivot)
{
    const int m = 8;
    const double tau = kSqrt2 / m, a = 1.0;
    for (double b : {-0.01, 0.005, 0.01}) {
        CapFit f = fit_cap_and_radius(b, tau, a);
        EXPECT_LT(f.position_mismatch, 1e-10);
        EXPECT_LT(f.angle_mismatch, 1e-10);
        EXPECT_GE(f.R_tilde, 1.3);
        EXPECT_LE(f.R_tilde, 1.5);
        double R = f.R_tilde / tau;
        EXPECT_NEAR(std::tan(f.beta), std::tan(b) * std::exp(a * std::tan(b) / R), 1e-12);
    }
}

namespace {

ConstructionParams fitted(int m, double b)
{
    ConstructionParams p;
    p.m = m;
    p.b = b;
    apply_cap_fit(p);
    return p;
}

} // namespace

TEST(KappaMap, StartsOnPivotCircleAndIsConformal)
{
    for (double b : {0.0, 0.01}) {
        ConstructionParams p = fitted(8, b);
        KappaProfile k = kappa_profile(p);
        double tau = p.tau();
        for (double y : {0.0, 0.7, -1.4}) {
            Vec3 q = kappa_point(k, 0, y);
            double r0 = p.R_tilde * std::exp(p.a * tau * std::tan(b) / p.R_tilde) / tau;
            double phi = tau * y / kSqrt2;
            EXPECT_NEAR((q - Vec3(r0 * std::cos(phi), r0 * std::sin(phi), p.a)).norm(), 0, 1e-12);
        }
        const double d = 1e-4;
        double worst = 0;
        for (double s = 0.5; s < p.s_max() - 0.5; s += 0.37)
            for (double y : {0.0, 0.9}) {
                Vec3 ds = (kappa_point(k, s + d, y) - kappa_point(k, s - d, y)) / (2 * d);
                Vec3 dy = (kappa_point(k, s, y + d) - kappa_point(k, s, y - d)) / (2 * d);
                double rho = k.at(s)[1] / kSqrt2;
                worst = std::max({worst, std::abs(ds.norm() - rho), std::abs(dy.norm() - rho), std::abs(ds.dot(dy))});
            }
        EXPECT_LT(worst, 1e-6);
    }
}

TEST(KappaMap, BalancedPivotFollowsTheCap)
{
    ConstructionParams p = fitted(16, 0);
    KappaProfile k = kappa_profile(p);
    CapFit f = fit_cap_and_radius(0, p.tau(), p.a);
    CapProfile cap = integrate_geodesic(f.c, f.t_cross, 1e-12);
    double worst = 0;
    for (double s = 0; s <= p.s_max(); s += 0.5) {
        auto st = k.at(s);
        // Arclength from the pivot back towards the axis.
        GeodesicState g = cap.at(f.t_cross - st[3]);
        worst = std::max({worst, std::abs(g.z - st[0]), std::abs(g.r - st[1])});
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(WingEmbedding, RegionsOfTheBlend)
{
    ConstructionParams p = fitted(8, 0.01);
    KappaProfile k = kappa_profile(p);
    for (double y : {-1.2, 0.0, 0.4, kPi / 2}) {
        Vec3 at0 = wing_embedding(p, k, 0, y);
        Vec3 direct = wrap_map(p.R(), p.tau(), unbalance_map(p.b, top_wing(0, y, p.a)));
        EXPECT_NEAR((at0 - direct).norm(), 0, 1e-12);
        for (double s = 1.0; s <= p.s_max(); s += 0.31) {
            Vec3 q = wing_embedding(p, k, s, y);
            double expect = std::abs(wing_cutoff(p, s) * sigma(s, y, p.a));
            EXPECT_NEAR((q - kappa_point(k, s, y)).norm(), expect, 1e-12);
            if (s >= 4 * p.delta_s / p.tau()) {
                EXPECT_EQ(q, kappa_point(k, s, y));
            }
        }
    }
    EXPECT_THROW(wing_embedding(p, k, p.s_max() + 1, 0), DomainError);
}

#include <set>

#include "shrinker/surface.hpp"

namespace {

struct Built {
    ConstructionParams p;
    SurfaceMesh mesh;
};

const Built& built(int m)
{
    static std::map<int, Built> cache;
    auto it = cache.find(m);
    if (it == cache.end()) {
        Built b{fitted(m, 0), {}};
        b.mesh = assemble_initial_surface(b.p);
        it = cache.emplace(m, std::move(b)).first;
    }
    return it->second;
}

int euler_characteristic(const SurfaceMesh& M)
{
    std::set<std::pair<int, int>> edges;
    for (const auto& f : M.F)
        for (int k = 0; k < 3; ++k) edges.insert(std::minmax(f[k], f[(k + 1) % 3]));
    return static_cast<int>(M.V.size()) - static_cast<int>(edges.size()) + static_cast<int>(M.F.size());
}

bool vertex_set_invariant(const SurfaceMesh& M, const Mat3& A, double tol)
{
    std::vector<Vec3> all = M.V;
    for (const auto& v : M.V) all.push_back(A * v);
    auto w = weld_map(all, tol);
    for (std::size_t i = M.V.size(); i < all.size(); ++i)
        if (w[i] >= static_cast<int>(M.V.size())) return false;
    return true;
}

} // namespace

TEST(AssembleInitialSurface, ClosedOrientedWithExpectedTopology)
{
    for (int m : {8, 16}) {
        const SurfaceMesh& M = built(m).mesh;
        auto t = check_topology(M);
        EXPECT_TRUE(t.manifold);
        EXPECT_TRUE(t.oriented);
        // Only the outer rim is open.
        for (int v : t.boundary_vertices) EXPECT_TRUE(M.is_rim(v));
        EXPECT_EQ(static_cast<int>(t.boundary_vertices.size()), 4 * m * built(m).p.n_y());
        // m-fold cover of the four-ended quotient plus two caps and the disk.
        EXPECT_EQ(euler_characteristic(M), 3 - 2 * m);
        EXPECT_EQ(M.region.size(), M.V.size());
        EXPECT_EQ(M.s.size(), M.V.size());
        EXPECT_FALSE(M.params_json.empty());
    }
}

TEST(AssembleInitialSurface, InvariantUnderSymmetries)
{
    const SurfaceMesh& M = built(8).mesh;
    const int m = 8;
    Mat3 H = Vec3(1, -1, -1).asDiagonal();
    double al = kPi / (2 * m);
    Mat3 ra = Eigen::AngleAxisd(al, Vec3::UnitZ()).toRotationMatrix();
    Mat3 S = ra * Mat3(Vec3(1, -1, 1).asDiagonal()) * ra.transpose();
    Mat3 Rm = Eigen::AngleAxisd(2 * kPi / m, Vec3::UnitZ()).toRotationMatrix();
    for (const Mat3& A : {H, S, Rm}) EXPECT_TRUE(vertex_set_invariant(M, A, 1e-12));
    // A non-symmetry is detected.
    Mat3 half = Eigen::AngleAxisd(kPi / m, Vec3::UnitZ()).toRotationMatrix();
    EXPECT_FALSE(vertex_set_invariant(M, half, 1e-12));
}

TEST(AssembleInitialSurface, UnbalancedSurfaceKeepsConnectivity)
{
    const Built& ref = built(8);
    ConstructionParams p = fitted(8, 0.01);
    SurfaceMesh M = assemble_initial_surface(p, make_layout(p));
    ASSERT_EQ(M.V.size(), ref.mesh.V.size());
    EXPECT_EQ(M.F, ref.mesh.F);
    EXPECT_EQ(M.region, ref.mesh.region);
    double moved = 0;
    for (std::size_t i = 0; i < M.V.size(); ++i) moved = std::max(moved, (M.V[i] - ref.mesh.V[i]).norm());
    EXPECT_GT(moved, 1e-4);
    EXPECT_LT(moved, 0.5);
    auto t = check_topology(M);
    EXPECT_TRUE(t.manifold && t.oriented);
}

TEST(AssembleInitialSurface, RegionsAndWingCoordinate)
{
    const Built& B = built(8);
    const SurfaceMesh& M = B.mesh;
    std::map<Region, int> count;
    for (auto r : M.region) ++count[r];
    for (int r = 0; r <= static_cast<int>(Region::plane); ++r) EXPECT_GT(count[static_cast<Region>(r)], 0) << r;
    // s is continuous across edges: off the core, jumps are at most one grid step.
    double smax = B.p.s_max(), worst = 0;
    for (const auto& f : M.F)
        for (int k = 0; k < 3; ++k) {
            int u = f[k], w = f[(k + 1) % 3];
            if (M.region[u] == Region::core || M.region[w] == Region::core) continue;
            worst = std::max(worst, std::abs(M.s[u] - M.s[w]));
        }
    EXPECT_LE(worst, B.p.h_s() + 1e-12);
    for (std::size_t v = 0; v < M.V.size(); ++v) {
        if (!on_sigma(M.region[v])) {
            EXPECT_EQ(M.s[v], smax);
        }
        if (M.region[v] == Region::core) {
            EXPECT_LE(M.s[v], 1e-12);
        }
    }
}

TEST(AssembleInitialSurface, ConvergesToSphereAndPlane)
{
    double prev = 1e9;
    for (int m : {8, 16, 32}) {
        const SurfaceMesh& M = built(m).mesh;
        double worst = 0;
        for (const auto& v : M.V) {
            double r = std::hypot(v.x(), v.y());
            if (std::hypot(r - kSqrt2, v.z()) < 0.5) continue;
            worst = std::max(worst, std::min(std::abs(v.norm() - kSqrt2), std::abs(v.z())));
        }
        std::cout << "m=" << m << " distance to sphere and plane: " << worst << "\n";
        EXPECT_LT(worst, prev);
        prev = worst;
    }
}

TEST(AssembleInitialSurface, SeamRescalesToScherk)
{
    double prev = 1e9;
    for (int m : {8, 16, 32}) {
        const Built& B = built(m);
        const SurfaceMesh& M = B.mesh;
        double worst = 0;
        for (std::size_t v = 0; v < M.V.size(); ++v) {
            if (M.region[v] != Region::core || M.element[v] != 0) continue;
            Vec3 q = M.V[v] / B.p.tau() - Vec3(B.p.R(), 0, 0);
            Vec3 g = implicit_gradient(q);
            worst = std::max(worst, std::abs(implicit_value(q.x(), q.y(), q.z())) / g.norm());
        }
        std::cout << "m=" << m << " seam distance to Scherk: " << worst << "\n";
        EXPECT_LT(worst, prev);
        prev = worst;
    }
}
