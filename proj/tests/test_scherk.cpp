#include <gtest/gtest.h>

#include <sstream>

#include "shrinker/cutoff.hpp"
#include "shrinker/scherk.hpp"

using namespace shrinker;

TEST(ImplicitValue, Examples)
{
    EXPECT_EQ(implicit_value(0, 0, 0), 0.0);
    double x = 0.7, z = std::asinh(1 / std::sinh(x));
    EXPECT_NEAR(implicit_value(x, kPi / 2, z), 0.0, 1e-15);
    EXPECT_NEAR(implicit_value(1, 0, 1), -1.3810978455418157, 1e-15);
}

TEST(Sigma, Examples)
{
    for (double s : {0.0, 0.5, 3.0}) EXPECT_EQ(sigma(s, 0, 1.2), 0.0);
    EXPECT_NEAR(sigma(0, kPi / 2, 1.3), std::asinh(1 / std::sinh(1.3)), 1e-15);
    EXPECT_THROW(sigma(-2, 0.3, 1.0), DomainError);
}

TEST(Sigma, WeightedDecayTowardsLimit)
{
    const double a = 1.0;
    double prev = 1e9;
    for (int i = 0; i <= 60; ++i) {
        double s = 1.0 + 0.25 * i;
        double v = std::exp(s) * std::abs(sigma(s, kPi / 2, a));
        EXPECT_LT(v, prev);
        prev = v;
    }
    EXPECT_NEAR(prev, 2 * std::exp(-a), 1e-6);
}

TEST(Sigma, WingsAreExactAndSymmetric)
{
    const double a = 1.0;
    double worst = 0;
    for (int i = 0; i <= 40; ++i)
        for (int j = -20; j <= 20; ++j) {
            double s = 0.2 * i, y = kPi * j / 20;
            for (Vec3 p : {top_wing(s, y, a), bottom_wing(s, y, a), outer_wing(s, y, a), inner_wing(s, y, a)})
                worst = std::max(worst, std::abs(implicit_value(p.x(), p.y(), p.z())));
            // Outer wing is the top wing with x and z swapped.
            Vec3 t = top_wing(s, y, a), o = outer_wing(s, y, a);
            EXPECT_EQ(t.x(), o.z());
            EXPECT_EQ(t.z(), o.x());
            EXPECT_NEAR(sigma(s, j * kPi, a), 0.0, 1e-14);
        }
    EXPECT_LT(worst, 1e-15);
}

TEST(Sigma, DecayNormStableUnderRefinement)
{
    for (double gamma : {0.5, 1.0}) {
        auto sup = [&](double h) {
            double w = 0;
            for (double s = 0; s <= 8; s += h)
                for (double y = 0; y <= kPi; y += h) w = std::max(w, std::exp(gamma * s) * std::abs(sigma(s, y, 1.0)));
            return w;
        };
        double coarse = sup(0.1), fine = sup(0.05);
        EXPECT_TRUE(std::isfinite(coarse));
        EXPECT_NEAR(fine, coarse, 1e-2 * coarse);
    }
}

TEST(DetermineA, BudgetIsMet)
{
    auto r = determine_a(1e-3);
    std::cout << "determine_a(1e-3) = " << r.a << " (achieved " << r.achieved << ")\n";
    EXPECT_LE(r.achieved, 1e-3);
    EXPECT_LE(sigma(0, kPi / 2, r.a), 1e-3);
    double sup = 0;
    for (double s = 0; s <= 8; s += 0.05)
        for (double y = 0; y <= kPi; y += 0.05) sup = std::max(sup, std::exp(s) * std::abs(sigma(s, y, r.a)));
    EXPECT_LE(sup, 1e-3);
    // One grid step lower misses the budget.
    EXPECT_GT(sigma_decay_norm(r.a - 0.05), 1e-3);
    EXPECT_GE(determine_a(5e-4).a, r.a);
    EXPECT_THROW(determine_a(0.1), DomainError);
}

TEST(Cutoff, Examples)
{
    EXPECT_EQ(cutoff(0, 1, 0), 0.0);
    EXPECT_EQ(cutoff(0, 1, 1), 1.0);
    double d = 0.3;
    EXPECT_EQ(cutoff(4 * d, 3 * d, 4 * d), 0.0);
    EXPECT_EQ(cutoff(4 * d, 3 * d, 3 * d), 1.0);
    double prev = -1;
    for (int i = 0; i <= 100; ++i) {
        double v = cutoff(0, 1, i / 100.0);
        EXPECT_GE(v, prev);
        prev = v;
    }
    EXPECT_EQ(cutoff(0, 1, 0.33), 0.0);
    EXPECT_EQ(cutoff(0, 1, 0.67), 1.0);
}

namespace {

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    // Closest point on triangle (Ericson, Real-Time Collision Detection).
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return (p - a).norm();
    Vec3 bp = p - b;
    double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return (p - b).norm();
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + d1 / (d1 - d3) * ab)).norm();
    Vec3 cp = p - c;
    double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return (p - c).norm();
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + d2 / (d2 - d6) * ac)).norm();
    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
        return (p - (b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b))).norm();
    double denom = 1 / (va + vb + vc);
    return (p - (a + ab * vb * denom + ac * vc * denom)).norm();
}

bool has_partner(const SurfaceMesh& m, const Vec3& q, double tol)
{
    for (const auto& v : m.V)
        if ((v - q).norm() < tol) return true;
    return false;
}

} // namespace

class ExtractCore : public ::testing::Test {
protected:
    static void SetUpTestSuite() { mesh = new SurfaceMesh(extract_core(0.15, 1.0)); }
    static void TearDownTestSuite() { delete mesh; }
    static SurfaceMesh* mesh;
};
SurfaceMesh* ExtractCore::mesh = nullptr;

TEST_F(ExtractCore, VerticesOnSurface)
{
    ASSERT_GT(mesh->V.size(), 1000u);
    for (const auto& p : mesh->V) EXPECT_LT(std::abs(implicit_value(p.x(), p.y(), p.z())), 1e-10);
}

TEST_F(ExtractCore, ManifoldAndOriented)
{
    auto t = check_topology(*mesh);
    EXPECT_TRUE(t.manifold);
    EXPECT_TRUE(t.oriented);
}

TEST_F(ExtractCore, ReflectionSymmetry)
{
    int checked = 0;
    for (const auto& p : mesh->V) {
        // Images of vertices near y = 0 fall outside the extraction box.
        if (p.y() < 0.2 || p.y() > kPi - 0.2) continue;
        Vec3 q(p.x(), kPi - p.y(), p.z());
        EXPECT_TRUE(has_partner(*mesh, q, 1e-9));
        ++checked;
    }
    EXPECT_GT(checked, 100);
}

TEST_F(ExtractCore, HalfTurnSymmetry)
{
    for (const auto& p : mesh->V) EXPECT_TRUE(has_partner(*mesh, Vec3(p.x(), -p.y(), -p.z()), 1e-9));
}

TEST_F(ExtractCore, StitchesWithWingRings)
{
    const double a = 1.0, res = 0.15;
    double worst = 0;
    for (int j = -10; j <= 10; ++j) {
        double y = kPi / 2 * j / 10;
        for (Vec3 p : {top_wing(0, y, a), outer_wing(0, y, a), inner_wing(0, y, a), bottom_wing(0, y, a)}) {
            double best = 1e9;
            for (const auto& f : mesh->F)
                best = std::min(best, point_triangle_distance(p, mesh->V[f[0]], mesh->V[f[1]], mesh->V[f[2]]));
            worst = std::max(worst, best);
        }
    }
    EXPECT_LT(worst, res * res);
}

TEST_F(ExtractCore, RegionsAndObjRoundTrip)
{
    int core = 0;
    for (auto r : mesh->region) core += r == Region::core;
    EXPECT_GT(core, 0);
    std::ostringstream os;
    write_obj(os, *mesh);
    std::istringstream is(os.str());
    auto back = read_obj(is);
    ASSERT_EQ(back.V.size(), mesh->V.size());
    ASSERT_EQ(back.F.size(), mesh->F.size());
    EXPECT_EQ(back.V[17], mesh->V[17]);
    EXPECT_EQ(back.region, mesh->region);
    EXPECT_EQ(back.s, mesh->s);
}

TEST(ExtractCoreErrors, Resolution)
{
    EXPECT_THROW(extract_core(0.5, 1.0), DomainError);
    EXPECT_THROW(extract_core(0.0, 1.0), DomainError);
}
