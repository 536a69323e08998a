#include <gtest/gtest.h>

#include <sstream>

#include "shrinker/profile_odes.hpp"

using namespace shrinker;

namespace {

GeodesicState hemisphere(double t)
{
    double th = kPi / 2 + t / kSqrt2;
    return {kSqrt2 * std::sin(th), -kSqrt2 * std::cos(th), th};
}

} // namespace

TEST(GeodesicRhs, PlaneStateHasNoDrive)
{
    auto d = geodesic_rhs({0, 1, kPi / 2});
    EXPECT_NEAR(d.z, 0, 1e-16);
    EXPECT_DOUBLE_EQ(d.r, 1);
    EXPECT_NEAR(d.theta, 0, 1e-16);
}

TEST(GeodesicRhs, CylinderLineIsInvariant)
{
    auto d = geodesic_rhs({1, 1, 0});
    EXPECT_EQ(d.z, 1);
    EXPECT_EQ(d.r, 0);
    EXPECT_EQ(d.theta, 0);
}

TEST(GeodesicRhs, MatchesHemisphereDerivative)
{
    for (double t : {0.1, 0.7, 1.3, 2.0}) {
        auto d = geodesic_rhs(hemisphere(t));
        double th = kPi / 2 + t / kSqrt2;
        EXPECT_NEAR(d.z, std::cos(th), 1e-14);
        EXPECT_NEAR(d.r, std::sin(th), 1e-14);
        EXPECT_NEAR(d.theta, 1 / kSqrt2, 1e-14);
    }
}

TEST(GeodesicRhs, RejectsAxis)
{
    EXPECT_THROW(geodesic_rhs({1, 0, 0}), DomainError);
    EXPECT_THROW(geodesic_rhs({1, -0.1, 0}), DomainError);
}

TEST(IntegrateGeodesic, HemisphereClosedForm)
{
    const double tol = 1e-10;
    auto p = integrate_geodesic(kSqrt2, kSqrt2 * kPi / 2, tol);
    ASSERT_FALSE(p.truncated);
    auto s0 = p.sample(0);
    EXPECT_EQ(s0.z, kSqrt2);
    EXPECT_EQ(s0.r, 0);
    double worst = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        auto s = p.sample(i), e = hemisphere(p.t(i));
        worst = std::max({worst, std::abs(s.z - e.z), std::abs(s.r - e.r), std::abs(s.theta - e.theta)});
    }
    EXPECT_LT(worst, 1e-8);
    auto f = p.sample(p.size() - 1);
    EXPECT_NEAR(f.z, 0, 10 * tol);
    EXPECT_NEAR(f.r, kSqrt2, 10 * tol);
    EXPECT_NEAR(f.theta, kPi, 10 * tol);
}

TEST(IntegrateGeodesic, HemisphereWholeArc)
{
    auto p = integrate_geodesic(kSqrt2, 4.0, 1e-10);
    double worst = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        auto s = p.sample(i), e = hemisphere(p.t(i));
        worst = std::max({worst, std::abs(s.z - e.z), std::abs(s.r - e.r), std::abs(s.theta - e.theta)});
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(IntegrateGeodesic, CylinderAndPlaneInvariantLines)
{
    ProfileOptions o;
    o.start = GeodesicState{0.5, 1, 0};
    auto cyl = integrate_geodesic(0, 3 * kPi / kSqrt2, 1e-10, o);
    ASSERT_FALSE(cyl.truncated);
    for (std::size_t i = 0; i < cyl.size(); ++i) {
        auto s = cyl.sample(i);
        EXPECT_NEAR(s.r, 1, 1e-9);
        EXPECT_NEAR(s.theta, 0, 1e-9);
        EXPECT_NEAR(s.z, 0.5 + cyl.t(i), 1e-9);
    }
    o.start = GeodesicState{0, 0.7, kPi / 2};
    auto pl = integrate_geodesic(0, 3 * kPi / kSqrt2, 1e-10, o);
    for (std::size_t i = 0; i < pl.size(); ++i) EXPECT_NEAR(pl.sample(i).z, 0, 1e-9);
}

TEST(IntegrateGeodesic, Preconditions)
{
    EXPECT_THROW(integrate_geodesic(kSqrt2 + 1.0, 1.0, 1e-10), DomainError);
    EXPECT_THROW(integrate_geodesic(kSqrt2, 3 * kPi / kSqrt2 + 0.1, 1e-10), DomainError);
    EXPECT_THROW(integrate_geodesic(kSqrt2, 1.0, 0.0), DomainError);
}

TEST(IntegrateGeodesic, BounceOffIsFlaggedNotThrown)
{
    // The full sphere returns to the axis at t = sqrt2 pi.
    auto p = integrate_geodesic(kSqrt2, 3 * kPi / kSqrt2, 1e-10);
    EXPECT_TRUE(p.truncated);
    EXPECT_NEAR(p.t_end(), kSqrt2 * kPi, 1e-3);
    EXPECT_FALSE(p.truncation_reason.empty());
}

TEST(IntegrateGeodesic, SeriesStartMatchesHemisphere)
{
    for (double t : {1e-4, 1e-3}) {
        auto s = axis_series(kSqrt2, t);
        auto e = hemisphere(t);
        EXPECT_NEAR(s.z, e.z, 1e-3 * t * t);
        EXPECT_NEAR(s.r, e.r, t * t);
        EXPECT_NEAR(s.theta, e.theta, 1e-14);
    }
}

TEST(ShootCap, SphereAngleRecoversSqrt2)
{
    const double tol = 1e-10;
    for (double z : {0.05, 0.1, 0.177}) {
        auto r = shoot_cap(sphere_crossing_angle(z), z, tol);
        EXPECT_NEAR(r.c1, kSqrt2, 1e-8) << "z_line=" << z;
        EXPECT_LE(r.residual, tol);
    }
}

TEST(ShootCap, LipschitzInTargetAngle)
{
    const double z = 0.1;
    double th0 = sphere_crossing_angle(z);
    auto base = shoot_cap(th0, z, 1e-11);
    auto plus = shoot_cap(th0 + 1e-3, z, 1e-11);
    auto minus = shoot_cap(th0 - 1e-3, z, 1e-11);
    double cp = std::abs(plus.c1 - base.c1) / 1e-3;
    double cm = std::abs(minus.c1 - base.c1) / 1e-3;
    EXPECT_GT(cp, 0.1);
    EXPECT_LT(cp, 10);
    EXPECT_NEAR(cp / cm, 1.0, 0.05);
    // Halving the perturbation gives the same constant.
    auto half = shoot_cap(th0 + 5e-4, z, 1e-11);
    EXPECT_NEAR(std::abs(half.c1 - base.c1) / 5e-4, cp, 0.02 * cp);
    std::cout << "fitted Lipschitz constant C = " << cp << "\n";
}

TEST(ShootCap, AngleMonotoneAgainstDenseScan)
{
    const double z = 0.1;
    ProfileOptions o;
    double prev = -1e9;
    int n = 200;
    for (int i = 0; i < n; ++i) {
        double c = kSqrt2 - 0.39 + 0.78 * i / (n - 1);
        auto cr = first_descending_crossing(c, z, 1e-10, o);
        ASSERT_TRUE(cr.has_value());
        EXPECT_GT(cr->state.theta, prev);
        prev = cr->state.theta;
    }
}

TEST(ShootCap, PreconditionsAndBracketFailure)
{
    EXPECT_THROW(shoot_cap(kPi, 0.3, 1e-10), DomainError);
    EXPECT_THROW(shoot_cap(sphere_crossing_angle(0.1) + 0.5, 0.1, 1e-10), DomainError);
    ProfileOptions o;
    o.delta_c = 0.01;
    try {
        shoot_cap(sphere_crossing_angle(0.1) + 0.1, 0.1, 1e-10, o);
        FAIL() << "expected bracket failure";
    } catch (const BracketError& e) {
        EXPECT_EQ(e.args.size(), 33u);
        EXPECT_EQ(e.values.size(), 33u);
    }
}

TEST(GraphOde, SphereIsEquilibrium)
{
    auto h = graph_ode_h(std::log(kSqrt2), kPi / 2);
    ASSERT_FALSE(h.truncated);
    for (double v : h.value) EXPECT_NEAR(v, std::log(kSqrt2), 1e-12);
}

TEST(GraphOde, LinearResponseIsLegendre)
{
    std::vector<double> grid;
    for (int i = 1; i <= 50; ++i) grid.push_back(kPi / 2 * i / 50);
    const double eps = 1e-4;
    auto h = graph_ode_h(std::log(kSqrt2) + eps, kPi / 2, 1e-12, 1e-4, grid);
    auto psi = legendre_psi(kPi / 2, 1e-12, 1e-4, grid);
    double worst = 0;
    for (double t : grid) {
        auto ih = std::find(h.t.begin(), h.t.end(), t) - h.t.begin();
        auto ip = std::find(psi.t.begin(), psi.t.end(), t) - psi.t.begin();
        ASSERT_LT(static_cast<std::size_t>(ih), h.t.size());
        ASSERT_LT(static_cast<std::size_t>(ip), psi.t.size());
        worst = std::max(worst, std::abs((h.value[ih] - std::log(kSqrt2)) / eps - psi.value[ip]));
    }
    EXPECT_LT(worst, 1e-2);
}

TEST(GraphOde, SeriesStartConsistency)
{
    const double ch = std::log(kSqrt2) + 0.05, t0 = 1e-3;
    std::vector<double> at{t0};
    auto a = graph_ode_h(ch, 0.01, 1e-13, t0);
    auto b = graph_ode_h(ch, 0.01, 1e-13, t0 / 2, at);
    auto ib = std::find(b.t.begin(), b.t.end(), t0) - b.t.begin();
    ASSERT_LT(static_cast<std::size_t>(ib), b.t.size());
    EXPECT_NEAR(a.value[1], b.value[ib], 10 * t0 * t0 * t0);
}

TEST(Legendre, InitialData)
{
    auto p = legendre_psi(kPi / 2);
    EXPECT_EQ(p.value[0], 1.0);
    EXPECT_EQ(p.derivative[0], 0.0);
    // psi''(0) = -2 from the first accepted sample.
    double t = p.t[1];
    EXPECT_NEAR((p.value[1] - 1.0) / (t * t), -1.0, 1e-6);
    EXPECT_NEAR(p.derivative[1] / t, -2.0, 1e-6);
}

TEST(Legendre, SlopeAtEquatorMatchesLegendreFunction)
{
    // psi(t) = P_nu(cos t) with nu (nu + 1) = 4, so psi'(pi/2) = -P_nu'(0) and
    // P_nu'(0) = 2/sqrt(pi) sin(nu pi/2) Gamma(nu/2 + 1) / Gamma(nu/2 + 1/2) > 0.
    std::vector<double> grid{kPi / 2};
    auto p = legendre_psi(kPi / 2 + 0.1, 1e-12, 1e-4, grid);
    auto i = std::find(p.t.begin(), p.t.end(), kPi / 2) - p.t.begin();
    ASSERT_LT(static_cast<std::size_t>(i), p.t.size());
    double nu = (std::sqrt(17.0) - 1) / 2;
    double dP = 2 / std::sqrt(kPi) * std::sin(nu * kPi / 2) * std::tgamma(nu / 2 + 1) / std::tgamma(nu / 2 + 0.5);
    EXPECT_GT(dP, 0.0);
    EXPECT_NEAR(-p.derivative[i], dP, 1e-9);
}

TEST(Legendre, OdeResidualSmall)
{
    std::vector<double> grid;
    const double d = 2e-3;
    for (int i = 2; i <= 25; ++i)
        for (int k = -2; k <= 2; ++k) grid.push_back(0.1 * i + k * d);
    std::sort(grid.begin(), grid.end());
    auto p = legendre_psi(3.0, 1e-13, 1e-4, grid);
    auto val = [&](double t, bool deriv) {
        auto it = std::min_element(p.t.begin(), p.t.end(),
                                   [t](double a, double b) { return std::abs(a - t) < std::abs(b - t); });
        auto i = it - p.t.begin();
        return deriv ? p.derivative[i] : p.value[i];
    };
    double worst = 0;
    for (int i = 2; i <= 25; ++i) {
        double t = 0.1 * i;
        double dd = (-val(t + 2 * d, true) + 8 * val(t + d, true) - 8 * val(t - d, true) + val(t - 2 * d, true)) /
                    (12 * d);
        double res = dd + std::cos(t) / std::sin(t) * val(t, true) + 4 * val(t, false);
        worst = std::max(worst, std::abs(res));
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(ProfileCsv, HeaderAndRoundTrip)
{
    auto p = integrate_geodesic(kSqrt2, 0.5, 1e-10);
    std::ostringstream os;
    write_profile_csv(os, p);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "t,z,r,theta");
    std::getline(is, line);
    std::getline(is, line);
    double t = std::stod(line.substr(0, line.find(',')));
    EXPECT_EQ(t, p.t(1));
}
