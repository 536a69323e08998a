#pragma once

// The desingularizing surface: unbalancing, wrapping, bending along the
// pivot geodesic, and the cap/radius fit that closes it up.

#include <cmath>
#include <vector>

#include "common.hpp"
#include "cutoff.hpp"
#include "ode.hpp"
#include "params.hpp"
#include "profile_odes.hpp"
#include "scherk.hpp"

namespace shrinker {

/// Rotation about the y-axis by b * mu(p) * sign(z); mu blends from 0 on
/// {|z| < |x|/2} to 1 on {|z| > 2|x|, |z| > 1}.
inline double unbalance_weight(const Vec3& p)
{
    double az = std::abs(p.z());
    return cutoff(0.5, 2, az / std::max(std::abs(p.x()), 1e-9)) * cutoff(0.5, 1, az);
}

inline Vec3 unbalance_map(double b, const Vec3& p)
{
    if (b == 0) return p;
    double mu = unbalance_weight(p);
    if (mu == 0) return p;
    double t = b * mu * (p.z() > 0 ? 1 : -1);
    double c = std::cos(t), s = std::sin(t);
    return {c * p.x() + s * p.z(), p.y(), -s * p.x() + c * p.z()};
}

inline Vec3 wrap_map(double R, double tau, const Vec3& p)
{
    if (!(R > 0)) throw DomainError("wrap_map: R must be positive");
    double e = std::exp(p.x() / R), phi = tau * p.y() / kSqrt2;
    return {R * e * std::cos(phi), R * e * std::sin(phi), p.z()};
}

struct CapFit {
    double c = 0;
    double R_tilde = 0;
    double beta = 0;
    double theta_cross = 0;  // cap tangent angle where it meets z = tau a
    double r_cross = 0;
    double t_cross = 0;      // cap arclength at the crossing
    double position_mismatch = 0;
    double angle_mismatch = 0;
    int rounds = 0;
};

namespace detail {

// Solve R e^{k/R} = r for R near r.
inline double radius_from_crossing(double r, double k)
{
    double R = r;
    for (int it = 0; it < 100; ++it) {
        double e = std::exp(k / R);
        double step = (R * e - r) / (e * (1 - k / R));
        R -= step;
        if (std::abs(step) < 1e-16 * r) break;
    }
    return R;
}

} // namespace detail

/// Fit the cap intercept c and the radius R_tilde: the cap crosses z = tau a at
/// radius R_tilde e^{a tau tan b / R_tilde} with reversed tangent angle beta(R_tilde).
inline CapFit fit_cap_and_radius(double b, double tau, double a, const ProfileOptions& opt = {}, double tol = 1e-12)
{
    const double z_line = tau * a, k = a * tau * std::tan(b);
    auto beta_of = [&](double Rt) { return std::atan(std::tan(b) * std::exp(k / Rt)); };
    CapFit fit;
    double beta = b;
    std::vector<double> history;
    for (int round = 1; round <= 100; ++round) {
        ShootResult sh = shoot_cap(kPi + beta, z_line, tol, opt);
        fit.c = sh.c1;
        fit.theta_cross = sh.crossing.state.theta;
        fit.r_cross = sh.crossing.state.r;
        fit.t_cross = sh.crossing.t;
        fit.R_tilde = detail::radius_from_crossing(fit.r_cross, k);
        double next = beta_of(fit.R_tilde);
        history.push_back(next - beta);
        fit.rounds = round;
        bool done = std::abs(next - beta) <= tol;
        beta = next;
        if (done) {
            fit.beta = beta;
            fit.position_mismatch = std::abs(fit.R_tilde * std::exp(k / fit.R_tilde) - fit.r_cross);
            fit.angle_mismatch = std::abs(fit.theta_cross - kPi - fit.beta);
            return fit;
        }
    }
    throw ConvergenceError("fit_cap_and_radius: pivot angle did not settle", history);
}

/// Fit and store c, R_tilde into params.
inline CapFit apply_cap_fit(ConstructionParams& p)
{
    ProfileOptions opt;
    opt.delta_c = p.delta_c;
    opt.delta_theta = p.delta_theta;
    CapFit f = fit_cap_and_radius(p.b, p.tau(), p.a, opt);
    p.c = f.c;
    p.R_tilde = f.R_tilde;
    return f;
}

/// Pivot geodesic in the conformal parameter s: state (z, r, theta, t) with
/// d/ds = (tau r / sqrt2) (geodesic rhs, 1).
struct KappaProfile {
    double tau = 0;
    ode::Solution<4> solution;

    ode::State<4> at(double s) const { return solution.at(s); }
    double s_end() const { return solution.t.back(); }
};

inline KappaProfile kappa_profile(const ConstructionParams& p, double tol = 1e-12)
{
    const double tau = p.tau();
    double k = p.a * tau * std::tan(p.b);
    ode::State<4> y0{tau * p.a, p.R_tilde * std::exp(k / p.R_tilde), p.beta(), 0.0};
    auto f = [tau](double, const ode::State<4>& y) -> ode::State<4> {
        auto g = geodesic_rhs_array(0, {y[0], y[1], y[2]});
        double w = tau * y[1] / kSqrt2;
        return {w * g[0], w * g[1], w * g[2], w};
    };
    ode::Options o;
    o.rtol = o.atol = tol;
    o.h_max = 0.05;
    for (int i = 0; i <= p.n_s(); ++i) o.stops.push_back(p.s_at(i));
    KappaProfile out;
    out.tau = tau;
    out.solution = ode::integrate<4>(f, 0.0, y0, p.s_max(), o);
    if (out.solution.truncated) throw ConvergenceError("kappa_profile: " + out.solution.reason, {});
    return out;
}

/// Large-scale point on the surface of revolution swept by the pivot geodesic.
inline Vec3 kappa_point(const KappaProfile& k, double s, double y)
{
    auto st = k.at(s);
    double phi = k.tau * y / kSqrt2;
    return Vec3(st[1] * std::cos(phi), st[1] * std::sin(phi), st[0]) / k.tau;
}

inline Vec3 kappa_normal(const KappaProfile& k, double s, double y)
{
    auto st = k.at(s);
    double phi = k.tau * y / kSqrt2;
    return {std::cos(st[2]) * std::cos(phi), std::cos(st[2]) * std::sin(phi), -std::sin(st[2])};
}

inline double wing_cutoff(const ConstructionParams& p, double s)
{
    double d = p.delta_s / p.tau();
    return cutoff(4 * d, 3 * d, s);
}

/// Large-scale top wing: wrapped unbalanced Scherk near s = 0, the sigma-graph
/// over the pivot surface for s >= 1.
inline Vec3 wing_embedding(const ConstructionParams& p, const KappaProfile& k, double s, double y)
{
    if (s < -1e-12 || s > p.s_max() + 1e-9) throw DomainError("wing_embedding: s outside [0, s_max]");
    double sg = sigma(s, y, p.a);
    double w = cutoff(1, 0, s);
    Vec3 out = Vec3::Zero();
    if (w > 0) out += w * wrap_map(p.R(), p.tau(), unbalance_map(p.b, top_wing(s, y, p.a)));
    if (w < 1) out += (1 - w) * (kappa_point(k, s, y) + wing_cutoff(p, s) * sg * kappa_normal(k, s, y));
    return out;
}

/// Large-scale outer (sign = +1) and inner (sign = -1) wings: the wrapped
/// Scherk graph with sigma cut off towards the plane.
inline Vec3 flat_wing_embedding(const ConstructionParams& p, int sign, double s, double y)
{
    double h = wing_cutoff(p, s) * sigma(s, y, p.a);
    Vec3 q(sign * (s + p.a), y, sign * h);
    return wrap_map(p.R(), p.tau(), unbalance_map(p.b, q));
}

} // namespace shrinker
