#pragma once

// Rotationally symmetric profile curves: the geodesic system in the (z, r)
// half-plane, the radial-graph ODE and its linearisation about the sphere.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "ode.hpp"

namespace shrinker {

struct GeodesicState {
    double z = 0;
    double r = 0;
    double theta = 0;
};

inline ode::State<3> to_array(const GeodesicState& s) { return {s.z, s.r, s.theta}; }
inline GeodesicState to_state(const ode::State<3>& a) { return {a[0], a[1], a[2]}; }

/// Right-hand side of z' = cos(theta), r' = sin(theta),
/// theta' = z sin(theta) + (1/r - r) cos(theta). Requires r > 0.
inline GeodesicState geodesic_rhs(const GeodesicState& s)
{
    if (!(s.r > 0)) throw DomainError("geodesic_rhs: r must be positive");
    double c = std::cos(s.theta), sn = std::sin(s.theta);
    return {c, sn, s.z * sn + (1.0 / s.r - s.r) * c};
}

inline ode::State<3> geodesic_rhs_array(double, const ode::State<3>& a)
{
    return to_array(geodesic_rhs(to_state(a)));
}

struct ProfileOptions {
    double t0 = 1e-4;           // series start offset
    double delta_c = 0.4;       // admissible |c - sqrt2|
    double delta_theta = 0.15;  // admissible |target - (pi - asin(z/sqrt2))|
    double r_floor = 1e-8;      // bounce-off detection
    double h_max = 0.02;
    std::optional<GeodesicState> start;  // bypasses the axis start (t starts at 0)
    std::vector<double> output_times;    // exact landing points
};

/// Sampled solution of the geodesic system. Samples are accepted steps.
struct CapProfile {
    double c = 0;
    double tolerance = 0;
    bool truncated = false;
    std::string truncation_reason;
    ode::Solution<3> solution;

    std::size_t size() const { return solution.t.size(); }
    double t(std::size_t i) const { return solution.t[i]; }
    GeodesicState sample(std::size_t i) const { return to_state(solution.y[i]); }
    GeodesicState at(double t) const { return to_state(solution.at(t)); }
    double t_end() const { return solution.t.back(); }
};

/// Series start near the axis: r ~ t, theta ~ pi/2 + c t/2, z ~ c - c t^2/4.
inline GeodesicState axis_series(double c, double t)
{
    return {c - c * t * t / 4.0, t, kPi / 2 + c * t / 2.0};
}

/// Integrate the geodesic system leaving the z-axis perpendicularly at height c
/// (or from options.start) up to arclength t_end.
inline CapProfile integrate_geodesic(double c, double t_end, double tol, const ProfileOptions& opt = {})
{
    if (!(tol > 0)) throw DomainError("integrate_geodesic: tolerance must be positive");
    if (!(t_end > 0) || t_end > 3 * kPi / kSqrt2 + 1e-12)
        throw DomainError("integrate_geodesic: t_end must lie in (0, 3 pi / sqrt2]");
    double t0 = 0;
    GeodesicState y0;
    CapProfile out;
    out.c = c;
    out.tolerance = tol;
    if (opt.start) {
        y0 = *opt.start;
        if (!(y0.r > 0)) throw DomainError("integrate_geodesic: start requires r > 0");
    } else {
        if (!(std::abs(c - kSqrt2) < opt.delta_c))
            throw DomainError("integrate_geodesic: c outside (sqrt2 - delta_c, sqrt2 + delta_c)");
        t0 = opt.t0;
        y0 = axis_series(c, t0);
    }
    ode::Options o;
    o.rtol = o.atol = tol;
    o.h_max = opt.h_max;
    o.h_initial = std::min(1e-3, opt.h_max);
    o.stops = opt.output_times;
    double floor = opt.r_floor;
    out.solution = ode::integrate<3>(geodesic_rhs_array, t0, to_array(y0), t_end, o,
                                     [floor](double, const ode::State<3>& y) {
                                         return y[1] <= floor ? std::string("returned to the axis (r -> 0)")
                                                              : std::string();
                                     });
    if (!opt.start) {
        // Prepend the exact axis point.
        auto& s = out.solution;
        s.t.insert(s.t.begin(), 0.0);
        s.y.insert(s.y.begin(), ode::State<3>{c, 0.0, kPi / 2});
        s.dy.insert(s.dy.begin(), ode::State<3>{0.0, 1.0, c / 2});
    }
    out.truncated = out.solution.truncated;
    out.truncation_reason = out.solution.reason;
    return out;
}

struct Crossing {
    double t = 0;
    GeodesicState state;
};

/// First descending crossing of the line z = z_line by the cap profile with axis height c.
inline std::optional<Crossing> first_descending_crossing(double c, double z_line, double tol, const ProfileOptions& opt = {})
{
    CapProfile p = integrate_geodesic(c, 3 * kPi / kSqrt2, tol, opt);
    ode::Options o;
    o.rtol = o.atol = tol;
    o.h_max = opt.h_max;
    auto ev = ode::find_event_exact<3>(
        p.solution, geodesic_rhs_array, [z_line](double, const ode::State<3>& y) { return y[0] - z_line; }, -1, o);
    if (!ev) return std::nullopt;
    return Crossing{ev->t, to_state(ev->y)};
}

struct ShootResult {
    double c1 = 0;
    double theta_achieved = 0;
    double residual = 0;
    int iterations = 0;
    Crossing crossing;
};

/// Angle at which the sphere of radius sqrt2 crosses z = z_line (descending).
inline double sphere_crossing_angle(double z_line) { return kPi - std::asin(z_line / kSqrt2); }

/// Generic root find over c in [sqrt2 - delta_c, sqrt2 + delta_c]: scan 33 points
/// for a sign change of g(c), then Illinois regula falsi.
template <typename G>
double scan_and_solve(G&& g, double delta_c, double tol, int& iterations, const char* what)
{
    const int n = 33;
    std::vector<double> cs, gs;
    double lo = kSqrt2 - delta_c * 0.999, hi = kSqrt2 + delta_c * 0.999;
    std::optional<std::size_t> bracket;
    for (int i = 0; i < n; ++i) {
        double c = lo + (hi - lo) * i / (n - 1);
        double v = g(c);
        cs.push_back(c);
        gs.push_back(v);
        if (i > 0 && std::isfinite(gs[i - 1]) && std::isfinite(v) && (gs[i - 1] > 0) != (v > 0)) {
            bracket = i - 1;
            break;
        }
    }
    if (!bracket)
        throw BracketError(std::string(what) + ": no sign change over the admissible c bracket", cs, gs);
    double a = cs[*bracket], b = cs[*bracket + 1], ga = gs[*bracket], gb = gs[*bracket + 1];
    int side = 0;
    double c = b, gc = gb;
    iterations = 0;
    for (int it = 0; it < 200; ++it) {
        ++iterations;
        c = (a * gb - b * ga) / (gb - ga);
        if (!(c > std::min(a, b) && c < std::max(a, b))) c = 0.5 * (a + b);
        gc = g(c);
        if (!std::isfinite(gc)) throw ConvergenceError(std::string(what) + ": non-finite residual");
        if (std::abs(gc) <= tol || std::abs(b - a) < 1e-15) break;
        if ((gc > 0) == (ga > 0)) {
            a = c;
            ga = gc;
            if (side == -1) gb *= 0.5;
            side = -1;
        } else {
            b = c;
            gb = gc;
            if (side == 1) ga *= 0.5;
            side = 1;
        }
    }
    if (std::abs(gc) > tol * 10) throw ConvergenceError(std::string(what) + ": root refinement stalled", {gc});
    return c;
}

/// Find c such that the cap profile first crosses z = z_line (descending) at angle theta_target.
inline ShootResult shoot_cap(double theta_target, double z_line, double tol, const ProfileOptions& opt = {})
{
    if (!(z_line > 0 && z_line < 0.2)) throw DomainError("shoot_cap: z_line must lie in (0, 0.2)");
    if (!(tol > 0)) throw DomainError("shoot_cap: tolerance must be positive");
    if (std::abs(theta_target - sphere_crossing_angle(z_line)) > opt.delta_theta)
        throw DomainError("shoot_cap: target angle too far from the sphere crossing angle");
    double itol = std::min(1e-12, tol * 1e-2);
    auto g = [&](double c) {
        auto cr = first_descending_crossing(c, z_line, itol, opt);
        if (!cr) return std::numeric_limits<double>::quiet_NaN();
        return cr->state.theta - theta_target;
    };
    ShootResult res;
    res.c1 = scan_and_solve(g, opt.delta_c, tol, res.iterations, "shoot_cap");
    auto cr = first_descending_crossing(res.c1, z_line, itol, opt);
    res.crossing = *cr;
    res.theta_achieved = cr->state.theta;
    res.residual = std::abs(res.theta_achieved - theta_target);
    return res;
}

/// Sampled scalar profile (value and first derivative).
struct ScalarProfile {
    std::vector<double> t;
    std::vector<double> value;
    std::vector<double> derivative;
    bool truncated = false;
    std::string truncation_reason;
};

namespace detail {

inline ScalarProfile to_scalar(const ode::Solution<2>& s, double v0, double d0)
{
    ScalarProfile p;
    p.t.push_back(0.0);
    p.value.push_back(v0);
    p.derivative.push_back(d0);
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        p.t.push_back(s.t[i]);
        p.value.push_back(s.y[i][0]);
        p.derivative.push_back(s.y[i][1]);
    }
    p.truncated = s.truncated;
    p.truncation_reason = s.reason;
    return p;
}

} // namespace detail

/// Radial graph h over the unit sphere: h''/(1+h'^2) + cot(t) h' + e^{2h} - 2 = 0,
/// h(0) = c_h, h'(0) = 0.
inline ScalarProfile graph_ode_h(double c_h, double t_end, double tol = 1e-11, double t0 = 1e-4,
                                 const std::vector<double>& output_times = {})
{
    if (!(t_end > t0 && t_end < kPi)) throw DomainError("graph_ode_h: t_end must lie in (t0, pi)");
    double k = std::exp(2 * c_h) - 2;
    ode::State<2> y0{c_h - k * t0 * t0 / 4, -k * t0 / 2};
    auto f = [](double t, const ode::State<2>& y) -> ode::State<2> {
        double st = std::sin(t);
        if (st <= 0) throw DomainError("graph_ode_h: left (0, pi)");
        double hp = y[1];
        return {hp, -(1 + hp * hp) * (std::cos(t) / st * hp + std::exp(2 * y[0]) - 2)};
    };
    ode::Options o;
    o.rtol = o.atol = tol;
    o.h_max = 0.02;
    o.stops = output_times;
    auto s = ode::integrate<2>(f, t0, y0, t_end, o, [](double, const ode::State<2>& y) {
        return std::abs(y[1]) > 1e6 || !std::isfinite(y[0]) ? std::string("derivative blow-up") : std::string();
    });
    return detail::to_scalar(s, c_h, 0.0);
}

/// Linearisation of the graph ODE about the sphere:
/// psi'' + cot(t) psi' + 4 psi = 0, psi(0) = 1, psi'(0) = 0.
inline ScalarProfile legendre_psi(double t_end, double tol = 1e-12, double t0 = 1e-4,
                                  const std::vector<double>& output_times = {})
{
    if (!(t_end > t0 && t_end < kPi)) throw DomainError("legendre_psi: t_end must lie in (t0, pi)");
    // psi = 1 - t^2 + 5 t^4 / 24 + ...
    ode::State<2> y0{1 - t0 * t0 + 5 * std::pow(t0, 4) / 24, -2 * t0 + 5 * std::pow(t0, 3) / 6};
    auto f = [](double t, const ode::State<2>& y) -> ode::State<2> {
        double st = std::sin(t);
        if (st <= 0) throw DomainError("legendre_psi: left (0, pi)");
        return {y[1], -std::cos(t) / st * y[1] - 4 * y[0]};
    };
    ode::Options o;
    o.rtol = o.atol = tol;
    o.h_max = 0.02;
    o.stops = output_times;
    auto s = ode::integrate<2>(f, t0, y0, t_end, o);
    return detail::to_scalar(s, 1.0, 0.0);
}

/// CSV with header t,z,r,theta.
inline void write_profile_csv(std::ostream& os, const CapProfile& p)
{
    os << "t,z,r,theta\n";
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto s = p.sample(i);
        os << fmt_double(p.t(i)) << ',' << fmt_double(s.z) << ',' << fmt_double(s.r) << ',' << fmt_double(s.theta)
           << '\n';
    }
}

} // namespace shrinker
