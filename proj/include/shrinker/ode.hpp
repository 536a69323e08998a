#pragma once

// Adaptive Dormand-Prince 5(4) integrator with cubic Hermite dense output and
// event location by bisection on the interpolant.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace shrinker::ode {

template <std::size_t N>
using State = std::array<double, N>;

struct Options {
    double rtol = 1e-10;
    double atol = 1e-10;
    double h_initial = 1e-3;
    double h_max = 0.05;
    std::size_t max_steps = 2000000;
    // Times the integrator must land on exactly (sorted, inside the span).
    std::vector<double> stops;
};

template <std::size_t N>
struct Solution {
    std::vector<double> t;
    std::vector<State<N>> y;
    std::vector<State<N>> dy;
    bool truncated = false;
    std::string reason;

    double t_end() const { return t.back(); }

    // Cubic Hermite interpolation on the accepted step containing s.
    State<N> at(double s) const
    {
        if (t.size() == 1) return y.front();
        auto it = std::upper_bound(t.begin(), t.end(), s);
        std::size_t k = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
        k = std::min(k, t.size() - 2);
        return hermite(k, s);
    }

    State<N> hermite(std::size_t k, double s) const
    {
        double h = t[k + 1] - t[k];
        double u = (s - t[k]) / h;
        double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
        double h10 = u * (1 - u) * (1 - u);
        double h01 = u * u * (3 - 2 * u);
        double h11 = u * u * (u - 1);
        State<N> out;
        for (std::size_t i = 0; i < N; ++i)
            out[i] = h00 * y[k][i] + h10 * h * dy[k][i] + h01 * y[k + 1][i] + h11 * h * dy[k + 1][i];
        return out;
    }
};

namespace detail {

// Dormand-Prince tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;

} // namespace detail

/// Integrate y' = f(t, y) from t0 to t1 (t1 > t0). `guard(t, y)` returns an empty
/// string to continue or a reason to stop early (the solution is then truncated).
/// f may throw DomainError; that also truncates.
template <std::size_t N, typename Rhs, typename Guard>
Solution<N> integrate(Rhs&& f, double t0, const State<N>& y0, double t1, const Options& opt, Guard&& guard)
{
    using namespace detail;
    Solution<N> sol;
    sol.t.push_back(t0);
    sol.y.push_back(y0);
    sol.dy.push_back(f(t0, y0));

    std::vector<double> stops;
    for (double s : opt.stops)
        if (s > t0 && s < t1) stops.push_back(s);
    std::sort(stops.begin(), stops.end());
    stops.push_back(t1);
    std::size_t next_stop = 0;

    double t = t0;
    State<N> y = y0;
    State<N> k1 = sol.dy.back();
    double h = std::min(opt.h_initial, opt.h_max);
    std::size_t steps = 0;

    auto axpy = [](const State<N>& base, double hh, std::initializer_list<std::pair<double, const State<N>*>> terms) {
        State<N> out = base;
        for (auto& [coef, k] : terms)
            for (std::size_t i = 0; i < N; ++i) out[i] += hh * coef * (*k)[i];
        return out;
    };

    while (t < t1) {
        if (++steps > opt.max_steps) {
            sol.truncated = true;
            sol.reason = "step limit";
            return sol;
        }
        double target = stops[next_stop];
        bool landing = false;
        if (t + h >= target - 1e-14 * std::max(1.0, std::abs(target))) {
            h = target - t;
            landing = true;
        }
        State<N> k2, k3, k4, k5, k6, k7, ynew;
        try {
            k2 = f(t + c2 * h, axpy(y, h, {{a21, &k1}}));
            k3 = f(t + c3 * h, axpy(y, h, {{a31, &k1}, {a32, &k2}}));
            k4 = f(t + c4 * h, axpy(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
            k5 = f(t + c5 * h, axpy(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
            k6 = f(t + h, axpy(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
            ynew = axpy(y, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
            k7 = f(t + h, ynew);
        } catch (const DomainError&) {
            if (h < 1e-14) {
                sol.truncated = true;
                sol.reason = "left the domain of the vector field";
                return sol;
            }
            h *= 0.25;
            continue;
        }
        double err = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            err = std::max(err, std::abs(e) / sc);
        }
        if (!std::isfinite(err)) err = 1e10;
        if (err <= 1.0) {
            t = landing ? target : t + h;
            y = ynew;
            k1 = k7;
            sol.t.push_back(t);
            sol.y.push_back(y);
            sol.dy.push_back(k7);
            if (landing) ++next_stop;
            std::string why = guard(t, y);
            if (!why.empty()) {
                sol.truncated = true;
                sol.reason = why;
                return sol;
            }
        }
        double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        h = std::min(h * fac, opt.h_max);
        if (h < 1e-15) {
            sol.truncated = true;
            sol.reason = "step size underflow";
            return sol;
        }
    }
    return sol;
}

template <std::size_t N, typename Rhs>
Solution<N> integrate(Rhs&& f, double t0, const State<N>& y0, double t1, const Options& opt)
{
    return integrate<N>(std::forward<Rhs>(f), t0, y0, t1, opt, [](double, const State<N>&) { return std::string(); });
}

template <std::size_t N>
struct Event {
    double t;
    State<N> y;
};

/// First zero of g(t, y) along the solution. direction < 0 accepts only
/// decreasing crossings, > 0 only increasing, 0 either.
template <std::size_t N, typename G>
std::optional<Event<N>> find_event(const Solution<N>& sol, G&& g, int direction = 0, double t_tol = 1e-13)
{
    for (std::size_t k = 0; k + 1 < sol.t.size(); ++k) {
        double g0 = g(sol.t[k], sol.y[k]);
        double g1 = g(sol.t[k + 1], sol.y[k + 1]);
        bool crosses = (g0 > 0 && g1 <= 0 && direction <= 0) || (g0 < 0 && g1 >= 0 && direction >= 0);
        if (!crosses) continue;
        double lo = sol.t[k], hi = sol.t[k + 1], glo = g0;
        while (hi - lo > t_tol) {
            double mid = 0.5 * (lo + hi);
            double gm = g(mid, sol.hermite(k, mid));
            if ((gm > 0) == (glo > 0)) {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        double te = 0.5 * (lo + hi);
        return Event<N>{te, sol.hermite(k, te)};
    }
    return std::nullopt;
}

/// Same as find_event but each trial point is obtained by re-integrating from the
/// start of the bracketing step, so the event is accurate to the integrator
/// tolerance rather than the interpolant. Uses the Illinois variant of regula falsi.
template <std::size_t N, typename Rhs, typename G>
std::optional<Event<N>> find_event_exact(const Solution<N>& sol, Rhs&& f, G&& g, int direction, const Options& opt,
                                         double t_tol = 1e-14)
{
    for (std::size_t k = 0; k + 1 < sol.t.size(); ++k) {
        double g0 = g(sol.t[k], sol.y[k]);
        double g1 = g(sol.t[k + 1], sol.y[k + 1]);
        bool crosses = (g0 > 0 && g1 <= 0 && direction <= 0) || (g0 < 0 && g1 >= 0 && direction >= 0);
        if (!crosses) continue;
        Options local = opt;
        local.stops.clear();
        auto eval = [&](double s) {
            if (s <= sol.t[k]) return sol.y[k];
            return integrate<N>(f, sol.t[k], sol.y[k], s, local).y.back();
        };
        double lo = sol.t[k], hi = sol.t[k + 1], glo = g0, ghi = g1;
        State<N> ybest = sol.y[k + 1];
        double tbest = hi;
        int side = 0;
        for (int it = 0; it < 200 && hi - lo > t_tol; ++it) {
            double s = (lo * ghi - hi * glo) / (ghi - glo);
            if (!(s > lo && s < hi)) s = 0.5 * (lo + hi);
            State<N> ys = eval(s);
            double gs = g(s, ys);
            tbest = s;
            ybest = ys;
            if (gs == 0.0) break;
            if ((gs > 0) == (glo > 0)) {
                lo = s;
                glo = gs;
                if (side == -1) ghi *= 0.5;
                side = -1;
            } else {
                hi = s;
                ghi = gs;
                if (side == 1) glo *= 0.5;
                side = 1;
            }
            if (std::abs(gs) < 1e-15) break;
        }
        return Event<N>{tbest, ybest};
    }
    return std::nullopt;
}

} // namespace shrinker::ode
