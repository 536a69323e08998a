#pragma once

// Construction parameters of the initial surface and their derived scales.

#include <algorithm>
#include <cmath>
#include <string>

#include <json.hpp>

#include "common.hpp"

namespace shrinker {

struct ConstructionParams {
    int m = 8;
    double b = 0.0;
    double R_tilde = std::sqrt(2.0); // replaced by the cap fit
    double c = std::sqrt(2.0);       // cap intercept from the same fit
    double a = 1.0;
    double delta_s = 0.5;
    double gamma = 0.1;
    double epsilon = 1e-3;
    double zeta = 10.0;
    // ubar_a = min(8|log tau|, ubar_fraction * s_max), snapped to the s grid.
    double ubar_fraction = 0.45;
    double rho_factor = 4.0; // rho_max = rho_factor * R_bar
    double resolution = kPi / 12; // target (s, y) spacing in the large scale
    // Wing rows sit at s = S(xi) on a uniform xi grid. S' is fine_factor up to
    // s = fine_length and rises smoothly to 1 after it.
    double fine_factor = 1.0 / 16;
    double fine_length = 1.0;
    double delta_c = 0.4;
    double delta_theta = 0.15;

    double tau() const { return kSqrt2 / m; }
    double R() const { return R_tilde / tau(); }
    double s_max() const { return 5 * delta_s / tau(); }
    double beta() const { return std::atan(std::tan(b) * std::exp(a * std::tan(b) / R())); }

    int n_y() const { return std::max(2, static_cast<int>(std::ceil(kPi / 2 / resolution))); }
    double y_at(int i) const { return i * (kPi / 2) / n_y(); }

    /// Row stretching S and its derivative.
    double stretch(double xi) const
    {
        const double q = fine_factor, w = 0.5, xc = fine_length / q + 1;
        auto lncosh = [](double x) { return std::abs(x) + std::log1p(std::exp(-2 * std::abs(x))) - std::log(2.0); };
        return q * xi + (1 - q) / 2 * (xi + w * (lncosh((xi - xc) / w) - lncosh(xc / w)));
    }
    double stretch_rate(double xi) const
    {
        const double q = fine_factor, xc = fine_length / q + 1;
        return q + (1 - q) / 2 * (1 + std::tanh((xi - xc) / 0.5));
    }
    /// Inverse of the stretching.
    double xi_of(double s) const
    {
        double xi = s;
        for (int it = 0; it < 100; ++it) {
            double step = (stretch(xi) - s) / stretch_rate(xi);
            xi -= step;
            if (std::abs(step) < 1e-14 * (1 + xi)) break;
        }
        return xi;
    }
    double xi_max() const { return xi_of(s_max()); }
    int n_s() const { return std::max(4, static_cast<int>(std::ceil(xi_max() / resolution))); }
    /// Row spacing in xi, equal to the s spacing away from the refined rows.
    double h_s() const { return xi_max() / n_s(); }
    double s_at(int k) const { return k == n_s() ? s_max() : stretch(k * h_s()); }

    int ubar_index() const
    {
        double target = std::min(8 * std::abs(std::log(tau())), ubar_fraction * s_max());
        return std::clamp(static_cast<int>(std::lround(xi_of(target) / h_s())), 1, n_s() - 2);
    }
    double ubar_a() const { return s_at(ubar_index()); }
    /// Small-scale radius of the circle s = ubar_a on the outer wing.
    double R_bar() const { return R_tilde * std::exp(tau() * (a + ubar_a()) / R_tilde); }
    double rho_max() const { return rho_factor * R_bar(); }
    double b0() const { return std::exp(-s_max()); }

    void validate() const
    {
        if (m < 2) throw DomainError("params: m must be at least 2");
        if (!(std::abs(b) < 0.1)) throw DomainError("params: |b| must be below 1/10");
        if (!(a > 0 && delta_s > 0 && gamma > 0 && gamma < 1 && resolution > 0))
            throw DomainError("params: a, delta_s, resolution must be positive and gamma in (0,1)");
        if (!(ubar_fraction > 0 && ubar_fraction < 1)) throw DomainError("params: ubar_fraction must lie in (0,1)");
        if (!(fine_factor > 0 && fine_factor <= 1 && fine_length >= 0))
            throw DomainError("params: fine_factor must lie in (0,1] and fine_length be non-negative");
    }
};

inline nlohmann::json to_json(const ConstructionParams& p)
{
    return {{"m", p.m},
            {"tau", p.tau()},
            {"b", p.b},
            {"R_tilde", p.R_tilde},
            {"c", p.c},
            {"beta", p.beta()},
            {"a", p.a},
            {"delta_s", p.delta_s},
            {"gamma", p.gamma},
            {"epsilon", p.epsilon},
            {"zeta", p.zeta},
            {"s_max", p.s_max()},
            {"ubar_a", p.ubar_a()},
            {"rho_max", p.rho_max()},
            {"resolution", p.resolution},
            {"fine_factor", p.fine_factor},
            {"fine_length", p.fine_length},
            {"delta_c", p.delta_c},
            {"delta_theta", p.delta_theta}};
}

} // namespace shrinker
