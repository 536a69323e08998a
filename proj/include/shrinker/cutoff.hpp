#pragma once

#include <cmath>

namespace shrinker {

namespace detail {

inline double smooth_step_kernel(double t) { return t > 0 ? std::exp(-1.0 / t) : 0.0; }

} // namespace detail

/// Smooth increasing function, 0 on (-inf, 1/3], 1 on [2/3, inf).
inline double base_cutoff(double x)
{
    double a = detail::smooth_step_kernel(3 * x - 1);
    double b = detail::smooth_step_kernel(2 - 3 * x);
    return a / (a + b);
}

/// Transition from 0 at a_end to 1 at b_end: base_cutoff((s - a_end) / (b_end - a_end)).
inline double cutoff(double a_end, double b_end, double s) { return base_cutoff((s - a_end) / (b_end - a_end)); }

} // namespace shrinker
