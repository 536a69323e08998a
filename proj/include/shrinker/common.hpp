#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace shrinker {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSqrt2 = std::numbers::sqrt2;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input outside the domain of an operation (e.g. r <= 0 in the geodesic system).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Root bracketing failed; carries the scanned values for diagnostics.
class BracketError : public Error {
public:
    BracketError(const std::string& what, std::vector<double> scanned_args, std::vector<double> scanned_values)
        : Error(what), args(std::move(scanned_args)), values(std::move(scanned_values))
    {
    }
    std::vector<double> args;
    std::vector<double> values;
};

/// An iteration failed to converge; carries the residual history.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> residual_history = {})
        : Error(what), history(std::move(residual_history))
    {
    }
    std::vector<double> history;
};

/// Mesh construction or topology failure.
class MeshError : public Error {
public:
    MeshError(const std::string& what, std::vector<int> offending = {})
        : Error(what), items(std::move(offending))
    {
    }
    std::vector<int> items;
};

/// Linear solve breakdown: singular or ill-posed system.
class SolverError : public Error {
public:
    using Error::Error;
};

template <typename T>
constexpr T sqr(T v)
{
    return v * v;
}

/// Shortest round-trip decimal for a double, independent of the locale.
inline std::string fmt_double(double v)
{
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

} // namespace shrinker
