#pragma once

// Discrete differential geometry on SurfaceMesh: normals and curvatures from
// local polynomial fits, the shrinker residual, the w-field and balancing.

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "mesh.hpp"

namespace shrinker {

enum class FieldKind { residual, correction, w, generic };

struct MeshField {
    std::vector<double> values;
    FieldKind kind = FieldKind::generic;

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }
};

inline void write_field_csv(std::ostream& os, const MeshField& f)
{
    os << "vertex_id,value\n";
    for (std::size_t i = 0; i < f.size(); ++i) os << i << ',' << fmt_double(f[i]) << '\n';
}

/// Adjacency with cached 2-rings.
struct MeshAdjacency {
    std::vector<std::vector<int>> nb;
    std::vector<std::vector<int>> vf;  // incident faces
    mutable std::vector<std::vector<int>> r2;

    explicit MeshAdjacency(const SurfaceMesh& M) : nb(vertex_neighbors(M)), vf(M.V.size()), r2(M.V.size())
    {
        for (std::size_t f = 0; f < M.F.size(); ++f)
            for (int k = 0; k < 3; ++k) vf[M.F[f][k]].push_back(static_cast<int>(f));
    }

    const std::vector<int>& ring2(int v) const
    {
        if (r2[v].empty()) r2[v] = k_ring(nb, v, 2);
        return r2[v];
    }
};

/// Vertices at which per-vertex quantities are computed: orbit representatives
/// on symmetric meshes, every vertex otherwise.
inline std::vector<int> evaluation_vertices(const SurfaceMesh& M)
{
    std::vector<int> out;
    if (M.has_symmetry()) {
        for (int r : M.orbit_rep)
            if (r >= 0) out.push_back(r);
    } else {
        for (std::size_t v = 0; v < M.V.size(); ++v) out.push_back(static_cast<int>(v));
    }
    return out;
}

/// Fill values at every vertex from values at orbit representatives.
inline void expand_from_reps(const SurfaceMesh& M, std::vector<double>& f)
{
    if (!M.has_symmetry()) return;
    for (std::size_t v = 0; v < M.V.size(); ++v) {
        int o = M.orbit[v];
        if (M.orbit_rep[o] < 0) f[v] = std::numeric_limits<double>::quiet_NaN();
        else f[v] = M.orbit_odd[o] ? 0.0 : M.chi(static_cast<int>(v)) * f[M.orbit_rep[o]];
    }
}

struct VertexFrame {
    Vec3 normal = Vec3::Zero();
    double H = 0;
    double A2 = 0;
    // Tangent chart at the vertex: X(u, w) = X0 + u e1 + w e2 + h(u, w) n0.
    Vec3 e1, e2, n0;
    double hu = 0, hw = 0;
    double huu = 0, huw = 0, hww = 0;
};

namespace detail {

inline Vec3 area_normal(const SurfaceMesh& M, const MeshAdjacency& adj, const std::vector<Vec3>& X, int v)
{
    Vec3 n = Vec3::Zero();
    for (int f : adj.vf[v]) {
        const auto& t = M.F[f];
        n += (X[t[1]] - X[t[0]]).cross(X[t[2]] - X[t[0]]);
    }
    double l = n.norm();
    if (!(l > 0)) throw MeshError("vertex_frame: zero area normal at vertex " + std::to_string(v), {v});
    return n / l;
}

inline void tangent_basis(const Vec3& n, Vec3& e1, Vec3& e2)
{
    Vec3 a = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    e1 = (a - a.dot(n) * n).normalized();
    e2 = n.cross(e1);
}

// Least-squares polynomial through the origin in scaled local coordinates;
// columns u, w, u^2, uw, w^2 and, with enough well-spread points, the four
// cubics. Falls back to the quadric when the cubic fit is rank-deficient.
// Solves for every column of Z (one right-hand side per column).
inline Eigen::MatrixXd local_poly_fit_columns(const std::vector<double>& U, const std::vector<double>& W,
                                              const Eigen::MatrixXd& Z, double scale, int v)
{
    const int n = static_cast<int>(U.size());
    if (n < 5) throw MeshError("vertex_frame: fewer than five neighbours at vertex " + std::to_string(v), {v});
    for (int cols : {9, 5}) {
        if (cols == 9 && n < 12) continue;
        Eigen::MatrixXd A(n, cols);
        for (int i = 0; i < n; ++i) {
            double u = U[i] / scale, w = W[i] / scale;
            A(i, 0) = u;
            A(i, 1) = w;
            A(i, 2) = u * u;
            A(i, 3) = u * w;
            A(i, 4) = w * w;
            if (cols == 9) {
                A(i, 5) = u * u * u;
                A(i, 6) = u * u * w;
                A(i, 7) = u * w * w;
                A(i, 8) = w * w * w;
            }
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        qr.setThreshold(1e-8);
        if (qr.rank() < cols) continue;
        Eigen::MatrixXd c = qr.solve(Z);
        // Coefficients of degree d pick up scale^{-d}.
        for (int k = 0; k < cols; ++k) c.row(k) /= std::pow(scale, k < 2 ? 1 : (k < 5 ? 2 : 3));
        return c;
    }
    throw MeshError("vertex_frame: rank-deficient fit at vertex " + std::to_string(v), {v});
}

inline Eigen::VectorXd local_poly_fit(const std::vector<double>& U, const std::vector<double>& W,
                                      const std::vector<double>& Z, double scale, int v)
{
    Eigen::Map<const Eigen::VectorXd> z(Z.data(), static_cast<Eigen::Index>(Z.size()));
    return local_poly_fit_columns(U, W, Eigen::MatrixXd(z), scale, v).col(0);
}

} // namespace detail

/// Normal, mean curvature (trace of the shape operator; positive on a sphere
/// with inward normal) and |A|^2 from a fit over the 2-ring.
inline VertexFrame vertex_frame(const SurfaceMesh& M, const MeshAdjacency& adj, const std::vector<Vec3>& X, int v)
{
    VertexFrame fr;
    fr.n0 = detail::area_normal(M, adj, X, v);
    detail::tangent_basis(fr.n0, fr.e1, fr.e2);
    const auto& ring = adj.ring2(v);
    std::vector<double> U, W, Z;
    double scale = 0;
    for (int q : ring) {
        Vec3 d = X[q] - X[v];
        U.push_back(d.dot(fr.e1));
        W.push_back(d.dot(fr.e2));
        Z.push_back(d.dot(fr.n0));
        scale += d.norm();
    }
    scale = ring.empty() ? 1.0 : scale / ring.size();
    Eigen::VectorXd c = detail::local_poly_fit(U, W, Z, scale, v);
    double a1 = c(0), a2 = c(1);
    Eigen::Matrix2d I, II;
    I << 1 + a1 * a1, a1 * a2, a1 * a2, 1 + a2 * a2;
    double g = std::sqrt(1 + a1 * a1 + a2 * a2);
    II << 2 * c(2), c(3), c(3), 2 * c(4);
    II /= g;
    Eigen::Matrix2d S = I.inverse() * II;
    fr.H = S.trace();
    fr.A2 = (S * S).trace();
    fr.normal = (fr.n0 - a1 * fr.e1 - a2 * fr.e2) / g;
    fr.hu = a1;
    fr.hw = a2;
    fr.huu = 2 * c(2);
    fr.huw = c(3);
    fr.hww = 2 * c(4);
    return fr;
}

inline VertexFrame vertex_frame(const SurfaceMesh& M, int v)
{
    MeshAdjacency adj(M);
    return vertex_frame(M, adj, M.V, v);
}

/// Frames at the evaluation vertices (other entries left default).
inline std::vector<VertexFrame> vertex_frames(const SurfaceMesh& M, const MeshAdjacency& adj,
                                              const std::vector<Vec3>& X)
{
    std::vector<VertexFrame> out(M.V.size());
    for (int v : evaluation_vertices(M)) out[v] = vertex_frame(M, adj, X, v);
    return out;
}

/// Surface gradient of a scalar field at v (3-vector), from a fit over the 2-ring
/// in the vertex's chart.
inline Vec3 field_gradient(const VertexFrame& fr, const std::vector<Vec3>& X, const MeshAdjacency& adj,
                           const std::vector<double>& f, int v)
{
    const auto& ring = adj.ring2(v);
    std::vector<double> U, W, Z;
    double scale = 0;
    for (int q : ring) {
        Vec3 d = X[q] - X[v];
        U.push_back(d.dot(fr.e1));
        W.push_back(d.dot(fr.e2));
        Z.push_back(f[q] - f[v]);
        scale += d.norm();
    }
    scale = ring.empty() ? 1.0 : scale / ring.size();
    Eigen::VectorXd c = detail::local_poly_fit(U, W, Z, scale, v);
    Eigen::Matrix2d I;
    I << 1 + fr.hu * fr.hu, fr.hu * fr.hw, fr.hu * fr.hw, 1 + fr.hw * fr.hw;
    Eigen::Vector2d gi = I.inverse() * Eigen::Vector2d(c(0), c(1));
    return gi(0) * (fr.e1 + fr.hu * fr.n0) + gi(1) * (fr.e2 + fr.hw * fr.n0);
}

/// Linear form behind field_gradient: grad f(v) = sum_k coef[k] (f[ring[k]] - f[v])
/// with ring = adj.ring2(v).
inline std::vector<Vec3> gradient_stencil(const VertexFrame& fr, const std::vector<Vec3>& X,
                                          const MeshAdjacency& adj, int v)
{
    const auto& ring = adj.ring2(v);
    const int n = static_cast<int>(ring.size());
    std::vector<double> U, W;
    double scale = 0;
    for (int q : ring) {
        Vec3 d = X[q] - X[v];
        U.push_back(d.dot(fr.e1));
        W.push_back(d.dot(fr.e2));
        scale += d.norm();
    }
    scale = ring.empty() ? 1.0 : scale / n;
    Eigen::MatrixXd c = detail::local_poly_fit_columns(U, W, Eigen::MatrixXd::Identity(n, n), scale, v);
    Eigen::Matrix2d I;
    I << 1 + fr.hu * fr.hu, fr.hu * fr.hw, fr.hu * fr.hw, 1 + fr.hw * fr.hw;
    Eigen::Matrix2d Ii = I.inverse();
    const Vec3 t1 = fr.e1 + fr.hu * fr.n0, t2 = fr.e2 + fr.hw * fr.n0;
    std::vector<Vec3> out(n);
    for (int k = 0; k < n; ++k) {
        Eigen::Vector2d gi = Ii * Eigen::Vector2d(c(0, k), c(1, k));
        out[k] = gi(0) * t1 + gi(1) * t2;
    }
    return out;
}

/// Value, surface gradient and covariant Hessian (as an ambient tensor) of a
/// scalar field at a vertex.
struct FieldJet {
    double value = 0;
    Vec3 gradient = Vec3::Zero();
    Mat3 hessian = Mat3::Zero();
};

inline FieldJet field_jet(const VertexFrame& fr, const std::vector<Vec3>& X, const MeshAdjacency& adj,
                          const std::vector<double>& f, int v)
{
    const auto& ring = adj.ring2(v);
    std::vector<double> U, W, Z;
    double scale = 0;
    for (int q : ring) {
        Vec3 d = X[q] - X[v];
        U.push_back(d.dot(fr.e1));
        W.push_back(d.dot(fr.e2));
        Z.push_back(f[q] - f[v]);
        scale += d.norm();
    }
    scale = ring.empty() ? 1.0 : scale / ring.size();
    Eigen::VectorXd c = detail::local_poly_fit(U, W, Z, scale, v);
    Eigen::Matrix2d g;
    g << 1 + fr.hu * fr.hu, fr.hu * fr.hw, fr.hu * fr.hw, 1 + fr.hw * fr.hw;
    Eigen::Matrix2d gi = g.inverse();
    Eigen::Vector2d df(c(0), c(1)), dh(fr.hu, fr.hw);
    Eigen::Matrix2d d2f, d2h;
    d2f << 2 * c(2), c(3), c(3), 2 * c(4);
    d2h << fr.huu, fr.huw, fr.huw, fr.hww;
    // Christoffel symbols of a graph: Gamma^k_ij = g^kl h_l h_ij.
    Eigen::Vector2d gk = gi * dh;
    Eigen::Matrix2d hess = d2f - (gk.dot(df)) * d2h;
    Eigen::Matrix<double, 3, 2> T;
    T.col(0) = fr.e1 + fr.hu * fr.n0;
    T.col(1) = fr.e2 + fr.hw * fr.n0;
    Eigen::Matrix<double, 3, 2> dual = T * gi;
    FieldJet j;
    j.value = f[v];
    j.gradient = dual * df;
    j.hessian = dual * hess * dual.transpose();
    return j;
}

enum class Scale { small, large };

/// Small scale: H + X.nu. Large scale: tau times that (H + tau^2 X.nu in large
/// coordinates).
inline MeshField residual(const SurfaceMesh& M, const MeshAdjacency& adj, const std::vector<Vec3>& X,
                          Scale scale = Scale::small, double tau = 1.0)
{
    MeshField E;
    E.kind = FieldKind::residual;
    E.values.assign(M.V.size(), 0.0);
    for (int v : evaluation_vertices(M)) {
        VertexFrame fr = vertex_frame(M, adj, X, v);
        E[v] = fr.H + X[v].dot(fr.normal);
        if (scale == Scale::large) E[v] *= tau;
    }
    expand_from_reps(M, E.values);
    return E;
}

inline MeshField residual(const SurfaceMesh& M, Scale scale = Scale::small, double tau = 1.0)
{
    MeshAdjacency adj(M);
    return residual(M, adj, M.V, scale, tau);
}

/// Mean curvature at every vertex (minimal-surface part only).
inline MeshField mean_curvature(const SurfaceMesh& M, const MeshAdjacency& adj)
{
    MeshField H;
    H.values.assign(M.V.size(), 0.0);
    for (int v : evaluation_vertices(M)) H[v] = vertex_frame(M, adj, M.V, v).H;
    expand_from_reps(M, H.values);
    return H;
}

/// Central difference (H(b + db) - H(b - db)) / (2 db) of two meshes with the same connectivity.
inline MeshField w_field(const SurfaceMesh& minus, const SurfaceMesh& plus, double db)
{
    if (minus.V.size() != plus.V.size() || minus.F != plus.F)
        throw MeshError("w_field: meshes do not share connectivity");
    if (!(db > 0)) throw DomainError("w_field: db must be positive");
    MeshAdjacency adj(minus);
    MeshField hm = mean_curvature(minus, adj), hp = mean_curvature(plus, adj);
    MeshField w;
    w.kind = FieldKind::w;
    w.values.resize(minus.V.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = (hp[i] - hm[i]) / (2 * db);
    return w;
}

/// Vertex areas (one third of incident face areas).
inline std::vector<double> vertex_areas(const SurfaceMesh& M)
{
    std::vector<double> a(M.V.size(), 0.0);
    for (std::size_t f = 0; f < M.F.size(); ++f) {
        double A = face_area(M, static_cast<int>(f)) / 3;
        for (int k = 0; k < 3; ++k) a[M.F[f][k]] += A;
    }
    return a;
}

/// Face-based quadrature of a per-vertex integrand over faces whose centroid
/// satisfies the predicate, in fixed face order. NaN entries drop their faces.
template <typename Pred>
double integrate_faces(const SurfaceMesh& M, const std::vector<double>& g, Pred&& keep)
{
    double sum = 0;
    for (std::size_t f = 0; f < M.F.size(); ++f) {
        const auto& t = M.F[f];
        Vec3 c = (M.V[t[0]] + M.V[t[1]] + M.V[t[2]]) / 3;
        if (!keep(c)) continue;
        double m = g[t[0]] + g[t[1]] + g[t[2]];
        if (std::isnan(m)) continue;
        sum += face_area(M, static_cast<int>(f)) * (g[t[0]] + g[t[1]] + g[t[2]]) / 3;
    }
    return sum;
}

struct BalancingResult {
    double integral = 0;   // integral of H (e_x . nu) over one period
    double wing_sum = 0;   // 2 pi times the sum of wing directions . e_x
    std::vector<Vec3> wing_directions;
};

/// Balancing on a flat (unwrapped) period y in [y0, y0 + 2 pi). Wing directions
/// are read from the last two s rings of each wing.
inline BalancingResult balancing_check(const SurfaceMesh& M, double y0)
{
    MeshAdjacency adj(M);
    std::vector<double> g(M.V.size(), 0.0);
    for (std::size_t v = 0; v < M.V.size(); ++v) {
        VertexFrame fr = vertex_frame(M, adj, M.V, static_cast<int>(v));
        g[v] = fr.H * fr.normal.x();
    }
    BalancingResult out;
    // One-sided fits on the truncation rings are first order at best; faces
    // touching the boundary are left out (the wings are flat there).
    auto bnd = boundary_flags(M);
    std::vector<double> gi = g;
    for (std::size_t v = 0; v < M.V.size(); ++v)
        if (bnd[v]) gi[v] = std::numeric_limits<double>::quiet_NaN();
    out.integral = integrate_faces(M, gi, [&](const Vec3& c) { return c.y() >= y0 && c.y() < y0 + 2 * kPi; });
    double s_end = *std::max_element(M.s.begin(), M.s.end());
    double s_prev = -1e300;
    for (double s : M.s)
        if (s < s_end - 1e-12) s_prev = std::max(s_prev, s);
    for (Region r : {Region::wing_top, Region::wing_bottom, Region::wing_outer, Region::wing_inner}) {
        Vec3 e = Vec3::Zero(), p = Vec3::Zero();
        int ne = 0, np = 0;
        for (std::size_t v = 0; v < M.V.size(); ++v) {
            if (M.region[v] != r || M.V[v].y() < y0 || M.V[v].y() >= y0 + 2 * kPi) continue;
            if (std::abs(M.s[v] - s_end) < 1e-12) e += M.V[v], ++ne;
            if (std::abs(M.s[v] - s_prev) < 1e-12) p += M.V[v], ++np;
        }
        if (ne == 0 || np == 0) throw MeshError("balancing_check: wing rings not found");
        Vec3 d = e / ne - p / np;
        d.y() = 0;
        out.wing_directions.push_back(d.normalized());
        out.wing_sum += 2 * kPi * out.wing_directions.back().x();
    }
    return out;
}

struct Projection {
    MeshField field;
    double deviation = 0;
};

/// Average chi(g) f(g p) over each orbit; odd orbits are set to zero.
inline Projection symmetry_project(const SurfaceMesh& M, const MeshField& f)
{
    Projection out{f, 0.0};
    if (!M.has_symmetry()) return out;
    const int no = static_cast<int>(M.orbit_rep.size());
    std::vector<double> sum(no, 0.0);
    std::vector<int> cnt(no, 0);
    for (std::size_t v = 0; v < M.V.size(); ++v) {
        sum[M.orbit[v]] += M.chi(static_cast<int>(v)) * f[v];
        ++cnt[M.orbit[v]];
    }
    for (std::size_t v = 0; v < M.V.size(); ++v) {
        int o = M.orbit[v];
        double val = M.orbit_odd[o] ? 0.0 : M.chi(static_cast<int>(v)) * sum[o] / cnt[o];
        out.deviation = std::max(out.deviation, std::abs(val - f[v]));
        out.field[v] = val;
    }
    return out;
}

} // namespace shrinker
