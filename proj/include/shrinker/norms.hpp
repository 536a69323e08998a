#pragma once

// Weighted Hölder norms of mesh fields. Discrete proxy: for each centre x the
// local C^{k,alpha} norm over the unit ball B(x) is the sum of the sups of
// |D^j f| over the ball plus the largest quotient |D^k f(q) - D^k f(x)| / d^alpha
// with q in the ball; balls are Euclidean in the chosen scale.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "geometry.hpp"
#include "mesh.hpp"
#include "params.hpp"

namespace shrinker {

enum class WeightId { exp_gamma_s, exp_mixed_b0, exp_mixed_b2, radial_star, cone };

inline const char* weight_name(WeightId w)
{
    switch (w) {
    case WeightId::exp_gamma_s: return "exp-gamma-s";
    case WeightId::exp_mixed_b0: return "exp-mixed-b0";
    case WeightId::exp_mixed_b2: return "exp-mixed-b2";
    case WeightId::radial_star: return "radial-star";
    case WeightId::cone: return "cone";
    }
    return "?";
}

inline WeightId parse_weight(const std::string& s)
{
    for (WeightId w : {WeightId::exp_gamma_s, WeightId::exp_mixed_b0, WeightId::exp_mixed_b2, WeightId::radial_star,
                       WeightId::cone})
        if (s == weight_name(w)) return w;
    throw DomainError("unknown weight id '" + s + "'");
}

struct NormSpec {
    int order = 0;
    double alpha = 0.5;
    WeightId weight = WeightId::exp_gamma_s;
    Scale scale = Scale::large;

    void validate() const
    {
        if (order != 0 && order != 2) throw DomainError("NormSpec: order must be 0 or 2");
        if (!(alpha > 0 && alpha < 1)) throw DomainError("NormSpec: alpha must lie in (0,1)");
        bool plane = weight == WeightId::radial_star || weight == WeightId::cone;
        if (plane != (scale == Scale::small)) throw DomainError("NormSpec: weight id does not match the scale");
        if (weight == WeightId::cone && order != 2) throw DomainError("NormSpec: the cone norm has order 2");
    }
};

struct NormReport {
    double value = 0;
    int argmax = -1;  // centre attaining the sup
    double s_at = 0;
};

/// b_0 = e^{-5 delta_s / tau} and b_2 = b_0 / tau^10.
inline double weight_b0(const ConstructionParams& p) { return std::exp(-p.s_max()); }
inline double weight_b2(const ConstructionParams& p) { return weight_b0(p) / std::pow(p.tau(), 10); }

inline bool in_norm_domain(Region r, WeightId w)
{
    switch (w) {
    case WeightId::exp_gamma_s: return on_sigma(r);
    case WeightId::exp_mixed_b0:
    case WeightId::exp_mixed_b2: return r != Region::plane;
    default: return r == Region::plane;
    }
}

/// Weight f(x) of the norm sup f^{-1}(x) |...|; for the plane norms the powers of
/// |xi| are applied per derivative order instead.
inline double norm_weight(const SurfaceMesh& M, int v, WeightId w, const ConstructionParams& p)
{
    double e = std::exp(-p.gamma * std::max(0.0, M.s[v]));
    switch (w) {
    case WeightId::exp_gamma_s: return e;
    case WeightId::exp_mixed_b0: return std::max(e, weight_b0(p));
    case WeightId::exp_mixed_b2: return std::max(e, weight_b2(p));
    default: return 1.0;
    }
}

namespace detail {

/// Uniform grid of points for radius queries.
class BallIndex {
public:
    BallIndex(const std::vector<Vec3>& P, const std::vector<int>& ids, double cell) : P_(P), h_(cell)
    {
        for (int i : ids) cells_[key(P[i])].push_back(i);
    }

    template <class F>
    void for_each_within(const Vec3& c, double r, F&& f) const
    {
        int k = static_cast<int>(std::ceil(r / h_));
        auto base = coords(c);
        for (int i = -k; i <= k; ++i)
            for (int j = -k; j <= k; ++j)
                for (int l = -k; l <= k; ++l) {
                    auto it = cells_.find(pack(base[0] + i, base[1] + j, base[2] + l));
                    if (it == cells_.end()) continue;
                    for (int q : it->second) {
                        double d = (P_[q] - c).norm();
                        if (d <= r) f(q, d);
                    }
                }
    }

private:
    std::array<long long, 3> coords(const Vec3& p) const
    {
        return {static_cast<long long>(std::floor(p.x() / h_)), static_cast<long long>(std::floor(p.y() / h_)),
                static_cast<long long>(std::floor(p.z() / h_))};
    }
    static long long pack(long long i, long long j, long long l)
    {
        return ((i + (1 << 20)) << 42) ^ ((j + (1 << 20)) << 21) ^ (l + (1 << 20));
    }
    long long key(const Vec3& p) const
    {
        auto c = coords(p);
        return pack(c[0], c[1], c[2]);
    }

    const std::vector<Vec3>& P_;
    double h_;
    std::unordered_map<long long, std::vector<int>> cells_;
};

// Per-vertex derivative data of one field: |D^j f| for j <= order and the
// top-order quantity used in Hölder quotients (value, or Hessian tensor).
struct JetTable {
    std::vector<std::array<double, 3>> mag;
    std::vector<double> top_value;
    std::vector<Mat3> top_hessian;
};

// Jets of a symmetric field at the listed vertices. On symmetric meshes the jet
// at g p is chi(g) (A_g grad, A_g Hess A_g^T) of the jet at p, so fits run at
// orbit representatives only.
inline std::vector<FieldJet> symmetric_jets(const SurfaceMesh& M, const MeshAdjacency& adj,
                                            const std::vector<double>& f, const std::vector<int>& verts)
{
    std::vector<FieldJet> jet(M.V.size());
    std::vector<char> in(M.V.size(), 0), done(M.V.size(), 0);
    for (int v : verts) in[v] = 1;
    auto direct = [&](int v) {
        if (done[v]) return;
        jet[v] = field_jet(vertex_frame(M, adj, M.V, v), M.V, adj, f, v);
        done[v] = 1;
    };
    for (int v : verts) {
        int r = M.has_symmetry() ? M.orbit_rep[M.orbit[v]] : v;
        if (r < 0 || !in[r] || r == v) {
            direct(v);
            continue;
        }
        direct(r);
        const Mat3& A = M.group[M.element[v]];
        const double chi = M.chi(v);
        jet[v].value = f[v];
        jet[v].gradient = chi * A * jet[r].gradient;
        jet[v].hessian = chi * A * jet[r].hessian * A.transpose();
    }
    return jet;
}

inline JetTable jet_table(const SurfaceMesh& M, const MeshAdjacency& adj, const std::vector<double>& f,
                          const std::vector<int>& verts, int order)
{
    JetTable t;
    t.mag.assign(M.V.size(), {0, 0, 0});
    t.top_value.assign(M.V.size(), 0);
    for (int v : verts) {
        t.mag[v][0] = std::abs(f[v]);
        t.top_value[v] = f[v];
    }
    if (order < 2) return t;
    t.top_hessian.assign(M.V.size(), Mat3::Zero());
    std::vector<FieldJet> jet = symmetric_jets(M, adj, f, verts);
    for (int v : verts) {
        t.mag[v][1] = jet[v].gradient.norm();
        t.mag[v][2] = jet[v].hessian.norm();
        t.top_hessian[v] = jet[v].hessian;
    }
    return t;
}

// Vertices with a finite value whose 2-ring values are finite too (needed for
// derivatives), restricted to the weight's domain.
inline std::vector<int> norm_vertices(const SurfaceMesh& M, const MeshAdjacency& adj, const std::vector<double>& f,
                                      WeightId w, int order)
{
    std::vector<int> out;
    for (std::size_t v = 0; v < M.V.size(); ++v) {
        if (!in_norm_domain(M.region[v], w) || !std::isfinite(f[v])) continue;
        bool ok = true;
        if (order == 2)
            for (int q : adj.ring2(static_cast<int>(v))) ok = ok && std::isfinite(f[q]);
        if (ok) out.push_back(static_cast<int>(v));
    }
    return out;
}

} // namespace detail

/// Weighted norm of a field on Sigma (exp-gamma-s), Sigma + caps + disk
/// (exp-mixed-*) or the outer plane (radial-star). The field is assumed to be
/// symmetric: centres are the orbit representatives.
inline NormReport weighted_norm(const SurfaceMesh& M, const MeshAdjacency& adj, const std::vector<double>& f,
                                const NormSpec& spec, const ConstructionParams& p)
{
    spec.validate();
    if (spec.weight == WeightId::cone) throw DomainError("weighted_norm: use cone_norm for the cone weight");
    const double tau = p.tau();
    std::vector<Vec3> X = M.V;
    if (spec.scale == Scale::large)
        for (auto& x : X) x /= tau;
    std::vector<int> dom = detail::norm_vertices(M, adj, f, spec.weight, spec.order);
    NormReport rep;
    if (dom.empty()) return rep;
    detail::JetTable jt = detail::jet_table(M, adj, f, dom, spec.order);
    // Derivatives were taken in small-scale coordinates; D^j picks up tau^j in
    // the large scale.
    const double unit = spec.scale == Scale::large ? tau : 1.0;
    std::vector<char> in(M.V.size(), 0);
    for (int v : dom) in[v] = 1;
    detail::BallIndex index(X, dom, 1.0);
    const bool star = spec.weight == WeightId::radial_star;
    const int k = spec.order;
    for (int v : dom)
        for (int j = 0; j <= k; ++j) {
            jt.mag[v][j] *= std::pow(unit, j);
            if (star) jt.mag[v][j] *= std::pow(X[v].norm(), 1 - k + j);
        }
    for (int c : evaluation_vertices(M)) {
        if (!in[c]) continue;
        double sup[3] = {0, 0, 0}, holder = 0;
        index.for_each_within(X[c], 1.0, [&](int q, double d) {
            for (int j = 0; j <= k; ++j) sup[j] = std::max(sup[j], jt.mag[q][j]);
            if (d <= 0) return;
            double diff = k == 0 ? std::abs(jt.top_value[q] - jt.top_value[c])
                                 : (jt.top_hessian[q] - jt.top_hessian[c]).norm() * unit * unit;
            holder = std::max(holder, diff / std::pow(d, spec.alpha));
        });
        double local;
        if (star) {
            local = std::max({sup[0], sup[1], sup[2], holder * std::pow(X[c].norm(), 1 + spec.alpha)});
        } else {
            local = (sup[0] + sup[1] + sup[2] + holder) / norm_weight(M, c, spec.weight, p);
        }
        if (local > rep.value) {
            rep.value = local;
            rep.argmax = c;
            rep.s_at = M.s[c];
        }
    }
    return rep;
}

inline NormReport weighted_norm(const SurfaceMesh& M, const MeshField& f, const NormSpec& spec,
                                const ConstructionParams& p)
{
    MeshAdjacency adj(M);
    return weighted_norm(M, adj, f.values, spec, p);
}

/// Cone part of a plane field: phi(theta) = v / |xi| on the outer rim, where
/// d_r(v / r) = 0, and the remainder w = v - phi |xi|.
struct ConeSplit {
    std::vector<double> theta, phi;  // sorted by theta
    std::vector<double> w;           // per vertex, NaN off the plane
};

inline ConeSplit cone_split(const SurfaceMesh& M, const std::vector<double>& v)
{
    ConeSplit out;
    std::vector<std::pair<double, double>> rim;
    for (std::size_t i = 0; i < M.V.size(); ++i)
        if (M.region[i] == Region::plane && M.is_rim(static_cast<int>(i)) && std::isfinite(v[i]))
            rim.push_back({std::atan2(M.V[i].y(), M.V[i].x()), v[i] / M.V[i].norm()});
    if (rim.empty()) throw DomainError("cone_split: no outer rim on the plane");
    std::sort(rim.begin(), rim.end());
    for (auto& [t, f] : rim) {
        out.theta.push_back(t);
        out.phi.push_back(f);
    }
    out.w.assign(M.V.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < M.V.size(); ++i) {
        if (M.region[i] != Region::plane || !std::isfinite(v[i])) continue;
        double t = std::atan2(M.V[i].y(), M.V[i].x());
        auto it = std::lower_bound(out.theta.begin(), out.theta.end(), t);
        std::size_t k = it - out.theta.begin();
        if (k == out.theta.size() || (k > 0 && t - out.theta[k - 1] < out.theta[k] - t)) --k;
        if (std::abs(out.theta[k] - t) > 1e-9) throw DomainError("cone_split: plane vertex off the rim directions");
        out.w[i] = v[i] - out.phi[k] * M.V[i].norm();
    }
    return out;
}

namespace detail {

// C^{2,alpha} norm of samples on an arc or the full circle.
inline double circle_c2alpha(const std::vector<double>& t, const std::vector<double>& f, double alpha)
{
    const std::size_t n = t.size();
    if (n < 3) return f.empty() ? 0.0 : std::abs(f[0]);
    bool periodic = t.back() - t.front() > 2 * kPi * (1 - 1.5 / n);
    std::vector<double> d1(n), d2(n);
    auto at = [&](long i, double& ti, double& fi) {
        long k = ((i % (long)n) + n) % n;
        ti = t[k] + 2 * kPi * std::floor(static_cast<double>(i) / n);
        fi = f[k];
    };
    for (std::size_t i = 0; i < n; ++i) {
        long c = static_cast<long>(i);
        if (!periodic) c = std::clamp<long>(c, 1, static_cast<long>(n) - 2);
        double t0, t1, t2, f0, f1, f2;
        at(c - 1, t0, f0);
        at(c, t1, f1);
        at(c + 1, t2, f2);
        double a = f0 / ((t0 - t1) * (t0 - t2)), b = f1 / ((t1 - t0) * (t1 - t2)), e = f2 / ((t2 - t0) * (t2 - t1));
        double x = t[i];
        d1[i] = a * (2 * x - t1 - t2) + b * (2 * x - t0 - t2) + e * (2 * x - t0 - t1);
        d2[i] = 2 * (a + b + e);
    }
    double sup0 = 0, sup1 = 0, sup2 = 0, hold = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sup0 = std::max(sup0, std::abs(f[i]));
        sup1 = std::max(sup1, std::abs(d1[i]));
        sup2 = std::max(sup2, std::abs(d2[i]));
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = t[j] - t[i];
            if (periodic) d = std::min(d, 2 * kPi - d);
            if (d > 0 && d <= 1) hold = std::max(hold, std::abs(d2[j] - d2[i]) / std::pow(d, alpha));
        }
    }
    return sup0 + sup1 + sup2 + hold;
}

} // namespace detail

struct ConeNormReport {
    double value = 0;
    double phi_part = 0;       // C^{2,alpha} of phi on the circle
    double w_part = 0;         // C^{2,alpha}(|xi|^{-1}) of w
    double hessian_part = 0;   // C^{0,alpha}_* of D^2 w
    double radial_part = 0;    // C^{0,alpha}_* of xi . grad w
};

/// The C^{2,alpha}_cone norm of a plane field (small scale).
inline ConeNormReport cone_norm(const SurfaceMesh& M, const MeshAdjacency& adj, const std::vector<double>& v,
                                double alpha = 0.5)
{
    ConeNormReport rep;
    ConeSplit cs = cone_split(M, v);
    rep.phi_part = detail::circle_c2alpha(cs.theta, cs.phi, alpha);
    std::vector<int> dom = detail::norm_vertices(M, adj, cs.w, WeightId::radial_star, 2);
    std::vector<FieldJet> jet = detail::symmetric_jets(M, adj, cs.w, dom);
    std::vector<char> in(M.V.size(), 0);
    for (int i : dom) in[i] = 1;
    detail::BallIndex index(M.V, dom, 1.0);
    for (int c : evaluation_vertices(M)) {
        if (!in[c]) continue;
        double r = M.V[c].norm();
        double s0 = 0, s1 = 0, s2 = 0, hw = 0, hh = 0, hr = 0;
        const double rad_c = M.V[c].dot(jet[c].gradient);
        index.for_each_within(M.V[c], 1.0, [&](int q, double d) {
            s0 = std::max(s0, std::abs(cs.w[q]));
            s1 = std::max(s1, jet[q].gradient.norm());
            s2 = std::max(s2, jet[q].hessian.norm());
            if (d <= 0) return;
            double da = std::pow(d, alpha);
            double dh = (jet[q].hessian - jet[c].hessian).norm() / da;
            hw = std::max(hw, dh);
            hh = std::max(hh, dh);
            hr = std::max(hr, std::abs(M.V[q].dot(jet[q].gradient) - rad_c) / da);
        });
        rep.w_part = std::max(rep.w_part, r * (s0 + s1 + s2 + hw));
        rep.hessian_part = std::max({rep.hessian_part, jet[c].hessian.norm() * r, hh * std::pow(r, 1 + alpha)});
        rep.radial_part = std::max({rep.radial_part, std::abs(rad_c) * r, hr * std::pow(r, 1 + alpha)});
    }
    rep.value = std::max({rep.phi_part, rep.w_part, rep.hessian_part, rep.radial_part});
    return rep;
}

/// Global norms of fields on the assembled surface. ||.||_0 is the larger of
/// tau ||v o H: C^{0,alpha}(Sigma + C + D, max(e^{-gamma s}, b0))|| and
/// b0^{-1} ||v: C^{0,alpha}_*(plane)||; ||.||_2 uses order 2, tau^{-1}, b2 and the
/// cone norm. The plain variant of ||.||_2 replaces b2 = b0 / tau^10 by b0.
enum class Norm2Variant { scaled, plain };

struct GlobalNormReport {
    double value = 0;
    double inner = 0;  // Sigma, caps and disk part, with its tau factor
    double outer = 0;  // outer plane part, with its b factor
    int argmax = -1;
};

inline GlobalNormReport norm0(const SurfaceMesh& M, const MeshAdjacency& adj, const std::vector<double>& f,
                              const ConstructionParams& p, double alpha = 0.5)
{
    GlobalNormReport r;
    NormReport in = weighted_norm(M, adj, f, NormSpec{0, alpha, WeightId::exp_mixed_b0, Scale::large}, p);
    NormReport out = weighted_norm(M, adj, f, NormSpec{0, alpha, WeightId::radial_star, Scale::small}, p);
    r.inner = p.tau() * in.value;
    r.outer = out.value / weight_b0(p);
    r.value = std::max(r.inner, r.outer);
    r.argmax = r.inner >= r.outer ? in.argmax : out.argmax;
    return r;
}

inline GlobalNormReport norm2(const SurfaceMesh& M, const MeshAdjacency& adj, const std::vector<double>& f,
                              const ConstructionParams& p, Norm2Variant variant = Norm2Variant::scaled,
                              double alpha = 0.5)
{
    const bool scaled = variant == Norm2Variant::scaled;
    GlobalNormReport r;
    NormReport in = weighted_norm(
        M, adj, f, NormSpec{2, alpha, scaled ? WeightId::exp_mixed_b2 : WeightId::exp_mixed_b0, Scale::large}, p);
    r.inner = in.value / p.tau();
    r.argmax = in.argmax;
    bool has_plane = false;
    for (Region g : M.region) has_plane = has_plane || g == Region::plane;
    if (has_plane) r.outer = cone_norm(M, adj, f, alpha).value / (scaled ? weight_b2(p) : weight_b0(p));
    r.value = std::max(r.inner, r.outer);
    return r;
}

} // namespace shrinker
