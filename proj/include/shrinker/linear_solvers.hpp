#pragma once

// Linearized operator L v = Delta v + |A|^2 v + v - X.grad v (small scale) on the
// assembled surface, piece solves with Dirichlet, cone and bordered conditions,
// the cone decomposition of plane fields and the patching iteration.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <chrono>
#include <memory>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "cutoff.hpp"
#include "geometry.hpp"
#include "mesh.hpp"
#include "norms.hpp"
#include "params.hpp"

namespace shrinker {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Unknowns of a field: one per orbit not fixed by a side swap (symmetric
/// fields), or one per vertex when the mesh has no symmetry data or reduction
/// is off.
struct DofMap {
    bool reduced = false;
    std::vector<int> of_class;  // orbit (reduced) or vertex -> dof, -1 where the value is 0
    std::vector<int> rep;       // dof -> vertex carrying its row

    int size() const { return static_cast<int>(rep.size()); }
    int dof(const SurfaceMesh& M, int v) const { return of_class[reduced ? M.orbit[v] : v]; }
    double factor(const SurfaceMesh& M, int v) const { return reduced ? M.chi(v) : 1.0; }

    Eigen::VectorXd restrict(const std::vector<double>& f) const
    {
        Eigen::VectorXd x(size());
        for (int d = 0; d < size(); ++d) x(d) = f[rep[d]];
        return x;
    }

    std::vector<double> expand(const SurfaceMesh& M, const Eigen::VectorXd& x) const
    {
        std::vector<double> f(M.V.size(), 0.0);
        for (std::size_t v = 0; v < f.size(); ++v) {
            int d = dof(M, static_cast<int>(v));
            if (d >= 0) f[v] = factor(M, static_cast<int>(v)) * x(d);
        }
        return f;
    }
};

inline DofMap make_dofs(const SurfaceMesh& M, bool reduce = true)
{
    DofMap d;
    d.reduced = reduce && M.has_symmetry();
    if (!d.reduced) {
        d.of_class.resize(M.V.size());
        std::iota(d.of_class.begin(), d.of_class.end(), 0);
        d.rep = d.of_class;
        return d;
    }
    d.of_class.assign(M.orbit_count(), -1);
    for (int o = 0; o < M.orbit_count(); ++o) {
        if (M.orbit_rep[o] < 0)
            throw MeshError("make_dofs: orbit without a complete representative (use the full surface)", {o});
        if (M.orbit_odd[o]) continue;
        d.of_class[o] = d.size();
        d.rep.push_back(M.orbit_rep[o]);
    }
    return d;
}

/// Unit normals at every vertex; on symmetric meshes nu(g p) = chi(g) A_g nu(p).
inline std::vector<Vec3> vertex_normals(const SurfaceMesh& M, const MeshAdjacency& adj, const std::vector<Vec3>& X)
{
    std::vector<Vec3> n(M.V.size());
    if (!M.has_symmetry()) {
        for (std::size_t v = 0; v < n.size(); ++v) n[v] = vertex_frame(M, adj, X, static_cast<int>(v)).normal;
        return n;
    }
    std::vector<Vec3> at(M.orbit_count(), Vec3::Constant(std::numeric_limits<double>::quiet_NaN()));
    for (int o = 0; o < M.orbit_count(); ++o)
        if (M.orbit_rep[o] >= 0) at[o] = vertex_frame(M, adj, X, M.orbit_rep[o]).normal;
    for (std::size_t v = 0; v < n.size(); ++v) {
        int i = static_cast<int>(v);
        n[v] = M.chi(i) * (M.group[M.element[v]] * at[M.orbit[v]]);
    }
    return n;
}

/// Cotan: cotangent Laplacian with lumped areas, fitted |A|^2 and a fitted
/// tangential gradient. Consistent: the exact Jacobian of the discrete residual
/// H + X.nu under normal displacement, by central differences of the local fits.
enum class OperatorKind { cotan, consistent };

struct LinearOperator {
    OperatorKind kind = OperatorKind::cotan;
    Scale scale = Scale::small;
    double tau = 1;
    DofMap dofs;
    SparseMatrix A;  // rows at dof representatives
    // Outer rim condition d_r(v / r) = g: per dof, coefficients on dofs.
    std::vector<std::vector<std::pair<int, double>>> rim_row;

    bool is_rim(int d) const { return !rim_row[d].empty(); }
    int size() const { return dofs.size(); }
};

namespace detail {

inline void add_entry(std::vector<Triplet>& T, const SurfaceMesh& M, const DofMap& dofs, int row, int q, double c)
{
    int d = dofs.dof(M, q);
    if (d >= 0 && c != 0) T.emplace_back(row, d, dofs.factor(M, q) * c);
}

inline void cotan_row(std::vector<Triplet>& T, const SurfaceMesh& M, const MeshAdjacency& adj, const DofMap& dofs,
                      int row, int v)
{
    const double min_angle = kPi / 180;
    double area = 0, diag = 0;
    std::vector<int> bad;
    for (int f : adj.vf[v]) {
        Tri t = M.F[f];
        while (t[0] != v) std::rotate(t.begin(), t.begin() + 1, t.end());
        const Vec3 &p = M.V[t[0]], &a = M.V[t[1]], &b = M.V[t[2]];
        area += face_area(M, f) / 3;
        auto cot = [](const Vec3& o, const Vec3& x, const Vec3& y) {
            Vec3 u = x - o, w = y - o;
            return u.dot(w) / u.cross(w).norm();
        };
        auto angle = [](const Vec3& o, const Vec3& x, const Vec3& y) {
            Vec3 u = x - o, w = y - o;
            return std::atan2(u.cross(w).norm(), u.dot(w));
        };
        if (std::min({angle(p, a, b), angle(a, b, p), angle(b, p, a)}) < min_angle) bad.push_back(f);
        double wa = 0.5 * cot(b, p, a), wb = 0.5 * cot(a, b, p);
        add_entry(T, M, dofs, row, t[1], wa);
        add_entry(T, M, dofs, row, t[2], wb);
        diag -= wa + wb;
    }
    if (!bad.empty()) throw MeshError("assemble_operator: triangles with an angle below 1 degree", bad);
    for (auto it = T.end(); it != T.begin() && (it - 1)->row() == row;) {
        --it;
        *it = Triplet(it->row(), it->col(), it->value() / area);
    }
    VertexFrame fr = vertex_frame(M, adj, M.V, v);
    diag = diag / area + fr.A2 + 1;
    const auto& ring = adj.ring2(v);
    std::vector<Vec3> g = gradient_stencil(fr, M.V, adj, v);
    const Vec3& X = M.V[v];
    for (std::size_t k = 0; k < ring.size(); ++k) {
        double c = -X.dot(g[k]);
        add_entry(T, M, dofs, row, ring[k], c);
        diag -= c;
    }
    add_entry(T, M, dofs, row, v, diag);
}

// Flat 2-ring: to first order a frame rotation only adds linear data, which
// the fit reproduces, so the Jacobian is H' = 2 (c_uu + c_ww) minus the
// tangential part of X_v times the fitted slopes, plus 1 on the diagonal.
inline bool flat_row(std::vector<Triplet>& T, const SurfaceMesh& M, const MeshAdjacency& adj, const DofMap& dofs,
                     const std::vector<Vec3>& nu, int row, int v)
{
    Vec3 n0 = area_normal(M, adj, M.V, v), e1, e2;
    tangent_basis(n0, e1, e2);
    const auto& ring = adj.ring2(v);
    std::vector<double> U, W;
    double scale = 0;
    for (int q : ring) {
        Vec3 d = M.V[q] - M.V[v];
        if (std::abs(d.dot(n0)) > 1e-13 * d.norm()) return false;
        U.push_back(d.dot(e1));
        W.push_back(d.dot(e2));
        scale += d.norm();
    }
    scale = ring.empty() ? 1.0 : scale / ring.size();
    const int k = static_cast<int>(ring.size());
    Eigen::MatrixXd C = local_poly_fit_columns(U, W, Eigen::MatrixXd::Identity(k, k), scale, v);
    const double x1 = M.V[v].dot(e1), x2 = M.V[v].dot(e2);
    double self = 0;
    for (int i = 0; i < k; ++i) {
        double c = 2 * (C(2, i) + C(4, i)) - x1 * C(0, i) - x2 * C(1, i);
        add_entry(T, M, dofs, row, ring[i], nu[ring[i]].dot(n0) * c);
        self -= c;
    }
    add_entry(T, M, dofs, row, v, nu[v].dot(n0) * (self + 1));
    return true;
}

inline void consistent_row(std::vector<Triplet>& T, const SurfaceMesh& M, const MeshAdjacency& adj,
                           const DofMap& dofs, std::vector<Vec3>& X, const std::vector<Vec3>& nu, int row, int v)
{
    if (flat_row(T, M, adj, dofs, nu, row, v)) return;
    auto F = [&] {
        VertexFrame fr = vertex_frame(M, adj, X, v);
        return fr.H + X[v].dot(fr.normal);
    };
    const auto& ring = adj.ring2(v);
    double scale = 0;
    for (int q : ring) scale += (M.V[q] - M.V[v]).norm();
    const double eps = 1e-3 * scale / std::max<std::size_t>(1, ring.size());
    std::vector<int> cols(ring.begin(), ring.end());
    cols.push_back(v);
    auto central = [&](int q, double h) {
        const Vec3 x0 = X[q];
        X[q] = x0 + h * nu[q];
        double fp = F();
        X[q] = x0 - h * nu[q];
        double fm = F();
        X[q] = x0;
        return (fp - fm) / (2 * h);
    };
    // Richardson step removes the O(eps^2) term of the central difference.
    for (int q : cols) add_entry(T, M, dofs, row, q, (4 * central(q, eps / 2) - central(q, eps)) / 3);
}

// One-sided derivative of v / r along the rim's radial line.
inline std::vector<std::pair<int, double>> rim_condition(const SurfaceMesh& M, const DofMap& dofs, int v)
{
    std::vector<int> pts{v};
    for (int q : M.rim_prev[v])
        if (q >= 0) pts.push_back(q);
    std::vector<double> r;
    for (int q : pts) r.push_back(std::hypot(M.V[q].x(), M.V[q].y()));
    std::vector<double> w(pts.size());
    if (pts.size() >= 3) {
        double x0 = r[0], x1 = r[1], x2 = r[2];
        w = {1 / (x0 - x1) + 1 / (x0 - x2), (x0 - x2) / ((x1 - x0) * (x1 - x2)), (x0 - x1) / ((x2 - x0) * (x2 - x1))};
        w.resize(pts.size(), 0.0);
    } else {
        w = {1 / (r[0] - r[1]), -1 / (r[0] - r[1])};
    }
    std::vector<std::pair<int, double>> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        int d = dofs.dof(M, pts[i]);
        if (d >= 0 && w[i] != 0) out.emplace_back(d, dofs.factor(M, pts[i]) * w[i] / r[i]);
    }
    return out;
}

} // namespace detail

/// Assemble L at every dof representative (small scale; the large-scale
/// operator is tau^2 times it).
inline LinearOperator assemble_operator(const SurfaceMesh& M, const MeshAdjacency& adj,
                                        OperatorKind kind = OperatorKind::cotan, Scale scale = Scale::small,
                                        double tau = 1.0, bool reduce = true)
{
    LinearOperator op;
    op.kind = kind;
    op.scale = scale;
    op.tau = tau;
    op.dofs = make_dofs(M, reduce);
    const int n = op.dofs.size();
    std::vector<Triplet> T;
    std::vector<Vec3> X = M.V, nu;
    if (kind == OperatorKind::consistent) nu = vertex_normals(M, adj, M.V);
    op.rim_row.resize(n);
    for (int d = 0; d < n; ++d) {
        int v = op.dofs.rep[d];
        if (kind == OperatorKind::cotan) detail::cotan_row(T, M, adj, op.dofs, d, v);
        else detail::consistent_row(T, M, adj, op.dofs, X, nu, d, v);
        if (M.is_rim(v)) op.rim_row[d] = detail::rim_condition(M, op.dofs, v);
    }
    if (scale == Scale::large)
        for (auto& t : T) t = Triplet(t.row(), t.col(), t.value() * tau * tau);
    op.A.resize(n, n);
    op.A.setFromTriplets(T.begin(), T.end());
    return op;
}

/// L applied to a field (values at the dof representatives are used).
inline MeshField apply_operator(const LinearOperator& op, const SurfaceMesh& M, const MeshField& f)
{
    MeshField out;
    out.kind = FieldKind::generic;
    Eigen::VectorXd y = op.A * op.dofs.restrict(f.values);
    out.values = op.dofs.expand(M, y);
    return out;
}

/// Rows of L with the rim rows replaced by the rim condition.
inline SparseMatrix operator_with_rim(const LinearOperator& op)
{
    std::vector<Triplet> T;
    for (int c = 0; c < op.A.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(op.A, c); it; ++it)
            if (!op.is_rim(static_cast<int>(it.row()))) T.emplace_back(it.row(), it.col(), it.value());
    for (int d = 0; d < op.size(); ++d)
        for (auto [c, w] : op.rim_row[d]) T.emplace_back(d, c, w);
    SparseMatrix B(op.size(), op.size());
    B.setFromTriplets(T.begin(), T.end());
    return B;
}

/// Sparse LU of the rows and columns of the active dofs (other values fixed at
/// 0), optionally bordered by a column -theta and a row probe^T so that the
/// unknown b solves B x - theta b = rhs together with probe.x = 0.
class PieceSolver {
public:
    PieceSolver() = default;

    PieceSolver(const SparseMatrix& B, const std::vector<char>& active, const Eigen::VectorXd* theta = nullptr,
                const Eigen::VectorXd* probe = nullptr)
        : n_(static_cast<int>(B.rows())), bordered_(theta != nullptr)
    {
        pos_.assign(n_, -1);
        for (int d = 0; d < n_; ++d)
            if (active[d]) {
                pos_[d] = static_cast<int>(idx_.size());
                idx_.push_back(d);
            }
        const int k = static_cast<int>(idx_.size()), N = k + (bordered_ ? 1 : 0);
        if (k == 0) throw SolverError("PieceSolver: empty piece");
        std::vector<Triplet> T;
        for (int c = 0; c < B.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(B, c); it; ++it) {
                int i = pos_[it.row()], j = pos_[it.col()];
                if (i >= 0 && j >= 0) T.emplace_back(i, j, it.value());
            }
        if (bordered_) {
            for (int i = 0; i < k; ++i) {
                if ((*theta)(idx_[i]) != 0) T.emplace_back(i, k, -(*theta)(idx_[i]));
                if ((*probe)(idx_[i]) != 0) T.emplace_back(k, i, (*probe)(idx_[i]));
            }
        }
        K_.resize(N, N);
        K_.setFromTriplets(T.begin(), T.end());
        K_.makeCompressed();
        lu_.analyzePattern(K_);
        lu_.factorize(K_);
        if (lu_.info() != Eigen::Success) throw SolverError("PieceSolver: singular system (" + lu_.lastErrorMessage() + ")");
    }

    int active_count() const { return static_cast<int>(idx_.size()); }
    bool is_active(int d) const { return pos_[d] >= 0; }

    /// Solve with right-hand side on the active dofs; returns x over all dofs.
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs, double* b = nullptr, double tol = 1e-10) const
    {
        const int k = active_count(), N = static_cast<int>(K_.rows());
        Eigen::VectorXd r = Eigen::VectorXd::Zero(N);
        for (int i = 0; i < k; ++i) r(i) = rhs(idx_[i]);
        Eigen::VectorXd z = lu_.solve(r);
        const double rn = r.norm();
        for (int it = 0; it < 3 && rn > 0; ++it) {
            Eigen::VectorXd res = r - K_ * z;
            if (res.norm() <= tol * rn) break;
            z += lu_.solve(res);
        }
        if (!z.allFinite()) throw SolverError("PieceSolver: non-finite solution");
        if (rn > 0 && (r - K_ * z).norm() > 1e-6 * rn) throw SolverError("PieceSolver: ill-conditioned system");
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
        for (int i = 0; i < k; ++i) x(idx_[i]) = z(i);
        if (b) *b = bordered_ ? z(k) : 0.0;
        return x;
    }

private:
    int n_ = 0;
    bool bordered_ = false;
    std::vector<int> idx_, pos_;
    SparseMatrix K_;
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

enum class Piece { sigma, cap, disk, plane, outer, all };

inline bool in_wing(Region r) { return on_sigma(r) && r != Region::core; }

/// Active dofs of a piece. Sigma drops the vertices with a neighbour off Sigma;
/// the outer pieces take the wings beyond s = ubar_a.
inline std::vector<char> piece_mask(const SurfaceMesh& M, const MeshAdjacency& adj, const DofMap& dofs,
                                    const ConstructionParams& p, Piece piece)
{
    const double ub = p.ubar_a() + 1e-9;
    std::vector<char> on(dofs.size(), 0);
    for (int d = 0; d < dofs.size(); ++d) {
        int v = dofs.rep[d];
        Region r = M.region[v];
        bool wing_far = in_wing(r) && M.s[v] > ub;
        bool cap = r == Region::cap_top || r == Region::cap_bottom || (wing_far && (r == Region::wing_top || r == Region::wing_bottom));
        bool disk = r == Region::disk || (wing_far && r == Region::wing_inner);
        bool plane = r == Region::plane || (wing_far && r == Region::wing_outer);
        switch (piece) {
        case Piece::sigma: {
            bool in = on_sigma(r);
            for (int q : adj.nb[v]) in = in && on_sigma(M.region[q]);
            on[d] = in;
            break;
        }
        case Piece::cap: on[d] = cap; break;
        case Piece::disk: on[d] = disk; break;
        case Piece::plane: on[d] = plane; break;
        case Piece::outer: on[d] = cap || disk || plane; break;
        case Piece::all: on[d] = 1; break;
        }
    }
    return on;
}

/// psi = 1 on Sigma up to s_max - 1, 0 beyond s_max and off Sigma.
inline double sigma_cutoff(const SurfaceMesh& M, const ConstructionParams& p, int v)
{
    if (!on_sigma(M.region[v])) return 0.0;
    return cutoff(p.s_max(), p.s_max() - 1, M.s[v]);
}

/// psi' = 0 on the core and the wings below ubar_a, 1 beyond ubar_a + 1 and
/// off Sigma.
inline double outer_cutoff(const SurfaceMesh& M, const ConstructionParams& p, int v)
{
    Region r = M.region[v];
    if (!on_sigma(r)) return 1.0;
    if (r == Region::core) return 0.0;
    return cutoff(p.ubar_a(), p.ubar_a() + 1, M.s[v]);
}

/// Column of the bordered systems: w / tau at the dofs (w in the large scale).
inline Eigen::VectorXd theta_column(const LinearOperator& op, const MeshField& w)
{
    return op.dofs.restrict(w.values) / op.tau;
}

/// Probe fixing the kernel: area (e_r . nu) on Sigma up to s = ubar_a.
inline Eigen::VectorXd probe_row(const SurfaceMesh& M, const MeshAdjacency& adj, const LinearOperator& op,
                                 const ConstructionParams& p)
{
    std::vector<double> area = vertex_areas(M);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(op.size());
    for (int d = 0; d < op.size(); ++d) {
        int v = op.dofs.rep[d];
        if (!on_sigma(M.region[v]) || M.s[v] > p.ubar_a() + 1e-9) continue;
        Vec3 er(M.V[v].x(), M.V[v].y(), 0);
        if (!(er.norm() > 0)) continue;
        u(d) = area[v] * er.normalized().dot(vertex_frame(M, adj, M.V, v).normal);
    }
    return u;
}

struct PatchOptions {
    double tol = 1e-8;     // stop when ||E_n||_0 <= tol ||E||_0
    int max_rounds = 50;
    double stall_ratio = 0.9;
    int stall_rounds = 3;
};

struct PatchReport {
    std::vector<double> round_norms;  // ||E_n||_0 for n = 0, 1, ...
    std::vector<double> b_parts;
    int rounds = 0;
    bool converged = false;
    bool fallback = false;  // monolithic solve used after the patching stalled
    double seconds = 0;

    double max_ratio() const
    {
        double r = 0;
        for (std::size_t i = 1; i < round_norms.size(); ++i)
            if (round_norms[i - 1] > 0) r = std::max(r, round_norms[i] / round_norms[i - 1]);
        return r;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j;
        j["round_norms"] = round_norms;
        j["b_parts"] = b_parts;
        j["rounds"] = rounds;
        j["converged"] = converged;
        j["fallback"] = fallback;
        j["max_ratio"] = max_ratio();
        j["seconds"] = seconds;
        return j;
    }
};

struct LinearSolution {
    MeshField v;
    double b = 0;
    Eigen::VectorXd x;  // dof values
    PatchReport report;
};

/// Solves L v = E + Theta(b) on the assembled surface, with v = 0 at the
/// removed side-swap orbits, d_r(v / r) = 0 on the rim and probe.v = 0.
class GlobalLinearSolver {
public:
    GlobalLinearSolver(const SurfaceMesh& M, const MeshAdjacency& adj, const LinearOperator& op,
                       const ConstructionParams& p, const MeshField& w)
        : M_(&M), adj_(&adj), op_(&op), p_(p), B_(operator_with_rim(op)), theta_(theta_column(op, w)),
          probe_(probe_row(M, adj, op, p))
    {
        const int n = op.size();
        psi_.resize(n);
        psi2_.resize(n);
        for (int d = 0; d < n; ++d) {
            psi_(d) = sigma_cutoff(M, p, op.dofs.rep[d]);
            psi2_(d) = outer_cutoff(M, p, op.dofs.rep[d]);
        }
    }

    const SparseMatrix& matrix() const { return B_; }
    const Eigen::VectorXd& theta() const { return theta_; }
    const Eigen::VectorXd& probe() const { return probe_; }

    double norm0_of(const Eigen::VectorXd& e) const { return norm0(*M_, *adj_, op_->dofs.expand(*M_, e), p_).value; }

    /// Right-hand side in dof form (rim rows carry the rim data, here 0).
    Eigen::VectorXd rhs(const MeshField& E) const
    {
        Eigen::VectorXd e = op_->dofs.restrict(E.values);
        for (int d = 0; d < op_->size(); ++d)
            if (op_->is_rim(d)) e(d) = 0;
        return e;
    }

    /// L v - E - Theta(b) in dof form.
    Eigen::VectorXd defect(const Eigen::VectorXd& x, double b, const Eigen::VectorXd& e) const
    {
        return B_ * x - e - theta_ * b;
    }

    LinearSolution patched(const MeshField& E, const PatchOptions& opt = {}) const
    {
        auto t0 = std::chrono::steady_clock::now();
        if (!sigma_) {
            sigma_ = std::make_unique<PieceSolver>(B_, piece_mask(*M_, *adj_, op_->dofs, p_, Piece::sigma), &theta_,
                                                   &probe_);
            outer_ = std::make_unique<PieceSolver>(B_, piece_mask(*M_, *adj_, op_->dofs, p_, Piece::outer));
        }
        LinearSolution out;
        Eigen::VectorXd e = rhs(E);
        out.x = Eigen::VectorXd::Zero(op_->size());
        const double n0 = norm0_of(e);
        out.report.round_norms.push_back(n0);
        int stalled = 0;
        while (n0 > 0 && out.report.rounds < opt.max_rounds) {
            double b = 0;
            Eigen::VectorXd u1 = sigma_->solve(psi_.cwiseProduct(e), &b);
            Eigen::VectorXd v1 = psi_.cwiseProduct(u1);
            Eigen::VectorXd e2 = e + theta_ * b - B_ * v1;
            Eigen::VectorXd u2 = outer_->solve(e2);
            Eigen::VectorXd v2 = psi2_.cwiseProduct(u2);
            e = e2 - B_ * v2;
            out.x += v1 + v2;
            out.b += b;
            out.report.b_parts.push_back(b);
            ++out.report.rounds;
            const double nn = norm0_of(e);
            const double prev = out.report.round_norms.back();
            out.report.round_norms.push_back(nn);
            if (nn <= opt.tol * n0) {
                out.report.converged = true;
                break;
            }
            stalled = nn >= opt.stall_ratio * prev ? stalled + 1 : 0;
            if (stalled >= opt.stall_rounds)
                throw ConvergenceError("patching: no contraction (ratio " + fmt_double(nn / prev) + ")",
                                       out.report.round_norms);
        }
        if (n0 == 0) out.report.converged = true;
        if (!out.report.converged)
            throw ConvergenceError("patching: tolerance not reached", out.report.round_norms);
        out.v.kind = FieldKind::correction;
        out.v.values = op_->dofs.expand(*M_, out.x);
        out.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return out;
    }

    LinearSolution monolithic(const MeshField& E) const
    {
        auto t0 = std::chrono::steady_clock::now();
        if (!mono_) mono_ = std::make_unique<PieceSolver>(B_, std::vector<char>(op_->size(), 1), &theta_, &probe_);
        LinearSolution out;
        out.x = mono_->solve(rhs(E), &out.b);
        out.v.kind = FieldKind::correction;
        out.v.values = op_->dofs.expand(*M_, out.x);
        out.report.rounds = 1;
        out.report.converged = true;
        out.report.b_parts = {out.b};
        out.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return out;
    }

private:
    const SurfaceMesh* M_;
    const MeshAdjacency* adj_;
    const LinearOperator* op_;
    ConstructionParams p_;
    SparseMatrix B_;
    Eigen::VectorXd theta_, probe_, psi_, psi2_;
    mutable std::unique_ptr<PieceSolver> sigma_, outer_, mono_;
};

enum class SolveMode { patched, monolithic, automatic };

inline SolveMode parse_solve_mode(const std::string& s)
{
    if (s == "patched") return SolveMode::patched;
    if (s == "monolithic") return SolveMode::monolithic;
    if (s == "auto") return SolveMode::automatic;
    throw DomainError("unknown solve mode '" + s + "'");
}

/// Patched solve; automatic mode falls back to the monolithic solve when the
/// patching does not contract (the report then keeps the failed round norms).
inline LinearSolution global_linear_solve(const GlobalLinearSolver& G, const MeshField& E,
                                          SolveMode mode = SolveMode::automatic, const PatchOptions& opt = {})
{
    if (mode == SolveMode::monolithic) return G.monolithic(E);
    if (mode == SolveMode::patched) return G.patched(E, opt);
    try {
        return G.patched(E, opt);
    } catch (const ConvergenceError& e) {
        LinearSolution out = G.monolithic(E);
        out.report.round_norms = e.history;
        out.report.rounds = static_cast<int>(e.history.size()) - 1;
        out.report.fallback = true;
        return out;
    }
}

/// Flat annulus r_in <= r <= r_out in the plane z = 0, n_r radial cells and
/// n_theta angular ones; the outer ring is the rim.
inline SurfaceMesh annulus_mesh(double r_in, double r_out, int n_r, int n_theta)
{
    SurfaceMesh M;
    auto id = [&](int i, int j) { return i * n_theta + (j % n_theta); };
    for (int i = 0; i <= n_r; ++i)
        for (int j = 0; j < n_theta; ++j) {
            double r = r_in + (r_out - r_in) * i / n_r, t = 2 * kPi * j / n_theta;
            M.V.emplace_back(r * std::cos(t), r * std::sin(t), 0.0);
            M.region.push_back(Region::plane);
            M.s.push_back(0.0);
        }
    for (int i = 0; i < n_r; ++i)
        for (int j = 0; j < n_theta; ++j) {
            if ((i + j) % 2 == 0) {
                M.F.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
                M.F.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
            } else {
                M.F.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
                M.F.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
            }
        }
    M.rim_prev.assign(M.V.size(), {-1, -1});
    if (n_r >= 2)
        for (int j = 0; j < n_theta; ++j) M.rim_prev[id(n_r, j)] = {id(n_r - 1, j), id(n_r - 2, j)};
    return M;
}

struct OuterPlaneSolution {
    MeshField v;
    double k = 0;            // sup(|E| r) / (2 R_bar^2 - 1)
    double growth = 0;       // sup(|v| / r)
    bool growth_flag = false;  // growth > 1.05 k
};

/// Solves (Delta - xi.grad + 1) v = E on a flat annulus with v = 0 on the
/// inner circle r = R_bar and d_r(v / r) = rim_data on the outer rim.
inline OuterPlaneSolution solve_outer_plane(const SurfaceMesh& M, const MeshField& E, double R_bar,
                                            const std::vector<double>& rim_data = {},
                                            OperatorKind kind = OperatorKind::consistent)
{
    MeshAdjacency adj(M);
    LinearOperator op = assemble_operator(M, adj, kind, Scale::small, 1.0, false);
    const int n = op.size();
    std::vector<char> active(n, 0);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    double sup_Er = 0;
    for (int v = 0; v < n; ++v) {
        double r = std::hypot(M.V[v].x(), M.V[v].y());
        active[v] = r > R_bar * (1 + 1e-12);
        rhs(v) = op.is_rim(v) ? (rim_data.empty() ? 0.0 : rim_data[v]) : E[v];
        sup_Er = std::max(sup_Er, std::abs(E[v]) * r);
    }
    PieceSolver S(operator_with_rim(op), active);
    OuterPlaneSolution out;
    Eigen::VectorXd x = S.solve(rhs);
    out.v.kind = FieldKind::correction;
    out.v.values.assign(x.data(), x.data() + n);
    out.k = sup_Er / (2 * R_bar * R_bar - 1);
    for (int v = 0; v < n; ++v)
        out.growth = std::max(out.growth, std::abs(x(v)) / std::hypot(M.V[v].x(), M.V[v].y()));
    out.growth_flag = out.growth > 1.05 * out.k;
    return out;
}

/// Samples of a plane field along one ray, radii increasing.
struct Ray {
    double theta = 0;
    std::vector<int> vertex;
    std::vector<double> r, f;
};

/// Groups the vertices of the given regions by direction.
inline std::vector<Ray> plane_rays(const SurfaceMesh& M, const std::vector<double>& f,
                                   const std::vector<Region>& regions = {Region::plane})
{
    std::vector<std::pair<double, int>> pts;
    for (std::size_t v = 0; v < M.V.size(); ++v) {
        if (!M.region.empty() && std::find(regions.begin(), regions.end(), M.region[v]) == regions.end()) continue;
        pts.emplace_back(std::atan2(M.V[v].y(), M.V[v].x()), static_cast<int>(v));
    }
    std::sort(pts.begin(), pts.end());
    std::vector<Ray> rays;
    for (std::size_t i = 0; i < pts.size();) {
        std::size_t j = i;
        Ray ray;
        ray.theta = pts[i].first;
        while (j < pts.size() && pts[j].first - pts[i].first < 1e-9) ++j;
        std::vector<std::pair<double, int>> line;
        for (std::size_t k = i; k < j; ++k) {
            const Vec3& q = M.V[pts[k].second];
            line.emplace_back(std::hypot(q.x(), q.y()), pts[k].second);
        }
        std::sort(line.begin(), line.end());
        for (auto [r, v] : line) {
            ray.vertex.push_back(v);
            ray.r.push_back(r);
            ray.f.push_back(f[v]);
        }
        rays.push_back(std::move(ray));
        i = j;
    }
    return rays;
}

struct ConeDecomposition {
    std::vector<double> theta, phi;
    std::vector<Ray> w;  // remainder samples on each ray
    double max_w = 0, max_phi = 0;
    double tail_residual = 0;  // worst relative misfit of f r over the last three samples

    nlohmann::json to_json() const
    {
        nlohmann::json j;
        j["theta"] = theta;
        j["phi"] = phi;
        j["max_abs_w"] = max_w;
        j["max_abs_phi"] = max_phi;
        j["tail_residual"] = tail_residual;
        return j;
    }
};

/// f = -r d_r(v) + v split as v = phi r + w, w(r) = r int_r^inf f / s^2 ds and
/// phi = -int_{r_0}^inf f / s^2 ds with r_0 the innermost sample. The integral
/// runs in t = 1/s by the trapezoid rule; beyond the last sample f is
/// continued as K / r.
inline ConeDecomposition cone_decompose(const std::vector<Ray>& rays)
{
    ConeDecomposition out;
    for (const Ray& ray : rays) {
        const std::size_t n = ray.r.size();
        if (n < 3) throw DomainError("cone_decompose: a ray needs at least three samples");
        double K = 0, scale = 0;
        for (std::size_t i = n - 3; i < n; ++i) {
            K += ray.f[i] * ray.r[i] / 3;
            scale = std::max(scale, std::abs(ray.f[i] * ray.r[i]));
        }
        double mis = 0;
        for (std::size_t i = n - 3; i < n; ++i) mis = std::max(mis, std::abs(ray.f[i] * ray.r[i] - K));
        double rel = scale > 0 ? mis / std::max(std::abs(K), 1e-300) : 0.0;
        if (scale > 1e-300 * (1 + std::abs(K))) out.tail_residual = std::max(out.tail_residual, rel);
        if (scale > 0 && rel > 0.1)
            throw DomainError("cone_decompose: tail fit residual " + fmt_double(rel) + " exceeds 10% (f not of order 1/r)");
        // Cumulative integral from t = 0 (g(0) = 0 by the 1/r continuation).
        std::vector<double> I(n);
        double t_prev = 0, g_prev = 0, acc = 0;
        for (std::size_t k = n; k-- > 0;) {
            double t = 1 / ray.r[k], g = ray.f[k];
            acc += 0.5 * (t - t_prev) * (g + g_prev);
            I[k] = acc;
            t_prev = t;
            g_prev = g;
        }
        Ray w = ray;
        for (std::size_t k = 0; k < n; ++k) {
            w.f[k] = ray.r[k] * I[k];
            out.max_w = std::max(out.max_w, std::abs(w.f[k]));
        }
        out.theta.push_back(ray.theta);
        out.phi.push_back(-I[0]);
        out.max_phi = std::max(out.max_phi, std::abs(I[0]));
        out.w.push_back(std::move(w));
    }
    return out;
}

} // namespace shrinker
