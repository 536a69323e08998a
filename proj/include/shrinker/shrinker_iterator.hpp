#pragma once

// Nonlinear loop: residual of a normal graph over M(b, tau), the quadratic
// remainder, and the fixed-point update on (b, v).

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "assembler.hpp"
#include "common.hpp"
#include "geometry.hpp"
#include "linear_solvers.hpp"
#include "norms.hpp"
#include "surface.hpp"
#include "wfield.hpp"

namespace shrinker {

/// Everything that depends on b only: the rebuilt surface, its operator, w and
/// the linear solver.
struct SurfaceContext {
    ConstructionParams p;
    SurfaceMesh M;
    std::unique_ptr<MeshAdjacency> adj;
    std::vector<Vec3> nu;
    LinearOperator op;
    MeshField w;
    MeshField F0;  // residual of the unperturbed surface
    std::unique_ptr<GlobalLinearSolver> solver;
};

inline std::unique_ptr<SurfaceContext> make_context(ConstructionParams p, double b,
                                                    OperatorKind kind = OperatorKind::consistent)
{
    auto c = std::make_unique<SurfaceContext>();
    p.b = b;
    apply_cap_fit(p);
    c->p = p;
    SurfaceLayout L = make_layout(p);
    c->M = assemble_initial_surface(p, L);
    c->adj = std::make_unique<MeshAdjacency>(c->M);
    c->nu = vertex_normals(c->M, *c->adj, c->M.V);
    c->op = assemble_operator(c->M, *c->adj, kind, Scale::small, p.tau());
    c->w = sigma_w(c->M, p, L);
    c->F0 = residual(c->M, *c->adj, c->M.V);
    c->solver = std::make_unique<GlobalLinearSolver>(c->M, *c->adj, c->op, p, c->w);
    return c;
}

/// Vertex positions of the graph X + v nu; throws if a face turns over.
inline std::vector<Vec3> graph_positions(const SurfaceMesh& M, const std::vector<Vec3>& nu, const MeshField& v)
{
    std::vector<Vec3> X(M.V.size());
    for (std::size_t i = 0; i < X.size(); ++i) X[i] = M.V[i] + v[i] * nu[i];
    std::vector<int> flipped;
    for (std::size_t f = 0; f < M.F.size(); ++f) {
        const Tri& t = M.F[f];
        Vec3 n0 = (M.V[t[1]] - M.V[t[0]]).cross(M.V[t[2]] - M.V[t[0]]);
        Vec3 n1 = (X[t[1]] - X[t[0]]).cross(X[t[2]] - X[t[0]]);
        if (!(n0.dot(n1) > 0)) flipped.push_back(static_cast<int>(f));
    }
    if (!flipped.empty())
        throw MeshError("graph_positions: " + std::to_string(flipped.size()) +
                            " faces flip (the normal graph is not embedded)",
                        flipped);
    return X;
}

/// H + X.nu of the graph X + v nu, at the vertices of the base mesh.
inline MeshField perturbed_residual(const SurfaceMesh& M, const MeshAdjacency& adj, const std::vector<Vec3>& nu,
                                    const MeshField& v)
{
    MeshField F = residual(M, adj, graph_positions(M, nu, v));
    F.kind = FieldKind::residual;
    return F;
}

inline MeshField perturbed_residual(const SurfaceContext& c, const MeshField& v)
{
    return perturbed_residual(c.M, *c.adj, c.nu, v);
}

/// F(b, v) - F(b, 0) - L v.
inline MeshField quadratic_remainder(const SurfaceContext& c, const MeshField& v)
{
    MeshField R = perturbed_residual(c, v);
    MeshField Lv = apply_operator(c.op, c.M, v);
    for (std::size_t i = 0; i < R.size(); ++i) R[i] -= c.F0[i] + Lv[i];
    R.kind = FieldKind::generic;
    return R;
}

struct ShrinkerOptions {
    double tol = 1e-6;  // on ||F||_0
    int max_steps = 30;
    SolveMode mode = SolveMode::automatic;
    OperatorKind kind = OperatorKind::consistent;
    Norm2Variant norm2 = Norm2Variant::scaled;
};

struct ShrinkerState {
    ConstructionParams params;
    MeshField v;  // small-scale normal graph over M(b, tau)
    double b = 0;
    std::vector<double> residual_norm_history, sup_residual_history, b_history, v_norm_history;
    std::vector<nlohmann::json> steps;

    nlohmann::json to_json() const
    {
        nlohmann::json j;
        j["params"] = shrinker::to_json(params);
        j["b"] = b;
        j["residual_norm_history"] = residual_norm_history;
        j["sup_residual_history"] = sup_residual_history;
        j["b_history"] = b_history;
        j["v_norm_history"] = v_norm_history;
        j["steps"] = steps;
        return j;
    }
};

inline double sup_abs(const MeshField& f)
{
    double m = 0;
    for (double x : f.values) m = std::max(m, std::abs(x));
    return m;
}

/// One update (b, v) -> (b + b_E + b_H, -v_E - v_H) with E = F(b, v) - F(b, 0) - L v
/// and E_H = F(b, 0); the new v is carried to M(b_new) by vertex identity.
/// The context is rebuilt for b_new.
inline ShrinkerState fixed_point_step(const ShrinkerState& s, std::unique_ptr<SurfaceContext>& c,
                                      const ShrinkerOptions& opt = {})
{
    auto t0 = std::chrono::steady_clock::now();
    if (!c || c->p.b != s.b) c = make_context(s.params, s.b, opt.kind);
    const double tau = c->p.tau(), bound = c->p.zeta * tau;
    MeshField Fv = perturbed_residual(*c, s.v);
    MeshField Eq = Fv;
    MeshField Lv = apply_operator(c->op, c->M, s.v);
    for (std::size_t i = 0; i < Eq.size(); ++i) Eq[i] -= c->F0[i] + Lv[i];
    LinearSolution sE = global_linear_solve(*c->solver, Eq, opt.mode);
    LinearSolution sH = global_linear_solve(*c->solver, c->F0, opt.mode);

    ShrinkerState out = s;
    out.residual_norm_history.push_back(norm0(c->M, *c->adj, Fv.values, c->p).value);
    out.sup_residual_history.push_back(sup_abs(Fv));
    out.b = s.b + sE.b + sH.b;
    out.v.kind = FieldKind::correction;
    out.v.values.resize(c->M.V.size());
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = -sE.v[i] - sH.v[i];
    const double vnorm = norm2(c->M, *c->adj, out.v.values, c->p, opt.norm2).value;
    out.b_history.push_back(out.b);
    out.v_norm_history.push_back(vnorm);
    nlohmann::json step;
    step["b_in"] = s.b;
    step["b_out"] = out.b;
    step["b_E"] = sE.b;
    step["b_H"] = sH.b;
    step["residual_norm"] = out.residual_norm_history.back();
    step["sup_residual"] = out.sup_residual_history.back();
    step["v_norm2"] = vnorm;
    step["patch_E"] = sE.report.to_json();
    step["patch_H"] = sH.report.to_json();
    step["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.steps.push_back(step);
    if (!(std::abs(out.b) <= bound) || !(vnorm <= bound))
        throw DomainError("fixed_point_step: left the set |b|, ||v||_2 <= zeta tau (|b| = " + fmt_double(out.b) +
                          ", ||v||_2 = " + fmt_double(vnorm) + ", bound " + fmt_double(bound) +
                          "); try a larger zeta");
    return out;
}

/// Symmetry of a vertex field of positions: max |X(v) - A_g X(rep)| over the mesh.
inline double position_symmetry_defect(const SurfaceMesh& M, const std::vector<Vec3>& X)
{
    double d = 0;
    for (std::size_t v = 0; v < M.V.size(); ++v) {
        int r = M.orbit_rep[M.orbit[v]];
        if (r < 0) continue;
        d = std::max(d, (X[v] - M.group[M.element[v]] * X[r]).norm());
    }
    return d;
}

/// Cone profile of v on the plane: decomposition of f = v - r d_r v.
inline ConeDecomposition cone_profile(const SurfaceMesh& M, const MeshField& v)
{
    std::vector<Ray> rays = plane_rays(M, v.values);
    for (Ray& ray : rays) {
        const std::size_t n = ray.r.size();
        std::vector<double> f(n);
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t a = k == 0 ? 0 : k - 1, b = k + 1 < n ? k + 1 : n - 1;
            double dv = (ray.f[b] - ray.f[a]) / (ray.r[b] - ray.r[a]);
            f[k] = ray.f[k] - ray.r[k] * dv;
        }
        ray.f = f;
    }
    return cone_decompose(rays);
}

struct ShrinkerResult {
    ShrinkerState state;
    bool converged = false;
    SurfaceMesh mesh;          // final graph surface
    MeshField residual;        // its residual
    double symmetry_defect = 0;
    ConeDecomposition cone;
    double seconds = 0;

    nlohmann::json to_json() const
    {
        nlohmann::json j = state.to_json();
        j["converged"] = converged;
        j["sup_residual"] = sup_abs(residual);
        j["symmetry_defect"] = symmetry_defect;
        j["cone"] = cone.to_json();
        j["seconds"] = seconds;
        return j;
    }
};

/// Iterates fixed_point_step from (b, v) = (0, 0) until ||F||_0 < tol.
inline ShrinkerResult solve_shrinker(const ConstructionParams& params, const ShrinkerOptions& opt = {})
{
    auto t0 = std::chrono::steady_clock::now();
    params.validate();
    ShrinkerResult R;
    R.state.params = params;
    R.state.b = 0;
    std::unique_ptr<SurfaceContext> c = make_context(params, 0.0, opt.kind);
    R.state.v.values.assign(c->M.V.size(), 0.0);
    for (int step = 0;; ++step) {
        if (!c || c->p.b != R.state.b) c = make_context(params, R.state.b, opt.kind);
        MeshField F = perturbed_residual(*c, R.state.v);
        double n = norm0(c->M, *c->adj, F.values, c->p).value;
        if (n < opt.tol) {
            R.converged = true;
            R.state.residual_norm_history.push_back(n);
            R.state.sup_residual_history.push_back(sup_abs(F));
            R.residual = F;
            break;
        }
        if (step >= opt.max_steps) {
            R.state.residual_norm_history.push_back(n);
            R.state.sup_residual_history.push_back(sup_abs(F));
            R.residual = F;
            break;
        }
        const auto& h = R.state.residual_norm_history;
        if (h.size() >= 5 && n > 0.99 * h[h.size() - 5])
            throw ConvergenceError("solve_shrinker: stagnation (less than 1% decrease over 5 steps)", h);
        R.state = fixed_point_step(R.state, c, opt);
    }
    R.state.params = c->p;
    R.mesh = c->M;
    R.mesh.V = graph_positions(c->M, c->nu, R.state.v);
    R.mesh.params_json = to_json(c->p).dump();
    R.symmetry_defect = position_symmetry_defect(c->M, R.mesh.V);
    R.cone = cone_profile(c->M, R.state.v);
    R.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return R;
}

} // namespace shrinker
