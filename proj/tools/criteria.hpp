#pragma once

// Acceptance criteria: each returns PASS/FAIL with the measured values.

#include <algorithm>
#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shrinker/norms.hpp"
#include "shrinker/profile_odes.hpp"
#include "shrinker/reference_meshes.hpp"
#include "shrinker/scherk.hpp"
#include "shrinker/shrinker_iterator.hpp"
#include "shrinker/wfield.hpp"

namespace shrinker::acceptance {

using nlohmann::json;


struct Outcome {
    bool pass = false;
    std::string detail;
    json data;
};

inline std::string sci(double v)
{
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

inline GeodesicState hemisphere(double t)
{
    double th = kPi / 2 + t / kSqrt2;
    return {kSqrt2 * std::sin(th), -kSqrt2 * std::cos(th), th};
}

inline Outcome hemisphere_reproduction()
{
    auto t0 = std::chrono::steady_clock::now();
    CapProfile p = integrate_geodesic(kSqrt2, kSqrt2 * kPi / 2, 1e-10);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double worst = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto s = p.sample(i), e = hemisphere(p.t(i));
        worst = std::max({worst, std::abs(s.z - e.z), std::abs(s.r - e.r), std::abs(s.theta - e.theta)});
    }
    Outcome o;
    o.pass = !p.truncated && worst < 1e-8 && secs < 1;
    o.detail = "max error " + sci(worst) + " (< 1e-8), " + sci(secs) + " s (< 1 s)";
    o.data = {{"max_error", worst}, {"seconds", secs}};
    return o;
}

inline Outcome invariant_lines()
{
    ProfileOptions o;
    o.start = GeodesicState{0.5, 1, 0};
    CapProfile cyl = integrate_geodesic(0, 3 * kPi / kSqrt2, 1e-10, o);
    double ec = 0;
    for (std::size_t i = 0; i < cyl.size(); ++i) {
        auto s = cyl.sample(i);
        ec = std::max({ec, std::abs(s.r - 1), std::abs(s.theta)});
    }
    o.start = GeodesicState{0, 0.7, kPi / 2};
    CapProfile pl = integrate_geodesic(0, 3 * kPi / kSqrt2, 1e-10, o);
    double ep = 0;
    for (std::size_t i = 0; i < pl.size(); ++i) {
        auto s = pl.sample(i);
        ep = std::max({ep, std::abs(s.z), std::abs(s.theta - kPi / 2)});
    }
    Outcome out;
    out.pass = !cyl.truncated && !pl.truncated && ec < 1e-9 && ep < 1e-9;
    out.detail = "cylinder drift " + sci(ec) + ", plane drift " + sci(ep) + " (< 1e-9)";
    out.data = {{"cylinder", ec}, {"plane", ep}};
    return out;
}

inline Outcome shooting_estimate()
{
    const double tau = kSqrt2 / 16, a = ConstructionParams{}.a, z = tau * a, th0 = sphere_crossing_angle(z);
    const double delta_theta = ProfileOptions{}.delta_theta;
    std::vector<double> q;
    for (int k = 1; k <= 20; ++k) {
        double d = delta_theta * (k - 10.5) / 10;
        q.push_back(std::abs(shoot_cap(th0 + d, z, 1e-11).c1 - kSqrt2) / std::abs(d));
    }
    double mean = 0, lo = q[0], hi = q[0];
    for (double x : q) {
        mean += x / q.size();
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    double spread = std::max(hi / mean - 1, 1 - lo / mean);
    Outcome o;
    o.pass = std::isfinite(hi) && spread < 0.5;
    o.detail = "|c1 - sqrt2| / |dtheta| in [" + sci(lo) + ", " + sci(hi) + "], largest deviation from the mean " +
               sci(100 * spread) + "% (< 50%)";
    o.data = {{"ratios", q}, {"deviation", spread}};
    return o;
}

inline Outcome legendre_linearization()
{
    std::vector<double> grid;
    const double d = 2e-3;
    for (int i = 2; i <= 25; ++i)
        for (int k = -2; k <= 2; ++k) grid.push_back(0.1 * i + k * d);
    grid.push_back(kPi / 2);
    std::sort(grid.begin(), grid.end());
    ScalarProfile p = legendre_psi(3.0, 1e-13, 1e-4, grid);
    auto at = [&](double t, bool deriv) {
        auto i = std::find(p.t.begin(), p.t.end(), t) - p.t.begin();
        return deriv ? p.derivative[i] : p.value[i];
    };
    double ode = 0;
    for (int i = 2; i <= 25; ++i) {
        double t = 0.1 * i;
        double dd = (-at(t + 2 * d, true) + 8 * at(t + d, true) - 8 * at(t - d, true) + at(t - 2 * d, true)) / (12 * d);
        ode = std::max(ode, std::abs(dd + std::cos(t) / std::sin(t) * at(t, true) + 4 * at(t, false)));
    }
    // d/dx P_nu at x = cos t = 0 is -psi'(pi/2).
    double dP = -at(kPi / 2, true);

    std::vector<double> g;
    for (int i = 1; i <= 50; ++i) g.push_back(kPi / 2 * i / 50);
    const double eps = 1e-4;
    ScalarProfile h = graph_ode_h(std::log(kSqrt2) + eps, kPi / 2, 1e-12, 1e-4, g);
    ScalarProfile psi = legendre_psi(kPi / 2, 1e-12, 1e-4, g);
    double resp = 0, scale = 0;
    for (double t : g) {
        auto ih = std::find(h.t.begin(), h.t.end(), t) - h.t.begin();
        auto ip = std::find(psi.t.begin(), psi.t.end(), t) - psi.t.begin();
        resp = std::max(resp, std::abs((h.value[ih] - std::log(kSqrt2)) / eps - psi.value[ip]));
        scale = std::max(scale, std::abs(psi.value[ip]));
    }
    resp /= scale;
    Outcome o;
    o.pass = ode < 1e-8 && dP > 0 && resp < 1e-2;
    o.detail = "ODE residual " + sci(ode) + " (< 1e-8), dP/dx at the equator " + sci(dP) +
               " (> 0), response mismatch " + sci(resp) + " (< 1e-2 relative)";
    o.data = {{"ode_residual", ode}, {"dP", dP}, {"response_mismatch", resp}};
    return o;
}

inline Outcome scherk_exactness()
{
    OffsetResult A = determine_a(1e-3);
    double worst = 0;
    for (int i = 0; i <= 80; ++i)
        for (int j = -40; j <= 40; ++j) {
            double s = 0.1 * i, y = kPi * j / 40;
            for (Vec3 p : {top_wing(s, y, A.a), bottom_wing(s, y, A.a), outer_wing(s, y, A.a), inner_wing(s, y, A.a)})
                worst = std::max(worst, std::abs(implicit_value(p.x(), p.y(), p.z())));
        }
    double sup = 0;
    for (double s = 0; s <= 8; s += 0.05)
        for (double y = 0; y <= kPi; y += 0.05) sup = std::max(sup, std::exp(s) * std::abs(sigma(s, y, A.a)));
    Outcome o;
    o.pass = worst < 1e-14 && sup <= 1e-3 && A.achieved <= 1e-3;
    o.detail = "implicit equation on the wings " + sci(worst) + " (< 1e-14); a = " + sci(A.a) + ", sup e^s |sigma| " +
               sci(sup) + ", with derivatives " + sci(A.achieved) + " (<= 1e-3)";
    o.data = {{"implicit", worst}, {"a", A.a}, {"sup", sup}, {"decay_norm", A.achieved}};
    return o;
}

inline Outcome trivial_residuals()
{
    std::vector<double> sup, secs;
    for (int level : {4, 5, 6}) {
        auto t0 = std::chrono::steady_clock::now();
        sup.push_back(sup_abs(residual(refmesh::icosphere(level, kSqrt2))));
        secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    double plane = sup_abs(residual(refmesh::plane(32, 2.0)));
    double r1 = sup[0] / sup[1], r2 = sup[1] / sup[2];
    bool ok = plane < 1e-12 && *std::max_element(secs.begin(), secs.end()) < 30;
    for (double r : {r1, r2}) ok = ok && r >= 3.4 && r <= 4.6;
    Outcome o;
    o.pass = ok;
    o.detail = "sphere sup residual " + sci(sup[0]) + ", " + sci(sup[1]) + ", " + sci(sup[2]) + " (ratios " + sci(r1) +
               ", " + sci(r2) + " in [3.4, 4.6]); plane " + sci(plane) + "; slowest level " +
               sci(*std::max_element(secs.begin(), secs.end())) + " s";
    o.data = {{"sphere", sup}, {"plane", plane}, {"seconds", secs}};
    return o;
}

// Weighted norm of residual - b w on the patch neighbourhood (large scale).
inline double residual_structure_norm(int m, double b, double resolution)
{
    ConstructionParams p;
    p.m = m;
    p.resolution = resolution;
    SurfaceLayout L = make_layout(p);
    ConstructionParams p0 = p;
    apply_cap_fit(p0);
    MeshField w = sigma_w(assemble_patch_neighbourhood(p0, L).mesh, p0, L);
    ConstructionParams pb = p;
    pb.b = b;
    apply_cap_fit(pb);
    PatchNeighbourhood N = assemble_patch_neighbourhood(pb, L);
    MeshAdjacency adj(N.mesh);
    MeshField E = residual(N.mesh, adj, N.mesh.V, Scale::large, pb.tau());
    for (std::size_t i = 0; i < E.size(); ++i) E[i] -= b * w[i];
    return weighted_norm(N.mesh, adj, E.values, NormSpec{}, pb).value;
}

inline Outcome residual_structure()
{
    json table = json::array();
    bool ok = true;
    double worst_change = 0;
    std::map<int, double> at_zero;
    for (int m : {8, 16, 32})
        for (double b : {0.0, 0.01, -0.01}) {
            double coarse = residual_structure_norm(m, b, kPi / 24), fine = residual_structure_norm(m, b, kPi / 48);
            double change = std::abs(fine - coarse) / coarse;
            ok = ok && std::isfinite(coarse) && std::isfinite(fine) && change < 0.2;
            worst_change = std::max(worst_change, change);
            if (b == 0) at_zero[m] = fine;
            table.push_back({{"m", m}, {"b", b}, {"pi/24", coarse}, {"pi/48", fine}, {"change", change}});
            std::cout << "    m=" << m << " b=" << b << ": " << sci(coarse) << " -> " << sci(fine) << std::endl;
        }
    // tau halves with each doubling of m.
    double s1 = at_zero[8] / at_zero[16] / 2, s2 = at_zero[16] / at_zero[32] / 2, s3 = at_zero[8] / at_zero[32] / 4;
    for (double s : {s1, s2, s3}) ok = ok && s >= 0.5 && s <= 2;
    Outcome o;
    o.pass = ok;
    o.detail = "largest refinement change " + sci(100 * worst_change) + "% (< 20%); at b=0 norm / tau-scaling " +
               sci(s1) + " (8->16), " + sci(s2) + " (16->32), " + sci(s3) + " (8->32), within [0.5, 2]";
    o.data = {{"table", table}};
    return o;
}

inline Outcome balancing_identity()
{
    const double b = 0.02;
    std::vector<double> rel;
    for (int div : {192, 384}) {
        ConstructionParams p;
        p.m = 8;
        p.resolution = kPi / div;
        p.fine_factor = 1;
        apply_cap_fit(p);
        FundamentalPatch P = build_fundamental_patch(p, make_layout(p));
        BalancingResult r = balancing_check(flat_scherk_mesh(P, b, 3, 3.0).mesh, -kPi);
        rel.push_back(std::abs(r.integral - r.wing_sum) / std::abs(r.wing_sum));
        std::cout << "    pi/" << div << ": integral " << r.integral << ", wing sum " << r.wing_sum << std::endl;
    }
    Outcome o;
    o.pass = rel[1] < 0.02 && rel[1] < rel[0];
    o.detail = "b = 0.02: relative gap " + sci(100 * rel[0]) + "% at pi/192, " + sci(100 * rel[1]) +
               "% at pi/384 (< 2% and improving)";
    o.data = {{"relative", rel}};
    return o;
}

inline Outcome outer_plane()
{
    const double Rb = 3.5, rho = 4 * Rb;
    std::vector<double> err;
    double growth = 0, k = 0;
    for (int n : {32, 64}) {
        SurfaceMesh M = annulus_mesh(Rb, rho, n, 4 * n);
        MeshField E;
        std::vector<double> rim(M.V.size()), vstar(M.V.size());
        E.values.resize(M.V.size());
        for (std::size_t v = 0; v < M.V.size(); ++v) {
            double r = std::hypot(M.V[v].x(), M.V[v].y());
            E[v] = -Rb * Rb / (r * r * r) + (1 - 2 * Rb * Rb) / r;
            rim[v] = 2 * Rb * Rb / (r * r * r);
            vstar[v] = r - Rb * Rb / r;
        }
        OuterPlaneSolution S = solve_outer_plane(M, E, Rb, rim);
        double e = 0, mx = 0;
        for (std::size_t v = 0; v < M.V.size(); ++v) {
            e = std::max(e, std::abs(S.v[v] - vstar[v]));
            mx = std::max(mx, std::abs(vstar[v]));
        }
        err.push_back(e / mx);
        growth = S.growth;
        k = S.k;
    }
    SurfaceMesh M = annulus_mesh(Rb, rho, 20, 16);
    std::vector<double> f(M.V.size());
    for (std::size_t v = 0; v < f.size(); ++v) f[v] = 1 / std::hypot(M.V[v].x(), M.V[v].y());
    ConeDecomposition C = cone_decompose(plane_rays(M, f));
    double cone = 0;
    for (std::size_t i = 0; i < C.phi.size(); ++i) {
        cone = std::max(cone, std::abs(C.phi[i] + 1 / (2 * Rb * Rb)));
        for (std::size_t j = 0; j < C.w[i].r.size(); ++j)
            cone = std::max(cone, std::abs(C.w[i].f[j] - 1 / (2 * C.w[i].r[j])));
    }
    Outcome o;
    o.pass = err.back() < 1e-4 && growth <= 1.05 * k && cone < 1e-6;
    o.detail = "barrier relative error " + sci(err[0]) + " (32x128), " + sci(err[1]) + " (64x256) (< 1e-4); growth " +
               sci(growth) + " vs k = " + sci(k) + " (within 5%); cone decomposition of 1/r off by " + sci(cone) +
               " (< 1e-6)";
    o.data = {{"barrier_errors", err}, {"growth", growth}, {"k", k}, {"cone_error", cone}};
    return o;
}

inline const SurfaceContext& context8()
{
    static std::unique_ptr<SurfaceContext> c = [] {
        ConstructionParams p;
        p.m = 8;
        return make_context(p, 0.0);
    }();
    return *c;
}

inline Outcome patching_contraction()
{
    const SurfaceContext& c = context8();
    PatchOptions opt;
    std::vector<double> history;
    bool converged = false;
    LinearSolution patched;
    try {
        patched = c.solver->patched(c.F0, opt);
        history = patched.report.round_norms;
        converged = true;
    } catch (const ConvergenceError& e) {
        history = e.history;
    }
    double ratio = 0;
    for (std::size_t i = 1; i < history.size(); ++i) ratio = std::max(ratio, history[i] / history[i - 1]);
    Outcome o;
    o.data = {{"round_norms", history}, {"max_ratio", ratio}};
    std::string agree = "no patched solution to compare with the monolithic solve";
    bool agrees = false;
    if (converged) {
        LinearSolution mono = c.solver->monolithic(c.F0);
        std::vector<double> d(mono.v.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = patched.v[i] - mono.v[i];
        double diff = norm2(c.M, *c.adj, d, c.p).value, ref = norm2(c.M, *c.adj, mono.v.values, c.p).value;
        agrees = diff <= 10 * opt.tol * ref;
        agree = "patched vs monolithic " + sci(diff / ref) + " relative in ||.||_2 (< " + sci(10 * opt.tol) + ")";
        o.data["agreement"] = diff / ref;
    }
    o.pass = converged && ratio < 0.5 && agrees;
    o.detail = "m=8: " + std::to_string(history.size()) + " rounds, largest round ratio " + sci(ratio) + " (< 0.5); " +
               agree;
    return o;
}

inline MeshField weighted_random_field(const SurfaceContext& c, std::mt19937& rng)
{
    std::uniform_real_distribution<double> U(-1, 1);
    double a[6];
    for (double& x : a) x = U(rng);
    Eigen::VectorXd x(c.op.size());
    for (int d = 0; d < c.op.size(); ++d) {
        int v = c.op.dofs.rep[d];
        const Vec3& q = c.M.V[v];
        x(d) = a[0] * std::sin(1.3 * q.x() + a[1]) + a[2] * std::cos(0.7 * q.z() + a[3]) + a[4] * q.y() * q.y() + a[5];
        x(d) *= c.M.region[v] == Region::plane ? weight_b0(c.p) : norm_weight(c.M, v, WeightId::exp_mixed_b0, c.p);
    }
    MeshField f;
    f.values = c.op.dofs.expand(c.M, x / x.cwiseAbs().maxCoeff());
    return f;
}

inline Outcome quadratic_estimate()
{
    const SurfaceContext& c = context8();
    std::mt19937 rng(2024);
    std::vector<double> ratios;
    for (int trial = 0; trial < 3; ++trial) {
        MeshField v = weighted_random_field(c, rng);
        for (double A : {2e-6, 1e-6}) {
            MeshField v1 = v, v2 = v;
            for (auto& x : v1.values) x *= A;
            for (auto& x : v2.values) x *= A / 2;
            double r1 = norm0(c.M, *c.adj, quadratic_remainder(c, v1).values, c.p).value;
            double r2 = norm0(c.M, *c.adj, quadratic_remainder(c, v2).values, c.p).value;
            ratios.push_back(r1 / r2);
        }
    }
    bool ok = true;
    std::string list;
    for (double r : ratios) {
        ok = ok && r >= 3.3 && r <= 4.7;
        list += (list.empty() ? "" : ", ") + sci(r);
    }
    Outcome o;
    o.pass = ok;
    o.detail = "halving ratios " + list + " (in [3.3, 4.7])";
    o.data = {{"ratios", ratios}};
    return o;
}

inline Outcome end_to_end()
{
    ConstructionParams p;
    p.m = 8;
    Outcome o;
    try {
        ShrinkerResult R = solve_shrinker(p);
        double sup = sup_abs(R.residual);
        bool finite_phi = true;
        for (double phi : R.cone.phi) finite_phi = finite_phi && std::isfinite(phi);
        int steps = static_cast<int>(R.state.b_history.size());
        o.pass = R.converged && steps <= 30 && sup < 1e-6 && R.symmetry_defect < 1e-9 &&
                 std::abs(R.state.b) <= R.state.params.zeta * R.state.params.tau() && finite_phi && R.seconds < 600;
        o.detail = std::to_string(steps) + " steps, sup residual " + sci(sup) + ", symmetry defect " +
                   sci(R.symmetry_defect) + ", b = " + sci(R.state.b) + ", " + sci(R.seconds) + " s";
        o.data = R.to_json();
    } catch (const Error& e) {
        o.pass = false;
        o.detail = std::string("solve_shrinker stopped: ") + e.what();
        o.data = {{"error", e.what()}};
    }
    return o;
}

struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
};

inline const std::vector<Criterion>& criteria()
{
    static const std::vector<Criterion> list = {
        {1, "hemisphere reproduction", hemisphere_reproduction},
        {2, "invariant lines", invariant_lines},
        {3, "shooting estimate", shooting_estimate},
        {4, "Legendre linearization", legendre_linearization},
        {5, "Scherk exactness and decay", scherk_exactness},
        {6, "trivial-solution residuals", trivial_residuals},
        {7, "residual structure", residual_structure},
        {8, "balancing identity", balancing_identity},
        {9, "outer-plane solver", outer_plane},
        {10, "patching contraction", patching_contraction},
        {11, "quadratic estimate", quadratic_estimate},
        {12, "end-to-end", end_to_end},
    };
    return list;
}

/// Runs one criterion, turning exceptions into failures.
inline Outcome run_criterion(const Criterion& c, double& seconds)
{
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = c.run();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("error: ") + e.what();
    }
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return o;
}

} // namespace shrinker::acceptance
