#include <gtest/gtest.h>

#include <random>

#include "shrinker/shrinker_iterator.hpp"
#include "shrinker/reference_meshes.hpp"

using namespace shrinker;

namespace {

const SurfaceContext& context8()
{
    static std::unique_ptr<SurfaceContext> c = [] {
        ConstructionParams p;
        p.m = 8;
        return make_context(p, 0.0);
    }();
    return *c;
}

// Random smooth symmetric field times the weight of ||.||_0, so that it lies in the
// weighted space and decays along the wings like its elements do.
MeshField random_symmetric(const SurfaceContext& c, std::mt19937& rng, double amplitude)
{
    std::uniform_real_distribution<double> U(-1, 1);
    double a[6];
    for (double& x : a) x = U(rng);
    Eigen::VectorXd x(c.op.size());
    for (int d = 0; d < c.op.size(); ++d) {
        const Vec3& q = c.M.V[c.op.dofs.rep[d]];
        x(d) = a[0] * std::sin(1.3 * q.x() + a[1]) + a[2] * std::cos(0.7 * q.z() + a[3]) + a[4] * q.y() * q.y() + a[5];
        int v = c.op.dofs.rep[d];
        x(d) *= c.M.region[v] == Region::plane ? weight_b0(c.p) : norm_weight(c.M, v, WeightId::exp_mixed_b0, c.p);
    }
    MeshField v;
    v.values = c.op.dofs.expand(c.M, amplitude / x.cwiseAbs().maxCoeff() * x);
    return v;
}

// Max over interior vertices of |F sqrt(1 + |Dv|^2) - flat-graph expression| for a graph over [-1, 1]^2.
double flat_graph_error(int n)
{
    SurfaceMesh P = refmesh::plane(n, 1.0);
    MeshAdjacency adj(P);
    std::vector<Vec3> nu(P.V.size(), Vec3::UnitZ());
    auto f = [](double x, double y) { return 0.1 * (x * x - x * y + 0.5 * y * y) + 0.05 * x + 0.02; };
    MeshField v;
    for (const Vec3& q : P.V) v.values.push_back(f(q.x(), q.y()));
    MeshField F = perturbed_residual(P, adj, nu, v);
    std::vector<char> boundary = boundary_flags(P);
    double err = 0;
    for (std::size_t i = 0; i < P.V.size(); ++i) {
        bool interior = !boundary[i];
        for (int q : adj.ring2(static_cast<int>(i))) interior = interior && !boundary[q];
        if (!interior) continue;
        double x = P.V[i].x(), y = P.V[i].y();
        double vx = 0.1 * (2 * x - y) + 0.05, vy = 0.1 * (-x + y);
        double vxx = 0.2, vxy = -0.1, vyy = 0.1;
        double W = 1 + vx * vx + vy * vy;
        double quasi = (1 - vx * vx / W) * vxx - 2 * vx * vy / W * vxy + (1 - vy * vy / W) * vyy;
        double expected = quasi - (x * vx + y * vy) + f(x, y);
        err = std::max(err, std::abs(F[i] * std::sqrt(W) - expected));
    }
    return err;
}

} // namespace

TEST(PerturbedResidual, ZeroPerturbationIsTheResidual)
{
    const SurfaceContext& c = context8();
    MeshField zero;
    zero.values.assign(c.M.V.size(), 0.0);
    MeshField F = perturbed_residual(c, zero);
    for (std::size_t i = 0; i < F.size(); ++i) EXPECT_EQ(F[i], c.F0[i]);
}

TEST(PerturbedResidual, FlatGraphMatchesTheQuasilinearForm)
{
    double e1 = flat_graph_error(32), e2 = flat_graph_error(64);
    EXPECT_LT(e2, 1e-5);
    EXPECT_GT(e1 / e2, 3.0);
}

TEST(PerturbedResidual, FlippedFacesAreRejected)
{
    SurfaceMesh P = refmesh::plane(8, 1.0);
    MeshAdjacency adj(P);
    std::vector<Vec3> nu(P.V.size(), Vec3::UnitZ());
    MeshField v;
    v.values.assign(P.V.size(), 0.0);
    EXPECT_NO_THROW(perturbed_residual(P, adj, nu, v));
    // Pushing one vertex far along a non-normal direction folds its faces over.
    std::vector<Vec3> tilted = nu;
    tilted[40] = Vec3(1, 0, 0);
    v[40] = 0.6;
    EXPECT_THROW(perturbed_residual(P, adj, tilted, v), MeshError);
}

TEST(QuadraticRemainder, HalvingRatioIsAboutFour)
{
    const SurfaceContext& c = context8();
    std::mt19937 rng(2024);
    for (int trial = 0; trial < 3; ++trial) {
        MeshField v = random_symmetric(c, rng, 1.0);
        for (double A : {2e-6, 1e-6}) {
            MeshField v1 = v, v2 = v;
            for (auto& x : v1.values) x *= A;
            for (auto& x : v2.values) x *= A / 2;
            double r1 = norm0(c.M, *c.adj, quadratic_remainder(c, v1).values, c.p).value;
            double r2 = norm0(c.M, *c.adj, quadratic_remainder(c, v2).values, c.p).value;
            EXPECT_GT(r1 / r2, 3.3) << "trial " << trial << " amplitude " << A;
            EXPECT_LT(r1 / r2, 4.7) << "trial " << trial << " amplitude " << A;
        }
    }
}

TEST(FixedPointStep, FirstStepSolvesTheLinearizedProblem)
{
    ConstructionParams p;
    p.m = 8;
    p.zeta = 100;
    std::unique_ptr<SurfaceContext> c = make_context(p, 0.0);
    ShrinkerState s;
    s.params = p;
    s.v.values.assign(c->M.V.size(), 0.0);
    ShrinkerOptions opt;
    opt.mode = SolveMode::monolithic;
    ShrinkerState t = fixed_point_step(s, c, opt);
    ASSERT_EQ(t.residual_norm_history.size(), 1u);
    EXPECT_NEAR(t.residual_norm_history[0], norm0(c->M, *c->adj, c->F0.values, c->p).value, 1e-12);
    // L v_new = -F(b, 0) - Theta(b_new - b).
    Eigen::VectorXd x = c->op.dofs.restrict(t.v.values);
    Eigen::VectorXd d = c->solver->defect(-x, t.b - s.b, c->solver->rhs(c->F0));
    EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-9 * c->solver->rhs(c->F0).cwiseAbs().maxCoeff());
    EXPECT_LT(symmetry_project(c->M, t.v).deviation, 1e-9);
}

TEST(FixedPointStep, LeavingTheAdmissibleSetIsReported)
{
    ConstructionParams p;
    p.m = 8;
    p.zeta = 0.1;
    std::unique_ptr<SurfaceContext> c = make_context(p, 0.0);
    ShrinkerState s;
    s.params = p;
    s.v.values.assign(c->M.V.size(), 0.0);
    ShrinkerOptions opt;
    opt.mode = SolveMode::monolithic;
    try {
        fixed_point_step(s, c, opt);
        FAIL() << "expected a DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("zeta"), std::string::npos);
    }
}

TEST(Certification, AssembledSurfaceIsSymmetric)
{
    const SurfaceContext& c = context8();
    EXPECT_LT(position_symmetry_defect(c.M, c.M.V), 1e-12);
}

TEST(Certification, ConeProfileOfAnInverseRadius)
{
    SurfaceMesh M = annulus_mesh(3.0, 12.0, 400, 8);
    MeshField v;
    for (const Vec3& q : M.V) v.values.push_back(1 / std::hypot(q.x(), q.y()));
    ConeDecomposition C = cone_profile(M, v);
    ASSERT_EQ(C.w.size(), 8u);
    for (const Ray& w : C.w)
        for (std::size_t k = 1; k + 1 < w.r.size(); k += 25) EXPECT_NEAR(w.f[k], 1 / w.r[k], 1e-3);
    for (double phi : C.phi) EXPECT_TRUE(std::isfinite(phi));
}
