#pragma once

// The w-field of the unbalancing family: b-derivative of the mean curvature of
// Z_b applied to the flat Scherk piece, carried to the wrapped surface by patch
// vertex.

#include <cmath>
#include <limits>
#include <vector>

#include "geometry.hpp"
#include "surface.hpp"

namespace shrinker {

/// Central difference of H on the flat family at b -/+ db (large scale), per
/// patch vertex; NaN off the desingularizing piece.
inline std::vector<double> flat_w(const FundamentalPatch& P, double b, double db)
{
    if (!(db > 0)) throw DomainError("flat_w: db must be positive");
    FlatFamily lo = flat_scherk_mesh(P, b - db), hi = flat_scherk_mesh(P, b + db);
    MeshField w = w_field(lo.mesh, hi.mesh, db);
    std::vector<double> out(P.V.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t v = 0; v < P.V.size(); ++v)
        if (lo.patch_to_mesh[v] >= 0) out[v] = w[lo.patch_to_mesh[v]];
    return out;
}

/// Spread per-patch-vertex values over a replicated mesh with the twist
/// factor; zero off the piece and on orbits fixed by a side swap.
inline MeshField spread_over_orbits(const SurfaceMesh& M, const std::vector<double>& per_patch, FieldKind kind)
{
    MeshField f;
    f.kind = kind;
    f.values.assign(M.V.size(), 0.0);
    for (std::size_t v = 0; v < M.V.size(); ++v) {
        int o = M.orbit[v];
        double x = per_patch[o];
        if (!std::isfinite(x) || M.orbit_odd[o]) continue;
        f[v] = M.chi(static_cast<int>(v)) * x;
    }
    return f;
}

/// w on a surface assembled from the layout L at the parameters p (large scale).
inline MeshField sigma_w(const SurfaceMesh& M, const ConstructionParams& p, const SurfaceLayout& L, double db = 1e-4)
{
    ConstructionParams p0 = p;
    p0.b = 0;
    apply_cap_fit(p0);
    return spread_over_orbits(M, flat_w(build_fundamental_patch(p0, L), 0.0, db), FieldKind::w);
}

} // namespace shrinker
