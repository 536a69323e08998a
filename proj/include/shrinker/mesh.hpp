#pragma once

// Triangle meshes with per-vertex region tags, wing coordinate s and symmetry
// orbit data; topology queries, welding and OBJ round trip.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "profile_odes.hpp"

namespace shrinker {

enum class Region : int {
    core = 0,
    wing_top,
    wing_bottom,
    wing_inner,
    wing_outer,
    cap_top,
    cap_bottom,
    disk,
    plane,
};

inline const char* region_name(Region r)
{
    static const char* names[] = {"core",   "wing-top", "wing-bottom", "wing-inner", "wing-outer",
                                  "cap-top", "cap-bottom", "disk",      "plane"};
    return names[static_cast<int>(r)];
}

inline Region region_from_name(const std::string& n)
{
    for (int i = 0; i <= static_cast<int>(Region::plane); ++i)
        if (n == region_name(static_cast<Region>(i))) return static_cast<Region>(i);
    throw MeshError("unknown region tag '" + n + "'");
}

inline bool on_sigma(Region r)
{
    return r == Region::core || r == Region::wing_top || r == Region::wing_bottom || r == Region::wing_inner ||
           r == Region::wing_outer;
}

using Tri = std::array<int, 3>;

struct SurfaceMesh {
    std::vector<Vec3> V;
    std::vector<Tri> F;
    std::vector<Region> region;
    std::vector<double> s;

    // Symmetry data. group[g] is an orthogonal map, group_chi[g] = +1 if it
    // preserves the sides of the surface and -1 if it swaps them. Vertex i is
    // group[element[i]] applied to vertex orbit_rep[orbit[i]].
    std::vector<Mat3> group;
    std::vector<int> group_chi;
    std::vector<int> orbit;
    std::vector<int> element;
    std::vector<int> orbit_rep;
    // Orbits fixed by a side-swapping element: symmetric fields vanish there.
    std::vector<char> orbit_odd;

    // Outer rim: previous two vertices along the radial line (-1 if none).
    std::vector<std::array<int, 2>> rim_prev;

    std::string params_json;

    std::size_t size() const { return V.size(); }
    bool has_symmetry() const { return !orbit.empty(); }
    int orbit_count() const { return static_cast<int>(orbit_rep.size()); }
    bool is_rim(int v) const { return !rim_prev.empty() && rim_prev[v][0] >= 0; }

    /// Twist factor relating the value at vertex v to its orbit representative.
    double chi(int v) const { return group.empty() ? 1.0 : group_chi[element[v]]; }
};

/// Vertex adjacency (sorted unique neighbour lists).
inline std::vector<std::vector<int>> vertex_neighbors(const SurfaceMesh& m)
{
    std::vector<std::vector<int>> nb(m.V.size());
    for (const auto& f : m.F)
        for (int k = 0; k < 3; ++k) {
            nb[f[k]].push_back(f[(k + 1) % 3]);
            nb[f[k]].push_back(f[(k + 2) % 3]);
        }
    for (auto& l : nb) {
        std::sort(l.begin(), l.end());
        l.erase(std::unique(l.begin(), l.end()), l.end());
    }
    return nb;
}

/// Vertices within k edge hops of v (excluding v), breadth-first order.
inline std::vector<int> k_ring(const std::vector<std::vector<int>>& nb, int v, int k)
{
    std::vector<int> out, frontier{v};
    std::vector<int> seen{v};
    for (int d = 0; d < k; ++d) {
        std::vector<int> next;
        for (int u : frontier)
            for (int w : nb[u])
                if (std::find(seen.begin(), seen.end(), w) == seen.end()) {
                    seen.push_back(w);
                    next.push_back(w);
                    out.push_back(w);
                }
        frontier.swap(next);
    }
    return out;
}

struct TopologyReport {
    bool manifold = true;
    bool oriented = true;
    std::vector<int> bad_edges;      // pairs flattened
    std::vector<int> boundary_vertices;
};

/// Edge-based manifold and orientation check.
inline TopologyReport check_topology(const SurfaceMesh& m)
{
    TopologyReport rep;
    std::map<std::pair<int, int>, std::vector<int>> directed;
    for (const auto& f : m.F)
        for (int k = 0; k < 3; ++k) directed[{f[k], f[(k + 1) % 3]}].push_back(1);
    std::vector<char> isb(m.V.size(), 0);
    for (const auto& [e, uses] : directed) {
        auto [a, b] = e;
        auto rev = directed.find({b, a});
        std::size_t n_rev = rev == directed.end() ? 0 : rev->second.size();
        if (uses.size() > 1) {
            rep.oriented = false;
            if (uses.size() + n_rev > 2) rep.manifold = false;
            rep.bad_edges.push_back(a);
            rep.bad_edges.push_back(b);
        }
        if (n_rev == 0 && uses.size() == 1) isb[a] = isb[b] = 1;
    }
    for (std::size_t i = 0; i < isb.size(); ++i)
        if (isb[i]) rep.boundary_vertices.push_back(static_cast<int>(i));
    return rep;
}

/// Flag per vertex: lies on a boundary edge.
inline std::vector<char> boundary_flags(const SurfaceMesh& m)
{
    std::vector<char> out(m.V.size(), 0);
    for (int v : check_topology(m).boundary_vertices) out[v] = 1;
    return out;
}

/// Merge vertices closer than tol. Returns old -> new index map; the first
/// occurrence of each cluster is kept.
inline std::vector<int> weld_map(const std::vector<Vec3>& P, double tol)
{
    std::unordered_map<long long, std::vector<int>> cells;
    auto key = [&](long long i, long long j, long long k) { return (i * 73856093LL) ^ (j * 19349663LL) ^ (k * 83492791LL); };
    double h = tol * 4;
    std::vector<int> map(P.size(), -1);
    int next = 0;
    std::vector<int> kept;
    for (std::size_t i = 0; i < P.size(); ++i) {
        long long ci = std::llround(std::floor(P[i].x() / h)), cj = std::llround(std::floor(P[i].y() / h)),
                  ck = std::llround(std::floor(P[i].z() / h));
        int found = -1;
        for (long long di = -1; di <= 1 && found < 0; ++di)
            for (long long dj = -1; dj <= 1 && found < 0; ++dj)
                for (long long dk = -1; dk <= 1 && found < 0; ++dk) {
                    auto it = cells.find(key(ci + di, cj + dj, ck + dk));
                    if (it == cells.end()) continue;
                    for (int c : it->second)
                        if ((P[kept[c]] - P[i]).norm() <= tol) {
                            found = c;
                            break;
                        }
                }
        if (found >= 0) {
            map[i] = found;
        } else {
            cells[key(ci, cj, ck)].push_back(next);
            kept.push_back(static_cast<int>(i));
            map[i] = next++;
        }
    }
    return map;
}

inline Vec3 face_normal(const SurfaceMesh& m, int f)
{
    const auto& t = m.F[f];
    return (m.V[t[1]] - m.V[t[0]]).cross(m.V[t[2]] - m.V[t[0]]);
}

inline double face_area(const SurfaceMesh& m, int f) { return 0.5 * face_normal(m, f).norm(); }

/// OBJ with a JSON parameter header, region tags and s values in comments.
inline void write_obj(std::ostream& os, const SurfaceMesh& m)
{
    os << "# shrinker mesh\n";
    if (!m.params_json.empty()) os << "# params: " << m.params_json << "\n";
    for (std::size_t i = 0; i < m.V.size(); ++i) {
        os << "v " << fmt_double(m.V[i].x()) << ' ' << fmt_double(m.V[i].y()) << ' ' << fmt_double(m.V[i].z())
           << '\n';
        if (!m.region.empty()) os << "# region: " << region_name(m.region[i]) << '\n';
        if (!m.s.empty()) os << "# s: " << fmt_double(m.s[i]) << '\n';
    }
    for (const auto& f : m.F) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

inline SurfaceMesh read_obj(std::istream& is)
{
    SurfaceMesh m;
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("v ", 0) == 0) {
            std::istringstream ls(line.substr(2));
            double x, y, z;
            ls >> x >> y >> z;
            m.V.emplace_back(x, y, z);
        } else if (line.rfind("f ", 0) == 0) {
            std::istringstream ls(line.substr(2));
            Tri t;
            for (int k = 0; k < 3; ++k) {
                std::string tok;
                ls >> tok;
                t[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
            }
            m.F.push_back(t);
        } else if (line.rfind("# region: ", 0) == 0) {
            m.region.push_back(region_from_name(line.substr(10)));
        } else if (line.rfind("# s: ", 0) == 0) {
            m.s.push_back(std::stod(line.substr(5)));
        } else if (line.rfind("# params: ", 0) == 0) {
            m.params_json = line.substr(10);
        }
    }
    if (!m.region.empty() && m.region.size() != m.V.size()) throw MeshError("OBJ region tags do not match vertices");
    return m;
}

} // namespace shrinker
