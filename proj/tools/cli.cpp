// Command-line front end: config ingestion, the pipeline commands and export.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "criteria.hpp"
#include "shrinker/profile_odes.hpp"
#include "shrinker/scherk.hpp"
#include "shrinker/shrinker_iterator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace shrinker;

namespace {

enum Exit { ok = 0, usage = 1, numerical = 2, invariant = 3 };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json default_config()
{
    ConstructionParams p;
    ProfileOptions po;
    return {
        {"params",
         {{"m", p.m},
          {"b", p.b},
          {"a", p.a},
          {"delta_s", p.delta_s},
          {"gamma", p.gamma},
          {"epsilon", p.epsilon},
          {"zeta", p.zeta},
          {"ubar_fraction", p.ubar_fraction},
          {"rho_factor", p.rho_factor},
          {"resolution", p.resolution},
          {"fine_factor", p.fine_factor},
          {"fine_length", p.fine_length},
          {"delta_c", p.delta_c},
          {"delta_theta", p.delta_theta}}},
        {"tolerances",
         {{"ode", 1e-10}, {"linear", 1e-8}, {"nonlinear", 1e-6}, {"max_steps", 30}, {"max_rounds", 50}}},
        {"solver", {{"mode", "auto"}, {"operator", "consistent"}, {"norm2", "scaled"}}},
        {"profile", {{"c", kSqrt2}, {"t_end", kSqrt2 * kPi / 2}, {"t0", po.t0}}},
        {"shoot", {{"points", 20}, {"span", po.delta_theta}}},
        {"scherk", {{"a", 0.0}, {"core_resolution", 0.1}, {"s_max", 8.0}, {"spacing", 0.1}}},
        {"input", {{"field", ""}, {"mesh", ""}}},
        {"output", "out"},
    };
}

// "pi/N" is accepted wherever a length is expected.
json normalise_value(const json& v)
{
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s.rfind("pi/", 0) == 0) {
            try {
                return kPi / std::stod(s.substr(3));
            } catch (const std::exception&) {
            }
        }
    }
    return v;
}

/// Merges over into base; keys must exist in base and keep their type.
void merge_checked(json& base, const json& over, const std::string& path)
{
    if (!over.is_object()) throw ConfigError("config: '" + path + "' must be an object");
    for (auto it = over.begin(); it != over.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
        json& dst = base[it.key()];
        json val = normalise_value(it.value());
        if (dst.is_object()) {
            merge_checked(dst, val, key);
            continue;
        }
        bool same = (dst.is_number() && val.is_number()) || (dst.is_string() && val.is_string());
        if (!same) throw ConfigError("config: '" + key + "' has the wrong type");
        if (dst.is_number_integer() && !val.is_number_integer())
            throw ConfigError("config: '" + key + "' must be an integer");
        dst = val;
    }
}

/// Applies "section.key=value"; the value is parsed as JSON, falling back to a string.
void apply_override(json& cfg, const std::string& assignment)
{
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json patch = value;
    std::stringstream ss(key);
    std::vector<std::string> parts;
    for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    merge_checked(cfg, patch, "");
}

ConstructionParams params_from(const json& cfg)
{
    const json& j = cfg["params"];
    ConstructionParams p;
    p.m = j["m"];
    p.b = j["b"];
    p.a = j["a"];
    p.delta_s = j["delta_s"];
    p.gamma = j["gamma"];
    p.epsilon = j["epsilon"];
    p.zeta = j["zeta"];
    p.ubar_fraction = j["ubar_fraction"];
    p.rho_factor = j["rho_factor"];
    p.resolution = j["resolution"];
    p.fine_factor = j["fine_factor"];
    p.fine_length = j["fine_length"];
    p.delta_c = j["delta_c"];
    p.delta_theta = j["delta_theta"];
    return p;
}

SolveMode mode_from(const json& cfg) { return parse_solve_mode(cfg["solver"]["mode"].get<std::string>()); }

OperatorKind operator_from(const json& cfg)
{
    std::string k = cfg["solver"]["operator"];
    if (k == "consistent") return OperatorKind::consistent;
    if (k == "cotan") return OperatorKind::cotan;
    throw ConfigError("config: solver.operator must be 'consistent' or 'cotan'");
}

Norm2Variant norm2_from(const json& cfg)
{
    std::string k = cfg["solver"]["norm2"];
    if (k == "scaled") return Norm2Variant::scaled;
    if (k == "plain") return Norm2Variant::plain;
    throw ConfigError("config: solver.norm2 must be 'scaled' or 'plain'");
}

void validate_config(const json& cfg)
{
    ConstructionParams p = params_from(cfg);
    try {
        p.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    mode_from(cfg);
    operator_from(cfg);
    norm2_from(cfg);
    for (const char* k : {"ode", "linear", "nonlinear"})
        if (!(cfg["tolerances"][k].get<double>() > 0))
            throw ConfigError(std::string("config: tolerances.") + k + " must be positive");
    if (cfg["shoot"]["points"].get<int>() < 2) throw ConfigError("config: shoot.points must be at least 2");
}

std::string sha256_hex(const std::string& data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    if (!EVP_Digest(data.data(), data.size(), md, &n, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

std::string read_file(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot read '" + path + "'");
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void strip_timings(json& j)
{
    if (j.is_object()) {
        j.erase("seconds");
        for (auto& [k, v] : j.items()) strip_timings(v);
    } else if (j.is_array()) {
        for (auto& v : j) strip_timings(v);
    }
}

/// Output directory, resolved config and the artifacts written so far.
class Run {
public:
    Run(std::string command, json cfg) : command_(std::move(command)), cfg_(std::move(cfg))
    {
        json hashed = cfg_;
        hashed.erase("output");
        std::string material = command_ + "\n" + hashed.dump();
        for (const char* k : {"field", "mesh"}) {
            std::string path = cfg_["input"][k];
            if (!path.empty()) material += "\n" + read_file(path);
        }
        input_hash_ = sha256_hex(material);
        dir_ = cfg_["output"].get<std::string>();
        fs::create_directories(dir_);
    }

    const json& config() const { return cfg_; }

    std::string header() const
    {
        return "# config: " + cfg_.dump() + "\n# input_hash: " + input_hash_ + "\n";
    }

    void write_text(const std::string& name, const std::string& body)
    {
        std::ofstream(fs::path(dir_) / name, std::ios::binary) << body;
        artifacts_[name] = sha256_hex(body);
    }

    void write_json(const std::string& name, json body)
    {
        strip_timings(body);
        body["config"] = cfg_;
        body["input_hash"] = input_hash_;
        body["command"] = command_;
        write_text(name, body.dump(2) + "\n");
    }

    void finish(int threads)
    {
        json m = {{"command", command_},
                  {"config", cfg_},
                  {"input_hash", input_hash_},
                  {"artifacts", artifacts_},
                  {"threads", threads}};
        std::ofstream(fs::path(dir_) / "manifest.json", std::ios::binary) << m.dump(2) << "\n";
    }

private:
    std::string command_;
    json cfg_;
    std::string input_hash_;
    std::string dir_;
    json artifacts_ = json::object();
};

std::string csv_line(std::initializer_list<double> values)
{
    std::string s;
    for (double v : values) s += (s.empty() ? "" : ",") + fmt_double(v);
    return s + "\n";
}

void cmd_profile(Run& run)
{
    const json& c = run.config()["profile"];
    ProfileOptions opt;
    opt.t0 = c["t0"];
    CapProfile p = integrate_geodesic(c["c"], c["t_end"], run.config()["tolerances"]["ode"], opt);
    std::ostringstream os;
    os << run.header();
    write_profile_csv(os, p);
    run.write_text("profile.csv", os.str());
    run.write_json("report.json", {{"samples", p.size()},
                                   {"t_end", p.t_end()},
                                   {"truncated", p.truncated},
                                   {"truncation_reason", p.truncation_reason}});
}

void cmd_shoot(Run& run)
{
    ConstructionParams p = params_from(run.config());
    const json& c = run.config()["shoot"];
    const int n = c["points"];
    const double span = c["span"], tol = run.config()["tolerances"]["ode"], z = p.tau() * p.a;
    const double th0 = sphere_crossing_angle(z);
    ProfileOptions opt;
    opt.delta_c = p.delta_c;
    opt.delta_theta = p.delta_theta;
    std::ostringstream os;
    os << run.header() << "theta_target,dtheta,c1,theta_achieved,residual,iterations\n";
    for (int k = 0; k < n; ++k) {
        double d = span * (2.0 * k / (n - 1) - 1);
        ShootResult r = shoot_cap(th0 + d, z, tol, opt);
        os << fmt_double(th0 + d) << ',' << fmt_double(d) << ',' << fmt_double(r.c1) << ','
           << fmt_double(r.theta_achieved) << ',' << fmt_double(r.residual) << ',' << r.iterations << '\n';
    }
    run.write_text("shoot.csv", os.str());
    run.write_json("report.json", {{"z_line", z}, {"sphere_angle", th0}});
}

void cmd_scherk(Run& run)
{
    ConstructionParams p = params_from(run.config());
    const json& c = run.config()["scherk"];
    double a = c["a"];
    json report;
    if (a <= 0) {
        OffsetResult r = determine_a(p.epsilon);
        a = r.a;
        report["decay_norm"] = r.achieved;
    }
    report["a"] = a;
    SurfaceMesh core = extract_core(c["core_resolution"], a);
    std::ostringstream obj;
    obj << run.header();
    write_obj(obj, core);
    run.write_text("core.obj", obj.str());

    const double h = c["spacing"], s_max = c["s_max"];
    std::ostringstream os;
    os << run.header() << "wing,s,y,X,Y,Z\n";
    const int ns = static_cast<int>(std::lround(s_max / h)), ny = static_cast<int>(std::lround(2 * kPi / h));
    const std::pair<const char*, Vec3 (*)(double, double, double)> wings[] = {
        {"top", top_wing}, {"bottom", bottom_wing}, {"outer", outer_wing}, {"inner", inner_wing}};
    for (const auto& [name, f] : wings)
        for (int i = 0; i <= ns; ++i)
            for (int j = 0; j <= ny; ++j) {
                double s = s_max * i / ns, y = -kPi + 2 * kPi * j / ny;
                Vec3 q = f(s, y, a);
                os << name << ',' << csv_line({s, y, q.x(), q.y(), q.z()});
            }
    run.write_text("wings.csv", os.str());
    report["core_vertices"] = core.V.size();
    run.write_json("report.json", report);
}

struct Built {
    ConstructionParams p;
    SurfaceLayout L;
    SurfaceMesh M;
};

Built build_surface(const json& cfg)
{
    Built B;
    B.p = params_from(cfg);
    apply_cap_fit(B.p);
    B.L = make_layout(B.p);
    B.M = assemble_initial_surface(B.p, B.L);
    std::string mesh = cfg["input"]["mesh"];
    if (!mesh.empty()) {
        std::ifstream is(mesh);
        SurfaceMesh other = read_obj(is);
        if (other.V.size() != B.M.V.size() || other.F != B.M.F)
            throw ConfigError("input.mesh does not match the combinatorics of the configured surface");
        B.M.V = other.V;
    }
    return B;
}

void cmd_build(Run& run)
{
    Built B = build_surface(run.config());
    std::ostringstream obj;
    obj << run.header();
    write_obj(obj, B.M);
    run.write_text("surface.obj", obj.str());
    TopologyReport t = check_topology(B.M);
    run.write_json("report.json", {{"params", to_json(B.p)},
                                   {"vertices", B.M.V.size()},
                                   {"faces", B.M.F.size()},
                                   {"manifold", t.manifold},
                                   {"oriented", t.oriented},
                                   {"boundary_vertices", t.boundary_vertices.size()}});
}

std::string field_csv(const Run& run, const MeshField& f)
{
    std::ostringstream os;
    os << run.header();
    write_field_csv(os, f);
    return os.str();
}

void cmd_residual(Run& run)
{
    Built B = build_surface(run.config());
    MeshAdjacency adj(B.M);
    MeshField F = residual(B.M, adj, B.M.V);
    run.write_text("residual.csv", field_csv(run, F));
    // Large-scale residual minus b w, in the exp-gamma-s norm.
    MeshField E = residual(B.M, adj, B.M.V, Scale::large, B.p.tau());
    MeshField w = sigma_w(B.M, B.p, B.L);
    for (std::size_t i = 0; i < E.size(); ++i) E[i] -= B.p.b * w[i];
    NormReport structure = weighted_norm(B.M, adj, E.values, NormSpec{}, B.p);
    GlobalNormReport n0 = norm0(B.M, adj, F.values, B.p);
    run.write_json("report.json", {{"params", to_json(B.p)},
                                   {"sup_residual", sup_abs(F)},
                                   {"norm0", {{"value", n0.value}, {"inner", n0.inner}, {"outer", n0.outer}}},
                                   {"residual_minus_bw",
                                    {{"weight", "exp-gamma-s"},
                                     {"order", 0},
                                     {"value", structure.value},
                                     {"s_at", structure.s_at}}}});
}

MeshField read_field_csv(const std::string& path, std::size_t n)
{
    std::istringstream is(read_file(path));
    MeshField f;
    f.values.assign(n, 0.0);
    std::vector<char> seen(n, 0);
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line != "vertex_id,value") throw ConfigError("field CSV: expected header vertex_id,value");
            header = true;
            continue;
        }
        auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError("field CSV: malformed line '" + line + "'");
        std::size_t id = std::stoul(line.substr(0, comma));
        if (id >= n) throw ConfigError("field CSV: vertex id out of range");
        f[id] = std::stod(line.substr(comma + 1));
        seen[id] = 1;
    }
    for (char s : seen)
        if (!s) throw ConfigError("field CSV: not every vertex has a value");
    return f;
}

void cmd_solve_linear(Run& run)
{
    const json& cfg = run.config();
    ConstructionParams p = params_from(cfg);
    std::unique_ptr<SurfaceContext> c = make_context(p, p.b, operator_from(cfg));
    std::string path = cfg["input"]["field"];
    MeshField E = path.empty() ? c->F0 : read_field_csv(path, c->M.V.size());
    PatchOptions opt;
    opt.tol = cfg["tolerances"]["linear"];
    opt.max_rounds = cfg["tolerances"]["max_rounds"];
    LinearSolution s = global_linear_solve(*c->solver, E, mode_from(cfg), opt);
    run.write_text("correction.csv", field_csv(run, s.v));
    run.write_json("report.json", {{"b", s.b},
                                   {"patching", s.report.to_json()},
                                   {"v_norm2", norm2(c->M, *c->adj, s.v.values, c->p, norm2_from(cfg)).value}});
}

void cmd_solve(Run& run)
{
    const json& cfg = run.config();
    ShrinkerOptions opt;
    opt.tol = cfg["tolerances"]["nonlinear"];
    opt.max_steps = cfg["tolerances"]["max_steps"];
    opt.mode = mode_from(cfg);
    opt.kind = operator_from(cfg);
    opt.norm2 = norm2_from(cfg);
    ShrinkerResult R = solve_shrinker(params_from(cfg), opt);
    std::ostringstream obj;
    obj << run.header();
    write_obj(obj, R.mesh);
    run.write_text("surface.obj", obj.str());
    run.write_text("residual.csv", field_csv(run, R.residual));
    run.write_text("correction.csv", field_csv(run, R.state.v));
    run.write_json("report.json", R.to_json());
    if (!R.converged) throw ConvergenceError("solve: no convergence in max_steps", R.state.residual_norm_history);
}

// Fast invariants; the long criteria live in the acceptance binary.
int cmd_check(Run& run)
{
    using namespace shrinker::acceptance;
    json results = json::array();
    bool all = true;
    for (const Criterion& c : criteria()) {
        if (c.id > 6 && c.id != 9) continue;
        double secs = 0;
        Outcome o = run_criterion(c, secs);
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail << std::endl;
        results.push_back({{"name", c.name}, {"pass", o.pass}, {"detail", o.detail}});
    }
    ConstructionParams p = params_from(run.config());
    apply_cap_fit(p);
    SurfaceMesh M = assemble_initial_surface(p);
    TopologyReport t = check_topology(M);
    double sym = position_symmetry_defect(M, M.V);
    bool surface_ok = sym < 1e-12 && t.manifold && t.oriented;
    all = all && surface_ok;
    std::string detail =
        "symmetry defect " + sci(sym) + (t.manifold && t.oriented ? ", manifold and oriented" : ", bad edges");
    std::cout << (surface_ok ? "PASS" : "FAIL") << "  assembled surface: " << detail << std::endl;
    results.push_back({{"name", "assembled surface"}, {"pass", surface_ok}, {"detail", detail}});
    run.write_json("check.json", {{"results", results}, {"pass", all}});
    return all ? ok : invariant;
}

json diagnostic(const std::exception& e)
{
    json d = {{"message", e.what()}};
    if (auto* c = dynamic_cast<const ConvergenceError*>(&e)) {
        d["type"] = "convergence";
        d["history"] = c->history;
    } else if (auto* m = dynamic_cast<const MeshError*>(&e)) {
        d["type"] = "mesh";
        d["items"] = m->items;
    } else if (auto* b = dynamic_cast<const BracketError*>(&e)) {
        d["type"] = "bracket";
        d["args"] = b->args;
        d["values"] = b->values;
    } else if (dynamic_cast<const SolverError*>(&e)) {
        d["type"] = "solver";
    } else if (dynamic_cast<const DomainError*>(&e)) {
        d["type"] = "domain";
    } else {
        d["type"] = "other";
    }
    return d;
}

int thread_count()
{
    const char* env = std::getenv("SHRINKER_THREADS");
    if (!env || !*env) return 0;
    char* end = nullptr;
    long n = std::strtol(env, &end, 10);
    if (*end || n < 0) throw ConfigError("SHRINKER_THREADS must be a non-negative integer");
    return static_cast<int>(n);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Self-shrinker construction pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path, out;
    std::vector<std::string> sets;
    std::optional<int> m;
    std::optional<double> b, c;
    std::optional<std::string> resolution, field, mesh, mode;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--set", sets, "override: section.key=value (repeatable)");
    app.add_option("--m", m, "symmetry order");
    app.add_option("--b", b, "unbalancing angle");
    app.add_option("--resolution", resolution, "wing spacing (number or pi/N)");
    app.add_option("--c", c, "profile: axis height");
    app.add_option("--field", field, "solve-linear: field CSV (vertex_id,value)");
    app.add_option("--mesh", mesh, "residual/build: OBJ with the same combinatorics");
    app.add_option("--mode", mode, "linear solve mode: patched, monolithic or auto");
    app.add_option("--out", out, "output directory");
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"profile", "integrate a cap profile to CSV"},
        {"shoot", "shooting table over a grid of target angles"},
        {"scherk", "export the Scherk core mesh and wing samples"},
        {"build", "assemble the initial surface to OBJ"},
        {"residual", "residual field and norm report"},
        {"solve-linear", "global linear solve on a field"},
        {"solve", "full fixed-point run"},
        {"check", "fast invariant suite"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? ok : usage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    json cfg = default_config();
    int threads = 0;
    try {
        if (!config_path.empty()) {
            json file = json::parse(read_file(config_path), nullptr, false);
            if (file.is_discarded()) throw ConfigError("config: '" + config_path + "' is not valid JSON");
            merge_checked(cfg, file, "");
        }
        auto set = [&](const std::string& key, const json& v) { apply_override(cfg, key + "=" + v.dump()); };
        if (m) set("params.m", *m);
        if (b) set("params.b", *b);
        if (resolution) set("params.resolution", normalise_value(*resolution));
        if (c) set("profile.c", *c);
        if (field) set("input.field", *field);
        if (mesh) set("input.mesh", *mesh);
        if (mode) set("solver.mode", *mode);
        if (!out.empty()) set("output", out);
        for (const std::string& s : sets) apply_override(cfg, s);
        validate_config(cfg);
        threads = thread_count();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    }
    if (threads > 0) Eigen::setNbThreads(threads);

    std::unique_ptr<Run> run;
    try {
        run = std::make_unique<Run>(command, cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    }
    int code = ok;
    try {
        if (command == "profile") cmd_profile(*run);
        else if (command == "shoot") cmd_shoot(*run);
        else if (command == "scherk") cmd_scherk(*run);
        else if (command == "build") cmd_build(*run);
        else if (command == "residual") cmd_residual(*run);
        else if (command == "solve-linear") cmd_solve_linear(*run);
        else if (command == "solve") cmd_solve(*run);
        else if (command == "check") code = cmd_check(*run);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    } catch (const std::exception& e) {
        json d = diagnostic(e);
        std::cerr << "numerical failure: " << d.dump() << "\n";
        run->write_json("error.json", {{"error", d}});
        code = numerical;
    }
    run->finish(threads);
    return code;
}
