#include "horoforge/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"

namespace horoforge {

Packing two_horosphere_packing() { return make_packing({Horosphere::plane(1.0), Horosphere::sphere(0.0, 0.5)}); }

Packing triangle_packing() {
    return make_packing({Horosphere::plane(1.0), Horosphere::sphere(0.0, 0.5), Horosphere::sphere(1.0, 0.5)});
}

Packing demo_packing(const std::string& name) {
    if (name == "two") return two_horosphere_packing();
    if (name == "triangle") return triangle_packing();
    if (name == "lattice") return build_lattice_packing(1.0);
    throw ValidationError("unknown demo configuration '" + name + "' (expected two, triangle or lattice)");
}

std::uint64_t fnv1a(const std::string& data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("cannot parse '" + item + "' as a number");
        }
    }
    return out;
}

std::vector<double> parse_ladder(const std::string& spec) {
    std::vector<double> taus;
    const auto colon = spec.find(':');
    if (colon != std::string::npos) {
        const auto start = parse_doubles(spec.substr(0, colon));
        int count = 0;
        try {
            count = std::stoi(spec.substr(colon + 1));
        } catch (const std::exception&) {
            throw ValidationError("ladder count in '" + spec + "' is not an integer");
        }
        if (start.size() != 1 || count < 2) throw ValidationError("ladder must look like start:count with count >= 2");
        for (int k = 0; k < count; ++k) taus.push_back(start[0] / std::pow(2.0, k));
    } else {
        taus = parse_doubles(spec);
    }
    if (taus.size() < 2) throw ValidationError("a ladder needs at least two values of tau");
    for (double t : taus)
        if (!(t > 0 && t < tau_max)) throw ValidationError("ladder values must lie in (0, 1e-2)");
    return taus;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("slope fit needs two or more matching points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0 && y[k] > 0)) return std::numeric_limits<double>::quiet_NaN();
        const double lx = std::log(x[k]), ly = std::log(y[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

LadderReport run_ladder(SurfaceModel M, const std::vector<double>& taus, const SolveOptions& opt) {
    if (taus.size() < 2) throw ValidationError("a ladder needs at least two values of tau");
    LadderReport L;
    MonodromyOptions mo;
    mo.rel_tol = opt.rel_tol;
    std::vector<double> x, xlog, def, sdef, cf, db, q;
    for (double tau : taus) {
        M.set_tau(tau);
        const SolveReport rep = newton_solve(M, opt);
        LadderRow r;
        r.tau = tau;
        r.s = M.s();
        r.iterations = rep.iterations;
        r.residual = rep.residual;
        r.verified_residual = rep.verified_residual;
        r.max_defect = rep.max_defect;
        r.max_solved_defect = rep.max_solved_defect;
        for (int k = 0; k < M.m(); ++k) {
            const auto& P = M.pairs[k];
            r.b.push_back(P.b);
            r.max_db = std::max(r.max_db, std::abs(P.b - M.b0(k)));
            r.max_q = std::max({r.max_q, std::abs(P.q_ij), std::abs(P.q_ji)});
            r.closed_form_err =
                std::max(r.closed_form_err, (pi_gamma_numeric(M, k, mo) - pi_gamma_closed_form(M, k)).norm());
        }
        x.push_back(tau);
        xlog.push_back(tau * std::abs(std::log(tau)));
        def.push_back(r.max_defect);
        sdef.push_back(r.max_solved_defect);
        cf.push_back(r.closed_form_err);
        db.push_back(r.max_db);
        q.push_back(r.max_q);
        L.C_db = std::max(L.C_db, r.max_db / xlog.back());
        L.rows.push_back(std::move(r));
    }
    L.slope_defect = loglog_slope(x, def);
    L.slope_solved_defect = loglog_slope(x, sdef);
    L.slope_closed_form = loglog_slope(x, cf);
    L.slope_db = loglog_slope(xlog, db);
    L.slope_q = loglog_slope(x, q);
    return L;
}

nlohmann::json ladder_json(const LadderReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        nlohmann::json b = nlohmann::json::array();
        for (const cplx& v : row.b) b.push_back(cplx_json(v));
        rows.push_back({{"tau", row.tau},
                        {"s", row.s},
                        {"iterations", row.iterations},
                        {"residual", row.residual},
                        {"verified_residual", row.verified_residual},
                        {"b", b},
                        {"max_abs_b_minus_b0", row.max_db},
                        {"max_abs_q", row.max_q},
                        {"max_solved_defect", row.max_solved_defect},
                        {"max_defect", row.max_defect},
                        {"closed_form_error", row.closed_form_err}});
    }
    return {{"rows", rows},
            {"fits",
             {{"slope_defect", r.slope_defect},
              {"slope_solved_defect", r.slope_solved_defect},
              {"slope_closed_form", r.slope_closed_form},
              {"slope_b_vs_tau_log_tau", r.slope_db},
              {"C_b_vs_tau_log_tau", r.C_db},
              {"slope_q", r.slope_q}}}};
}

std::string ladder_csv(const LadderReport& r) {
    std::ostringstream os;
    os.precision(12);
    os << "tau,s,iterations,residual,max_abs_b_minus_b0,max_abs_q,max_solved_defect,max_defect,closed_form_error\n";
    for (const auto& row : r.rows)
        os << row.tau << ',' << row.s << ',' << row.iterations << ',' << row.residual << ',' << row.max_db << ','
           << row.max_q << ',' << row.max_solved_defect << ',' << row.max_defect << ',' << row.closed_form_err
           << '\n';
    return os.str();
}

namespace {

// Tracks files read and written and produces the run manifest.
class Session {
public:
    Session(std::vector<std::string> args, std::ostream& out, std::ostream& err)
        : args_(std::move(args)), out_(out), err_(err) {}

    nlohmann::json parameters = nlohmann::json::object();

    std::string read(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IOError("cannot open '" + path + "'");
        std::ostringstream ss;
        ss << f.rdbuf();
        const std::string data = ss.str();
        inputs_.push_back({{"path", path}, {"fnv1a", hex64(fnv1a(data))}});
        return data;
    }

    nlohmann::json read_json(const std::string& path) {
        const std::string text = read(path);
        try {
            return nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
        }
    }

    void emit(const std::string& path, const std::string& text) {
        if (path.empty() || path == "-") {
            out_ << text;
            return;
        }
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IOError("cannot open '" + path + "' for writing");
        f << text;
        if (!f) throw IOError("write failed for '" + path + "'");
        record_output(path, text);
    }

    void record_output(const std::string& path, const std::string& text) {
        outputs_.push_back({{"path", path}, {"fnv1a", hex64(fnv1a(text))}});
    }

    nlohmann::json manifest() const {
        return {{"tool", "horoforge"},
                {"version", kVersion},
                {"command", args_},
                {"parameters", parameters},
                {"inputs", inputs_},
                {"outputs", outputs_}};
    }

    // Next to the primary output, or on stderr when the output went to stdout.
    void finish(const std::string& primary, const std::string& explicit_path = "") {
        const std::string text = manifest().dump(2) + "\n";
        std::string path = explicit_path;
        if (path.empty() && !primary.empty() && primary != "-") path = primary + ".manifest.json";
        if (path.empty()) {
            err_ << "manifest " << manifest().dump() << "\n";
            return;
        }
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IOError("cannot open '" + path + "' for writing");
        f << text;
    }

    std::ostream& out() { return out_; }
    std::ostream& err() { return err_; }

private:
    std::vector<std::string> args_;
    std::ostream& out_;
    std::ostream& err_;
    nlohmann::json inputs_ = nlohmann::json::array();
    nlohmann::json outputs_ = nlohmann::json::array();
};

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json with_counts(const Packing& P) {
    nlohmann::json j = packing_to_json(P);
    j["n"] = P.n();
    j["m"] = P.m();
    return j;
}

std::vector<double> xi_for(const std::string& xi, int n) {
    if (xi.empty()) return std::vector<double>(n, 1.0);
    const std::vector<double> v = parse_doubles(xi);
    // A single value applies to every horosphere.
    return v.size() == 1 ? std::vector<double>(n, v[0]) : v;
}

void require_connected(const SurfaceModel& M) {
    std::vector<Edge> edges;
    for (const auto& P : M.pairs) edges.emplace_back(P.i, P.j);
    if (count_components(M.n(), edges) != 1) throw ValidationError("tangency graph is not connected");
}

// Packing JSON, model JSON, or solved JSON ({"model": ..., "solve": ...}).
SurfaceModel load_model(const nlohmann::json& j, const std::string& xi, double tau) {
    if (j.contains("horospheres") && !j.contains("pairs")) {
        const Packing P = packing_from_json(j);
        return from_packing(P, xi_for(xi, P.n()), tau);
    }
    SurfaceModel M = model_from_json(j.contains("model") ? j.at("model") : j);
    require_connected(M);
    return M;
}

std::string patches_path_for(const std::string& mesh_path) {
    std::filesystem::path p(mesh_path);
    const std::string stem = p.stem().string();
    return (p.parent_path() / (stem + "-patches.json")).string();
}

struct SolveFlags {
    double tol = 1e-9;
    int max_iter = 12;
    double fd_step = 1e-6;
    double rel_tol = 1e-12;
    int threads = 0;

    void add(CLI::App* app) {
        app->add_option("--tol", tol, "Newton stopping tolerance on the scaled residual")->capture_default_str();
        app->add_option("--max-iter", max_iter, "Newton iteration cap")->capture_default_str();
        app->add_option("--fd-step", fd_step, "relative finite-difference step for the Jacobian")
            ->capture_default_str();
        app->add_option("--rel-tol", rel_tol, "relative tolerance of the path integrator")->capture_default_str();
        app->add_option("--threads", threads, "worker threads (0: HOROFORGE_THREADS or all cores)")
            ->capture_default_str();
    }
    SolveOptions options() const {
        SolveOptions o;
        o.tol_res = tol;
        o.max_iter = max_iter;
        o.fd_step = fd_step;
        o.rel_tol = rel_tol;
        o.threads = threads;
        return o;
    }
    nlohmann::json json() const {
        return {{"tol", tol}, {"max_iter", max_iter}, {"fd_step", fd_step}, {"rel_tol", rel_tol}};
    }
};

struct MeshFlags {
    double eps = 0.2;
    double R = 5.0;
    int grid = 64;
    double rel_tol = 1e-10;
    std::string model = "halfspace";

    void add(CLI::App* app) {
        app->add_option("--eps", eps, "collar radius around each node, in (0, 1)")->capture_default_str();
        app->add_option("--R", R, "cap radius in the plane charts")->capture_default_str();
        app->add_option("--grid", grid, "angular resolution of rings and strips")->capture_default_str();
        app->add_option("--mesh-rel-tol", rel_tol, "relative tolerance of the per-edge integration")
            ->capture_default_str();
        app->add_option("--model", model, "export model: halfspace or ball")->capture_default_str();
    }
    MeshOptions options(int threads) const {
        MeshOptions o;
        o.eps = eps;
        o.R = R;
        o.grid = grid;
        o.rel_tol = rel_tol;
        o.threads = threads;
        return o;
    }
    nlohmann::json json() const {
        return {{"eps", eps}, {"R", R}, {"grid", grid}, {"rel_tol", rel_tol}, {"model", model}};
    }
};

struct EndFlags {
    double r_lo = 1e2, r_hi = 1e5;
    int n_ang = 16, n_rad = 24;

    void add(CLI::App* app) {
        app->add_option("--r-lo", r_lo, "inner radius of the far-field annulus (in |mu z|)")->capture_default_str();
        app->add_option("--r-hi", r_hi, "outer radius of the far-field annulus")->capture_default_str();
        app->add_option("--n-ang", n_ang, "angular samples of the far-field patch")->capture_default_str();
        app->add_option("--n-rad", n_rad, "radial samples of the far-field patch")->capture_default_str();
    }
    std::vector<EndAnalysis> analyze(const SurfaceModel& M) const {
        const BaseFrames B = base_frames(M);
        std::vector<EndAnalysis> out;
        for (int i = 0; i < M.n(); ++i) out.push_back(analyze_end(M, B, i, r_lo, r_hi, n_ang, n_rad));
        return out;
    }
    nlohmann::json json() const { return {{"r_lo", r_lo}, {"r_hi", r_hi}, {"n_ang", n_ang}, {"n_rad", n_rad}}; }
};

nlohmann::json probe_json(const ProbeReport& r) {
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& h : r.examples)
        ex.push_back({{"patch_a", h.patch_a}, {"tri_a", h.tri_a}, {"patch_b", h.patch_b}, {"tri_b", h.tri_b}});
    return {{"triangles", r.triangles},
            {"candidate_pairs", r.candidate_pairs},
            {"intersections", r.intersections},
            {"examples", ex}};
}

nlohmann::json mesh_summary(const SurfaceModel& M, const SurfaceMesh& S) {
    long tris = 0, verts = 0;
    for (const auto& p : S.patches) {
        tris += static_cast<long>(p.triangles.size());
        verts += static_cast<long>(p.size());
    }
    nlohmann::json j = {{"n", M.n()},
                        {"m", M.m()},
                        {"genus", M.m() - M.n() + 1},
                        {"ends", M.n()},
                        {"tau", M.tau},
                        {"patches", S.patches.size()},
                        {"triangles", tris},
                        {"patch_vertices", verts},
                        {"cap_radius", S.cap_radius},
                        {"diagnostics", diagnostics_json(S.diag)}};
    if (!(M.tau > 0)) j["cap_horosphere_error"] = cap_horosphere_error(M, S);
    return j;
}

nlohmann::json solved_json(const SurfaceModel& M, const SolveReport& r) {
    return {{"model", model_to_json(M)}, {"solve", solve_report_json(r)}};
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"horoforge: near-degenerate CMC-1 surfaces from horosphere packings"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));
    std::string manifest_path;
    app.add_option("--manifest", manifest_path, "where to write the run manifest (default: next to -o)");

    // pack
    auto* pack = app.add_subcommand("pack", "generate or check packings");
    pack->require_subcommand(1);
    double lat_R = 1.0;
    std::string pack_out;
    auto* lattice = pack->add_subcommand("lattice", "lattice packing of horospheres within radius R");
    lattice->add_option("--R", lat_R, "lattice radius")->capture_default_str();
    lattice->add_option("-o,--output", pack_out, "output packing JSON (default stdout)");
    int apo_steps = 2;
    std::uint64_t apo_seed = 1;
    auto* apo = pack->add_subcommand("apollonian", "Apollonian-type packing grown from a tangent triple");
    apo->add_option("--steps", apo_steps, "number of inserted horospheres")->capture_default_str();
    apo->add_option("--seed", apo_seed, "seed for the choice of face at each step")->capture_default_str();
    apo->add_option("-o,--output", pack_out, "output packing JSON (default stdout)");
    int chain_n = 5;
    auto* chain = pack->add_subcommand("chain2d", "chain of horocycles in the hyperbolic plane");
    chain->add_option("--n", chain_n, "number of horocycles")->capture_default_str();
    chain->add_option("-o,--output", pack_out, "output packing JSON (default stdout)");
    std::string verify_in;
    std::uint64_t verify_seed = 1;
    auto* verify = pack->add_subcommand("verify", "check a packing and report its combinatorial bounds (CSV)");
    verify->add_option("packing", verify_in, "packing JSON")->required();
    verify->add_option("--seed", verify_seed, "seed recorded with the report")->capture_default_str();
    verify->add_option("-o,--output", pack_out, "output CSV (default stdout)");
    double scan_Rmax = 10.0;
    auto* scan = pack->add_subcommand("scan", "lattice ratio scan m(R)/n(R) (CSV)");
    scan->add_option("--R-max", scan_Rmax, "largest lattice radius")->capture_default_str();
    scan->add_option("-o,--output", pack_out, "output CSV (default stdout)");

    // model build
    auto* model = app.add_subcommand("model", "surface model operations");
    model->require_subcommand(1);
    std::string build_in, build_out, xi;
    double build_tau = 1e-4;
    auto* build = model->add_subcommand("build", "build the surface model of a packing");
    build->add_option("packing", build_in, "packing JSON")->required();
    build->add_option("--xi", xi, "comma-separated deflation speeds (default all 1)");
    build->add_option("--tau", build_tau, "degeneration parameter, in [0, 1e-2)")->capture_default_str();
    build->add_option("-o,--output", build_out, "output model JSON (default stdout)");

    // solve
    auto* solve = app.add_subcommand("solve", "solve the first-order monodromy problem");
    std::string solve_in, solve_out, solve_csv, ladder_spec;
    double solve_tau = std::numeric_limits<double>::quiet_NaN();
    SolveFlags sf;
    solve->add_option("input", solve_in, "model, solved model or packing JSON")->required();
    solve->add_option("--tau", solve_tau, "override the model's tau, in [0, 1e-2)");
    solve->add_option("--xi", xi, "deflation speeds when the input is a packing");
    solve->add_option("-o,--output", solve_out, "output solved JSON, or ladder report with --ladder");
    solve->add_option("--csv", solve_csv, "convergence (or ladder) CSV");
    solve->add_option("--ladder", ladder_spec, "tau ladder, start:count (halving) or a comma list");
    sf.add(solve);

    auto* ladder = app.add_subcommand("ladder", "solve along a tau ladder and fit convergence slopes");
    std::string ladder_in, ladder_out, ladder_csv_path;
    std::string ladder_taus = "1e-3:4";
    ladder->add_option("input", ladder_in, "model, solved model or packing JSON")->required();
    ladder->add_option("--taus", ladder_taus, "start:count (halving) or a comma list")->capture_default_str();
    ladder->add_option("--xi", xi, "deflation speeds when the input is a packing");
    ladder->add_option("-o,--output", ladder_out, "output ladder report JSON (default stdout)");
    ladder->add_option("--csv", ladder_csv_path, "ladder CSV");
    SolveFlags lf;
    lf.add(ladder);

    // mesh
    auto* mesh = app.add_subcommand("mesh", "triangulate the surface and export OBJ or PLY");
    std::string mesh_in, mesh_out = "surface.obj", mesh_patches;
    int threads = 0;
    MeshFlags mf;
    mesh->add_option("input", mesh_in, "solved model JSON")->required();
    mesh->add_option("-o,--output", mesh_out, "surface mesh (.obj, or .ply by extension)")->capture_default_str();
    mesh->add_option("--patches", mesh_patches, "patch JSON for the probe (default <output stem>-patches.json)");
    mesh->add_option("--threads", threads, "worker threads (0: HOROFORGE_THREADS or all cores)");
    mf.add(mesh);

    // ends
    auto* ends = app.add_subcommand("ends", "end exponents and far-field fits (CSV)");
    std::string ends_in, ends_out;
    EndFlags ef;
    ends->add_option("input", ends_in, "solved model JSON")->required();
    ends->add_option("-o,--output", ends_out, "output CSV (default stdout)");
    ef.add(ends);

    // probe
    auto* probe = app.add_subcommand("probe", "triangle self-intersection scan of a patch JSON");
    std::string probe_in, probe_out;
    probe->add_option("patches", probe_in, "patch JSON written by mesh")->required();
    probe->add_option("-o,--output", probe_out, "output report JSON (default stdout)");

    // demo
    auto* demo = app.add_subcommand("demo", "run pack, model, solve, mesh, ends and probe in one go");
    std::string demo_config = "triangle", demo_dir = "horoforge-demo";
    double demo_tau = 1e-4;
    MeshFlags df;
    SolveFlags dsf;
    EndFlags def;
    demo->add_option("--config", demo_config, "two, triangle or lattice")->capture_default_str();
    demo->add_option("--tau", demo_tau, "degeneration parameter")->capture_default_str();
    demo->add_option("--xi", xi, "comma-separated deflation speeds (default all 1)");
    demo->add_option("--out-dir", demo_dir, "output directory")->capture_default_str();
    df.add(demo);
    dsf.add(demo);
    def.add(demo);

    std::vector<std::string> full{"horoforge"};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : full) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    Session S(args, out, err);
    try {
        if (*lattice) {
            S.parameters = {{"R", lat_R}};
            S.emit(pack_out, dump(with_counts(build_lattice_packing(lat_R))));
            S.finish(pack_out, manifest_path);
        } else if (*apo) {
            S.parameters = {{"steps", apo_steps}, {"seed", apo_seed}};
            S.emit(pack_out, dump(with_counts(build_apollonian_packing(apo_steps, apo_seed))));
            S.finish(pack_out, manifest_path);
        } else if (*chain) {
            S.parameters = {{"n", chain_n}};
            const Packing2D P = build_horocycle_chain(chain_n);
            nlohmann::json j = packing2d_to_json(P);
            j["n"] = P.n();
            j["m"] = P.m();
            S.emit(pack_out, dump(j));
            S.finish(pack_out, manifest_path);
        } else if (*verify) {
            S.parameters = {{"seed", verify_seed}};
            const nlohmann::json j = S.read_json(verify_in);
            if (j.contains("horocycles")) {
                const BoundsReport2D r = verify_packing_bounds(packing2d_from_json(j));
                std::ostringstream os;
                os << "n,m,bound_2d,bound_2d_ok,planar_vertices,planar_edges,planar_ok\n"
                   << r.n << ',' << r.m << ',' << r.bound_2d << ',' << r.bound_2d_ok << ',' << r.planar_vertices
                   << ',' << r.planar_edges << ',' << r.planar_ok << '\n';
                S.emit(pack_out, os.str());
                S.finish(pack_out, manifest_path);
                if (!r.bound_2d_ok || !r.planar_ok) throw InvariantViolation("packing violates the planar bounds");
            } else {
                const Packing P = packing_from_json(j);
                validate_packing(P);
                const BoundsReport r = verify_packing_bounds(P, verify_seed);
                S.emit(pack_out, bounds_csv(r));
                S.finish(pack_out, manifest_path);
                if (!r.bound_3d_ok || !r.lemma_ok) throw InvariantViolation("packing violates the tangency bounds");
            }
        } else if (*scan) {
            S.parameters = {{"R_max", scan_Rmax}};
            S.emit(pack_out, scan_csv(lattice_ratio_scan(scan_Rmax)));
            S.finish(pack_out, manifest_path);
        } else if (*build) {
            S.parameters = {{"tau", build_tau}, {"xi", xi}};
            const Packing P = packing_from_json(S.read_json(build_in));
            const SurfaceModel M = from_packing(P, xi_for(xi, P.n()), build_tau);
            S.emit(build_out, dump(model_to_json(M)));
            S.finish(build_out, manifest_path);
        } else if (*solve) {
            const nlohmann::json j = S.read_json(solve_in);
            const double tau0 = std::isnan(solve_tau) ? 1e-4 : solve_tau;
            SurfaceModel M = load_model(j, xi, tau0);
            if (!std::isnan(solve_tau)) M.set_tau(solve_tau);
            S.parameters = sf.json();
            S.parameters["tau"] = M.tau;
            if (!ladder_spec.empty()) {
                S.parameters["ladder"] = ladder_spec;
                const LadderReport L = run_ladder(M, parse_ladder(ladder_spec), sf.options());
                if (!solve_csv.empty()) S.emit(solve_csv, ladder_csv(L));
                S.emit(solve_out, dump(ladder_json(L)));
            } else {
                const SolveReport r = newton_solve(M, sf.options());
                if (!solve_csv.empty()) S.emit(solve_csv, convergence_csv(r));
                S.emit(solve_out, dump(solved_json(M, r)));
            }
            S.finish(solve_out, manifest_path);
        } else if (*ladder) {
            SurfaceModel M = load_model(S.read_json(ladder_in), xi, 1e-4);
            S.parameters = lf.json();
            S.parameters["taus"] = ladder_taus;
            const LadderReport L = run_ladder(M, parse_ladder(ladder_taus), lf.options());
            if (!ladder_csv_path.empty()) S.emit(ladder_csv_path, ladder_csv(L));
            S.emit(ladder_out, dump(ladder_json(L)));
            S.finish(ladder_out, manifest_path);
        } else if (*mesh) {
            const SurfaceModel M = load_model(S.read_json(mesh_in), xi, 1e-4);
            S.parameters = mf.json();
            const ExportModel em = parse_export_model(mf.model);
            const SurfaceMesh SM = build_surface(M, mf.options(threads));
            const std::string text = mesh_out.size() >= 4 && mesh_out.compare(mesh_out.size() - 4, 4, ".ply") == 0
                                         ? mesh_to_ply(SM.patches, em)
                                         : mesh_to_obj(SM.patches, em);
            S.emit(mesh_out, text);
            S.emit(mesh_patches.empty() ? patches_path_for(mesh_out) : mesh_patches,
                   patches_to_json(SM.patches).dump() + "\n");
            S.emit("", dump(mesh_summary(M, SM)));
            S.finish(mesh_out, manifest_path);
        } else if (*ends) {
            const SurfaceModel M = load_model(S.read_json(ends_in), xi, 1e-4);
            S.parameters = ef.json();
            S.emit(ends_out, ends_csv(ef.analyze(M)));
            S.finish(ends_out, manifest_path);
        } else if (*probe) {
            const ProbeReport r = embeddedness_probe(patches_from_json(S.read_json(probe_in)));
            S.emit(probe_out, dump(probe_json(r)));
            S.finish(probe_out, manifest_path);
            if (r.intersections > 0)
                throw InvariantViolation(std::to_string(r.intersections) + " triangle pairs intersect");
        } else if (*demo) {
            namespace fs = std::filesystem;
            std::error_code ec;
            fs::create_directories(demo_dir, ec);
            if (ec) throw IOError("cannot create '" + demo_dir + "': " + ec.message());
            auto at = [&](const std::string& f) { return (fs::path(demo_dir) / f).string(); };
            S.parameters = {{"config", demo_config}, {"tau", demo_tau}, {"xi", xi},
                            {"solve", dsf.json()},   {"mesh", df.json()}, {"ends", def.json()}};
            const ExportModel em = parse_export_model(df.model);

            const Packing P = demo_packing(demo_config);
            S.emit(at("packing.json"), dump(with_counts(P)));
            validate_packing(P);
            const BoundsReport br = verify_packing_bounds(P, 1);
            S.emit(at("bounds.csv"), bounds_csv(br));
            if (!br.bound_3d_ok || !br.lemma_ok) throw InvariantViolation("packing violates the tangency bounds");

            SurfaceModel M = from_packing(P, xi_for(xi, P.n()), demo_tau);
            S.emit(at("model.json"), dump(model_to_json(M)));
            const SolveReport sr = newton_solve(M, dsf.options());
            S.emit(at("convergence.csv"), convergence_csv(sr));
            S.emit(at("solved.json"), dump(solved_json(M, sr)));

            const SurfaceMesh SM = build_surface(M, df.options(dsf.threads));
            S.emit(at("surface.obj"), mesh_to_obj(SM.patches, em));
            S.emit(at("surface-patches.json"), patches_to_json(SM.patches).dump() + "\n");
            const nlohmann::json summary = mesh_summary(M, SM);
            S.emit(at("mesh.json"), dump(summary));

            S.emit(at("ends.csv"), ends_csv(def.analyze(M)));

            const ProbeReport pr = embeddedness_probe(SM.patches);
            S.emit(at("probe.json"), dump(probe_json(pr)));
            S.finish("", manifest_path.empty() ? at("manifest.json") : manifest_path);

            out << "config " << demo_config << ": n=" << M.n() << " m=" << M.m() << " genus=" << M.m() - M.n() + 1
                << " ends=" << M.n() << "\n"
                << "solve: " << sr.iterations << " iterations, residual " << sr.residual << "\n"
                << "mesh: " << summary.at("triangles").get<long>() << " triangles in " << SM.patches.size()
                << " patches\n"
                << "probe: " << pr.intersections << " intersections\n";
            if (pr.intersections > 0)
                throw InvariantViolation(std::to_string(pr.intersections) + " triangle pairs intersect");
        }
    } catch (const Error& e) {
        err << "horoforge: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::bad_alloc&) {
        err << "horoforge: out of memory\n";
        return 3;
    }
    return 0;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace horoforge
