// rp_cli: command-line front end for the rough-path engine.
//
// Subcommands:
//   sig           signature + p-variation report (JSON on stdout)
//   integrate     rough integral of a one-form along a sampled path (trace CSV)
//   rde           rough differential equation solve (trace CSV + residual report)
//   manifold-rde  manifold RDE solve (solution JSON + support CSV + verify report)
//   check         deterministic invariant suite (JSON verdict)
//
// Exit codes: 0 success, 2 parse error, 3 validation failure, 4 numeric failure.
// All numeric output uses 17 significant digits; JSON reports have a stable
// (alphabetical) key order, so identical inputs produce byte-identical output.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <rp/atlas.hpp>
#include <rp/expr.hpp>
#include <rp/integral.hpp>
#include <rp/jet.hpp>
#include <rp/mpath.hpp>
#include <rp/mrde.hpp>
#include <rp/path.hpp>
#include <rp/rde.hpp>
#include <rp/tensor.hpp>

namespace {

using nlohmann::json;
using rp::Vec;

struct csv_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Deterministic JSON writer: alphabetical keys (nlohmann::json's natural
// object order) and %.17g floats, independent of locale and library version.
void dump17(const json& j, std::string& out, int depth) {
    const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    const std::string pad1(static_cast<std::size_t>(depth + 1) * 2, ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) { out += "{}"; return; }
            out += "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ",\n";
                first = false;
                out += pad1 + json(it.key()).dump() + ": ";
                dump17(it.value(), out, depth + 1);
            }
            out += "\n" + pad + "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) { out += "[]"; return; }
            bool scalars = true;
            for (const auto& e : j)
                if (e.is_structured()) scalars = false;
            if (scalars) {
                out += "[";
                for (std::size_t i = 0; i < j.size(); ++i) {
                    if (i) out += ", ";
                    dump17(j[i], out, depth + 1);
                }
                out += "]";
                return;
            }
            out += "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out += ",\n";
                out += pad1;
                dump17(j[i], out, depth + 1);
            }
            out += "\n" + pad + "]";
            return;
        }
        case json::value_t::number_float:
            out += fmt17(j.get<double>());
            return;
        default:
            out += j.dump();
            return;
    }
}

std::string dump17(const json& j) {
    std::string out;
    dump17(j, out, 0);
    out += "\n";
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw rp::domain_error("cannot open output file: " + path.string());
    f << content;
}

// ---------------------------------------------------------------------------
// CSV path ingestion / emission

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        std::size_t a = cell.find_first_not_of(" \t\r");
        std::size_t b = cell.find_last_not_of(" \t\r");
        fields.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
    }
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

rp::SampledPath load_path_csv(const std::string& file) {
    std::ifstream f(file);
    if (!f) throw csv_error(file + ": cannot open");
    std::string line;
    if (!std::getline(f, line))
        throw csv_error(file + ": empty file (expected header t,x1,...,xd)");
    auto header = split_csv_row(line);
    if (header.size() < 2 || header[0] != "t")
        throw csv_error(file + ":1: header must be t,x1,...,xd");
    const int dim = static_cast<int>(header.size()) - 1;
    for (int k = 1; k <= dim; ++k)
        if (header[static_cast<std::size_t>(k)] != "x" + std::to_string(k))
            throw csv_error(file + ":1: header must be t,x1,...,xd");

    rp::SampledPath P;
    P.dim = dim;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto row = split_csv_row(line);
        if (static_cast<int>(row.size()) != dim + 1)
            throw csv_error(file + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(dim + 1) + " fields, got " +
                            std::to_string(row.size()));
        Vec x(static_cast<std::size_t>(dim));
        double t = 0.0;
        try {
            std::size_t pos = 0;
            t = std::stod(row[0], &pos);
            if (pos != row[0].size()) throw std::invalid_argument("trailing");
            for (int k = 0; k < dim; ++k) {
                const std::string& cell = row[static_cast<std::size_t>(k) + 1];
                x[static_cast<std::size_t>(k)] = std::stod(cell, &pos);
                if (pos != cell.size()) throw std::invalid_argument("trailing");
            }
        } catch (const std::exception&) {
            throw csv_error(file + ":" + std::to_string(lineno) + ": malformed number");
        }
        if (!P.times.empty() && !(t > P.times.back()))
            throw csv_error(file + ":" + std::to_string(lineno) +
                            ": times must be strictly increasing");
        P.times.push_back(t);
        P.points.push_back(std::move(x));
    }
    if (P.times.size() < 2)
        throw csv_error(file + ": need at least 2 rows");
    return P;
}

void require_finite(const Vec& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x))
            throw rp::numeric_error(std::string(what) + ": non-finite result");
}

// level-1 trace of a rough path on its own grid
std::string emit_trace_csv(const rp::ClassicalRoughPath& X) {
    std::string out = "t";
    for (int k = 1; k <= X.dim; ++k) out += ",x" + std::to_string(k);
    out += "\n";
    for (double t : X.times) {
        out += fmt17(t);
        for (double v : X.position(t)) out += "," + fmt17(v);
        out += "\n";
    }
    return out;
}

std::string trace_csv_from_rows(const std::vector<double>& times,
                                const std::vector<Vec>& rows) {
    std::string out = "t";
    for (std::size_t k = 1; k <= (rows.empty() ? 0 : rows[0].size()); ++k)
        out += ",x" + std::to_string(k);
    out += "\n";
    for (std::size_t i = 0; i < times.size(); ++i) {
        out += fmt17(times[i]);
        for (double v : rows[i]) out += "," + fmt17(v);
        out += "\n";
    }
    return out;
}

std::string gnuplot_stub(const std::string& csv_name, int dim_out) {
    std::string s = "# gnuplot script stub; run: gnuplot -p this_file\n";
    s += "set datafile separator ','\n";
    s += "plot";
    for (int k = 1; k <= dim_out; ++k) {
        if (k > 1) s += ",";
        s += " '" + csv_name + "' using 1:" + std::to_string(k + 1) +
             " with lines title 'x" + std::to_string(k) + "'";
    }
    s += "\n";
    return s;
}

Vec parse_vec(const std::string& s) {
    Vec v;
    for (const auto& cell : split_csv_row(s)) {
        try {
            std::size_t pos = 0;
            v.push_back(std::stod(cell, &pos));
            if (pos != cell.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw csv_error("malformed number in vector argument: '" + cell + "'");
        }
    }
    return v;
}

std::vector<std::string> split_exprs(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : s) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == ',' && depth == 0) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// ---------------------------------------------------------------------------
// shared run configuration

struct RunConfig {
    std::string input;
    std::string out_dir;
    double p = 1.0;
    double gamma = 3.0;
    int level = 0;  // 0 = default floor(p) (or 2 where second-order models are needed)
    double tol = 0.0;  // 0 = command default
    unsigned long long seed = 1234;
    bool emit_gnuplot = false;
};

void validate_common(const RunConfig& cfg) {
    if (!(cfg.p >= 1.0)) throw rp::domain_error("p must satisfy p >= 1");
    if (!(cfg.p < cfg.gamma))
        throw rp::domain_error("require p < gamma (got p=" + fmt17(cfg.p) +
                               ", gamma=" + fmt17(cfg.gamma) + ")");
    if (cfg.level < 0 || cfg.level > rp::kMaxLevel)
        throw rp::domain_error("level out of range [0, 6]");
}

std::filesystem::path artifact_path(const RunConfig& cfg, const std::string& name) {
    std::filesystem::path dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
    std::filesystem::create_directories(dir);
    return dir / name;
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_sig(const RunConfig& cfg) {
    validate_common(cfg);
    rp::SampledPath P = load_path_csv(cfg.input);
    const int level = cfg.level > 0 ? cfg.level : std::max(1, static_cast<int>(cfg.p));
    rp::ClassicalRoughPath X = rp::signature(P, level, cfg.p);

    json rep;
    rep["command"] = "sig";
    rep["dim"] = X.dim;
    rep["input"] = cfg.input;
    rep["level"] = level;
    rep["p"] = cfg.p;
    rep["p_variation"] = rp::p_variation(X, cfg.p);
    rep["signature"] = rp::tensor_to_json(X.increment(X.t_begin(), X.t_end()));
    rep["t_begin"] = X.t_begin();
    rep["t_end"] = X.t_end();

    const std::string text = dump17(rep);
    std::cout << text;
    if (!cfg.out_dir.empty()) write_file(artifact_path(cfg, "sig.json"), text);
    return 0;
}

int cmd_integrate(const RunConfig& cfg, const std::string& form_exprs, int dim_out) {
    validate_common(cfg);
    if (dim_out < 1) throw rp::domain_error("--dim-out must be >= 1");
    rp::SampledPath P = load_path_csv(cfg.input);
    const int level = cfg.level > 0 ? cfg.level : std::max(1, static_cast<int>(cfg.p));
    rp::ClassicalRoughPath X = rp::signature(P, level, cfg.p);

    auto exprs = split_exprs(form_exprs);
    if (static_cast<int>(exprs.size()) != dim_out * P.dim)
        throw rp::domain_error("--form needs dim_out*d = " +
                               std::to_string(dim_out * P.dim) +
                               " comma-separated components, got " +
                               std::to_string(exprs.size()));
    rp::JetFn fn = rp::compile_exprs(exprs, P.dim);
    rp::OneFormJet alpha = rp::OneFormJet::from_map(P.dim, dim_out, fn.f, cfg.gamma - 1.0);

    rp::SewOptions sew;
    sew.tol = cfg.tol > 0.0 ? cfg.tol : 1e-10;
    rp::ClassicalRoughPath Y = rp::rough_integrate(alpha, X, sew);
    require_finite(Y.end_position(), "integrate");

    const std::string csv = emit_trace_csv(Y);
    write_file(artifact_path(cfg, "integrate_trace.csv"), csv);
    if (cfg.emit_gnuplot)
        write_file(artifact_path(cfg, "integrate_trace.gp"),
                   gnuplot_stub("integrate_trace.csv", Y.dim));

    json rep;
    rep["command"] = "integrate";
    rep["dim_in"] = P.dim;
    rep["dim_out"] = dim_out;
    rep["endpoint"] = Y.end_position();
    rep["gamma"] = cfg.gamma;
    rep["input"] = cfg.input;
    rep["level"] = level;
    rep["p"] = cfg.p;
    rep["tol"] = sew.tol;
    rep["trace"] = "integrate_trace.csv";
    std::cout << dump17(rep);
    return 0;
}

int cmd_rde(const RunConfig& cfg, const std::string& field_exprs, const std::string& y0s) {
    validate_common(cfg);
    rp::SampledPath P = load_path_csv(cfg.input);
    Vec y0 = parse_vec(y0s);
    if (y0.empty()) throw rp::domain_error("--y0 must be a nonempty vector");
    const int d1 = P.dim, d2 = static_cast<int>(y0.size());
    // second-order local models need a level-2 driver; default to the extension
    const int level = cfg.level > 0 ? cfg.level
                                    : std::max(2, static_cast<int>(cfg.p));
    rp::ClassicalRoughPath X = rp::signature(P, level, cfg.p);

    auto exprs = split_exprs(field_exprs);
    if (static_cast<int>(exprs.size()) != d1 * d2)
        throw rp::domain_error("--field needs d2*d1 = " + std::to_string(d1 * d2) +
                               " comma-separated entries (row-major), got " +
                               std::to_string(exprs.size()));
    rp::JetFn fn = rp::compile_exprs(exprs, d2);
    rp::FieldJet g = rp::FieldJet::state_field(d1, d2, fn.f, cfg.gamma);

    rp::RdeOptions opt;
    if (cfg.tol > 0.0) opt.tol = cfg.tol;
    rp::RdeReport rrep;
    rp::ClassicalRoughPath Z = rp::solve_rde(X, g, y0, opt, &rrep);

    std::vector<Vec> rows = rp::response_trace(Z, d1);
    require_finite(rows.back(), "rde");
    const std::string csv = trace_csv_from_rows(Z.times, rows);
    write_file(artifact_path(cfg, "rde_trace.csv"), csv);
    if (cfg.emit_gnuplot)
        write_file(artifact_path(cfg, "rde_trace.gp"), gnuplot_stub("rde_trace.csv", d2));

    json rep;
    rep["command"] = "rde";
    rep["dim_signal"] = d1;
    rep["dim_state"] = d2;
    rep["endpoint"] = rows.back();
    rep["gamma"] = cfg.gamma;
    rep["input"] = cfg.input;
    rep["level"] = level;
    rep["p"] = cfg.p;
    rep["residual"] = rrep.residual;
    rep["splits"] = rrep.splits;
    rep["sweeps"] = rrep.sweeps;
    rep["tol"] = opt.tol;
    rep["trace"] = "rde_trace.csv";
    std::cout << dump17(rep);
    return 0;
}

int cmd_manifold_rde(const RunConfig& cfg, const std::string& conn_file,
                     const std::string& y0s) {
    rp::SampledPath dummy;  // not used; signal comes as JSON
    (void)dummy;
    std::ifstream sf(cfg.input);
    if (!sf) throw csv_error(cfg.input + ": cannot open");
    json sj = json::parse(sf);
    rp::ManifoldRoughPath X = rp::manifold_path_from_json(sj);

    std::ifstream cf(conn_file);
    if (!cf) throw csv_error(conn_file + ": cannot open");
    json cj = json::parse(cf);
    rp::ConnectionSpec S = rp::connection_from_json(cj);

    if (rp::atlas_to_json(*X.atlas) != rp::atlas_to_json(*S.N))
        throw rp::domain_error("signal path atlas does not match the connection's source atlas");

    Vec y0 = parse_vec(y0s);
    rp::MrdeOptions opt;
    if (cfg.tol > 0.0) opt.rde.tol = cfg.tol;
    rp::ManifoldRdeSolution sol = rp::solve_manifold_rde(S, X, y0, opt);

    json solj;
    solj["halvings"] = sol.halvings;
    solj["solution"] = rp::manifold_path_to_json(sol.Z);
    solj["t0"] = sol.t0;
    solj["x0"] = sol.x0;
    solj["y0"] = sol.y0;
    write_file(artifact_path(cfg, "manifold_rde_solution.json"), dump17(solj));

    std::vector<Vec> pts = rp::support(sol.Z);
    std::string csv;
    for (std::size_t k = 1; k <= (pts.empty() ? 0 : pts[0].size()); ++k)
        csv += (k > 1 ? ",x" : "x") + std::to_string(k);
    csv += "\n";
    for (const auto& m : pts) {
        for (std::size_t k = 0; k < m.size(); ++k) csv += (k ? "," : "") + fmt17(m[k]);
        csv += "\n";
    }
    write_file(artifact_path(cfg, "manifold_rde_support.csv"), csv);

    rp::MrdeVerify v =
        rp::verify_solution(sol, S, X, 1e-7, 1e-6, 16, rp::SewOptions{1e-10, 20, 0});

    json rep;
    rep["command"] = "manifold-rde";
    rep["connection"] = conn_file;
    rep["fixed_resid"] = v.fixed_resid;
    rep["halvings"] = sol.halvings;
    rep["input"] = cfg.input;
    rep["ok"] = v.ok;
    rep["segments"] = sol.Z.segments.size();
    rep["signal_resid"] = v.signal_resid;
    rep["solution"] = "manifold_rde_solution.json";
    rep["start_err"] = v.start_err;
    rep["support"] = "manifold_rde_support.csv";
    rep["sweeps"] = sol.rde.sweeps;
    rep["t0"] = sol.t0;
    rep["witness"] = v.witness;
    std::cout << dump17(rep);
    return 0;
}

// ---------------------------------------------------------------------------
// invariant suite

struct Suite {
    std::string name;
    bool pass = false;
    double worst = 0.0;
    std::string detail;
};

Vec random_vec(std::mt19937_64& rng, int n, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Vec v(static_cast<std::size_t>(n));
    for (double& x : v) x = u(rng);
    return v;
}

rp::SampledPath random_path(std::mt19937_64& rng, int dim, int steps, double scale = 0.3) {
    rp::SampledPath P;
    P.dim = dim;
    Vec x(static_cast<std::size_t>(dim), 0.0);
    for (int k = 0; k <= steps; ++k) {
        P.times.push_back(static_cast<double>(k) / steps);
        P.points.push_back(x);
        Vec dx = random_vec(rng, dim, scale / steps);
        for (int i = 0; i < dim; ++i) x[static_cast<std::size_t>(i)] += dx[static_cast<std::size_t>(i)];
    }
    return P;
}

double tensor_max_diff(const rp::TruncatedTensor& a, const rp::TruncatedTensor& b) {
    double w = 0.0;
    for (int g = 0; g <= a.level(); ++g)
        for (std::size_t i = 0; i < rp::grade_size(a.dim(), g); ++i)
            w = std::max(w, std::abs(a.grade(g)[i] - b.grade(g)[i]));
    return w;
}

std::vector<Suite> run_suites(unsigned long long seed) {
    std::vector<Suite> out;
    std::mt19937_64 rng(seed);

    {  // tensor algebra: associativity, unit, exp/log inversion
        Suite s{"tensor-algebra"};
        double w = 0.0;
        for (int rep = 0; rep < 4; ++rep) {
            rp::TruncatedTensor a(3, 3), b(3, 3), c(3, 3);
            for (auto* t : {&a, &b, &c}) {
                t->set_scalar(1.0);
                for (int g = 1; g <= 3; ++g)
                    for (std::size_t i = 0; i < rp::grade_size(3, g); ++i)
                        t->grade(g)[i] = random_vec(rng, 1, 0.5)[0];
            }
            w = std::max(w, tensor_max_diff(rp::tensor_mul(rp::tensor_mul(a, b), c),
                                            rp::tensor_mul(a, rp::tensor_mul(b, c))));
            w = std::max(w, tensor_max_diff(rp::tensor_mul(a, rp::TruncatedTensor::unit(3, 3)), a));
            w = std::max(w, tensor_max_diff(rp::tensor_exp(rp::tensor_log(a)), a));
            w = std::max(w, tensor_max_diff(rp::tensor_mul(a, rp::tensor_inverse(a)),
                                            rp::TruncatedTensor::unit(3, 3)));
        }
        s.worst = w;
        s.pass = w <= 1e-12;
        out.push_back(s);
    }

    {  // Chen identity over the sample grid of a random signature
        Suite s{"chen-identity"};
        rp::ClassicalRoughPath X = rp::signature(random_path(rng, 3, 24), 3, 1.0);
        double w = 0.0;
        const double t0 = X.t_begin(), t1 = X.t_end(), tm = 0.5 * (t0 + t1);
        w = std::max(w, tensor_max_diff(X.increment(t0, t1),
                                        rp::tensor_mul(X.increment(t0, tm), X.increment(tm, t1))));
        const double ta = t0 + 0.31 * (t1 - t0), tb = t0 + 0.77 * (t1 - t0);
        w = std::max(w, tensor_max_diff(X.increment(t0, tb),
                                        rp::tensor_mul(X.increment(t0, ta), X.increment(ta, tb))));
        s.worst = w;
        s.pass = w <= 1e-12;
        out.push_back(s);
    }

    {  // d_p metric axioms on random lifts
        Suite s{"dp-metric"};
        rp::ClassicalRoughPath A = rp::signature(random_path(rng, 2, 16), 2, 1.0);
        rp::ClassicalRoughPath B = rp::signature(random_path(rng, 2, 16), 2, 1.0);
        rp::ClassicalRoughPath C = rp::signature(random_path(rng, 2, 16), 2, 1.0);
        const double ab = rp::d_p(A, B), ba = rp::d_p(B, A);
        const double ac = rp::d_p(A, C), cb = rp::d_p(C, B);
        double w = rp::d_p(A, A);
        w = std::max(w, std::abs(ab - ba));
        w = std::max(w, std::max(0.0, ab - (ac + cb)));
        s.worst = w;
        s.pass = w <= 1e-12 && ab > 0.0;
        out.push_back(s);
    }

    {  // sewing: integrate cos(x1) dx1 along a line, closed form sin
        Suite s{"sew-integral"};
        rp::SampledPath P;
        P.dim = 1;
        for (int k = 0; k <= 200; ++k) {
            P.times.push_back(k / 200.0);
            P.points.push_back({1.5 * k / 200.0});
        }
        rp::ClassicalRoughPath X = rp::signature(P, 2, 1.0);
        rp::OneFormJet alpha = rp::OneFormJet::from_map(
            1, 1, rp::compile_exprs({"cos(x1)"}, 1).f, 2.0);
        rp::ClassicalRoughPath Y = rp::rough_integrate(alpha, X, rp::SewOptions{1e-12, 24, 0});
        s.worst = std::abs(Y.end_position()[0] - std::sin(1.5));
        s.pass = s.worst <= 1e-9;
        out.push_back(s);
    }

    {  // linear RDE dY = Y dX along a line vs the exponential
        Suite s{"rde-linear"};
        rp::SampledPath P;
        P.dim = 1;
        for (int k = 0; k <= 100; ++k) {
            P.times.push_back(k / 100.0);
            P.points.push_back({0.8 * k / 100.0});
        }
        rp::ClassicalRoughPath X = rp::signature(P, 2, 1.0);
        rp::FieldJet g = rp::FieldJet::state_field(1, 1, rp::compile_exprs({"x1"}, 1).f, 3.0);
        rp::ClassicalRoughPath Z = rp::solve_rde(X, g, Vec{1.0});
        Vec yT = rp::response_trace(Z, 1).back();
        s.worst = std::abs(yT[0] - std::exp(0.8));
        s.pass = s.worst <= 1e-7;
        out.push_back(s);
    }

    {  // builtin atlas validation
        Suite s{"atlas-builtin"};
        bool ok = true;
        std::string bad;
        for (const char* kind : {"sphere", "torus"}) {
            rp::Atlas A = rp::build_atlas(kind);
            rp::AtlasValidation v = rp::validate_atlas(A);
            if (!(v.cover_ok && v.ball_ok)) { ok = false; bad = kind; }
        }
        rp::Atlas V = rp::build_vector_space_atlas(2, {-1.0, -1.0}, {1.0, 1.0});
        rp::AtlasValidation vv = rp::validate_atlas(V);
        if (!(vv.cover_ok && vv.ball_ok)) { ok = false; bad = "vector-space"; }
        s.pass = ok;
        s.detail = bad;
        out.push_back(s);
    }

    {  // manifold path round trip through a vector-space atlas
        Suite s{"manifold-roundtrip"};
        auto A = std::make_shared<rp::Atlas>(
            rp::build_vector_space_atlas(2, {-2.0, -2.0}, {2.0, 2.0}));
        rp::ClassicalRoughPath X = rp::signature(random_path(rng, 2, 20, 0.5), 2, 1.0);
        rp::ManifoldRoughPath Z = rp::from_classical(X, A);
        s.worst = rp::d_p(rp::to_classical(Z), X);
        s.pass = s.worst <= 1e-10 && rp::check_manifold_path(Z).ok;
        out.push_back(s);
    }

    {  // connection validation + vector-space manifold RDE vs classical solver
        Suite s{"connection-mrde"};
        auto N = std::make_shared<rp::Atlas>(
            rp::build_vector_space_atlas(1, {-2.0}, {2.0}));
        auto M = std::make_shared<rp::Atlas>(
            rp::build_vector_space_atlas(1, {-2.0}, {2.0}));
        rp::JetFn G = rp::compile_exprs({"x2"}, 2);  // g(x,y) = y
        rp::ConnectionSpec S = rp::connection_from_ambient(N, M, G, 3.0, 2.0);
        bool vok = rp::validate_connection(S).ok;
        rp::SampledPath P;
        P.dim = 1;
        for (int k = 0; k <= 100; ++k) {
            P.times.push_back(k / 100.0);
            P.points.push_back({0.5 * k / 100.0});
        }
        rp::ClassicalRoughPath X = rp::signature(P, 2, 1.0);
        rp::ManifoldRoughPath Xm = rp::from_classical(X, N);
        rp::ManifoldRdeSolution sol = rp::solve_manifold_rde(S, Xm, Vec{0.5});
        rp::FieldJet g = rp::FieldJet::state_field(1, 1, rp::compile_exprs({"x1"}, 1).f, 3.0);
        rp::ClassicalRoughPath Zc = rp::solve_rde(X, g, Vec{0.5});
        s.worst = rp::d_p(rp::to_classical(sol.Z), Zc);
        s.pass = vok && s.worst <= 1e-7;
        out.push_back(s);
    }

    return out;
}

int cmd_check(const RunConfig& cfg) {
    std::vector<Suite> suites = run_suites(cfg.seed);
    bool all = true;
    json arr = json::array();
    for (const auto& s : suites) {
        all = all && s.pass;
        json e;
        e["detail"] = s.detail;
        e["name"] = s.name;
        e["pass"] = s.pass;
        e["worst_error"] = s.worst;
        arr.push_back(e);
    }
    json rep;
    rep["command"] = "check";
    rep["ok"] = all;
    rep["seed"] = cfg.seed;
    rep["suites"] = arr;
    const std::string text = dump17(rep);
    std::cout << text;
    if (!cfg.out_dir.empty()) write_file(artifact_path(cfg, "check.json"), text);
    return all ? 0 : 3;
}

void report_error(const char* category, const std::string& message) {
    json e;
    e["error"] = {{"category", category}, {"message", message}};
    std::cerr << dump17(e);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rough-path engine command line"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string form_exprs, field_exprs, y0s, conn_file;
    int dim_out = 1;

    auto add_common = [&](CLI::App* c, bool needs_input) {
        if (needs_input)
            c->add_option("input", cfg.input, "input file")->required();
        c->add_option("--p", cfg.p, "p-variation exponent (default 1)");
        c->add_option("--gamma", cfg.gamma, "Lip regularity of coefficients (default 3)");
        c->add_option("--level", cfg.level, "truncation level (default floor(p))");
        c->add_option("--tol", cfg.tol, "tolerance override");
        c->add_option("--out", cfg.out_dir, "output directory for artifacts");
        c->add_option("--seed", cfg.seed, "seed for randomized suites");
    };

    auto* sig = app.add_subcommand("sig", "signature + p-variation report");
    add_common(sig, true);

    auto* integ = app.add_subcommand("integrate", "rough integral trace CSV");
    add_common(integ, true);
    integ->add_option("--form", form_exprs,
                      "one-form components (dim_out*d exprs in x1..xd, row-major)")
        ->required();
    integ->add_option("--dim-out", dim_out, "one-form output dimension (default 1)");
    integ->add_flag("--emit-gnuplot", cfg.emit_gnuplot, "write a gnuplot script stub");

    auto* rde = app.add_subcommand("rde", "RDE solution trace CSV + residual report");
    add_common(rde, true);
    rde->add_option("--field", field_exprs,
                    "coefficient field entries (d2*d1 exprs in state vars x1..x{d2})")
        ->required();
    rde->add_option("--y0", y0s, "initial state, comma separated")->required();
    rde->add_flag("--emit-gnuplot", cfg.emit_gnuplot, "write a gnuplot script stub");

    auto* mrde = app.add_subcommand("manifold-rde",
                                    "manifold RDE: solution JSON + support CSV + verify report");
    add_common(mrde, true);
    mrde->add_option("--connection", conn_file, "connection JSON file")->required();
    mrde->add_option("--y0", y0s, "initial response point (ambient), comma separated")
        ->required();

    auto* check = app.add_subcommand("check", "run the invariant suite");
    add_common(check, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("parse", e.what());
        return 2;
    }

    try {
        if (sig->parsed()) return cmd_sig(cfg);
        if (integ->parsed()) return cmd_integrate(cfg, form_exprs, dim_out);
        if (rde->parsed()) return cmd_rde(cfg, field_exprs, y0s);
        if (mrde->parsed()) return cmd_manifold_rde(cfg, conn_file, y0s);
        if (check->parsed()) return cmd_check(cfg);
        report_error("parse", "no subcommand");
        return 2;
    } catch (const csv_error& e) {
        report_error("parse", e.what());
        return 2;
    } catch (const nlohmann::json::exception& e) {
        report_error("parse", e.what());
        return 2;
    } catch (const rp::expr::parse_error& e) {
        report_error("parse", e.what());
        return 2;
    } catch (const rp::numeric_error& e) {
        report_error("numeric", e.what());
        return 4;
    } catch (const std::exception& e) {
        report_error("validation", e.what());
        return 3;
    }
}
