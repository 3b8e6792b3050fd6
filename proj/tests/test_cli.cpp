// End-to-end tests of the rp_cli binary: subcommand behavior, artifact
// formats, exit-code contract, and byte-level determinism of reports.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <rp/atlas.hpp>
#include <rp/mpath.hpp>
#include <rp/mrde.hpp>
#include <rp/path.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rp;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path work_dir() {
    fs::path d = fs::temp_directory_path() / "rp_cli_test";
    fs::create_directories(d);
    return d;
}

RunResult run_cli(const std::string& args) {
    fs::path d = work_dir();
    fs::path so = d / "stdout.txt", se = d / "stderr.txt";
    std::string cmd = std::string(RP_CLI_PATH) + " " + args + " >" + so.string() +
                      " 2>" + se.string();
    int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(so);
    r.err = slurp(se);
    return r;
}

fs::path write_text(const std::string& name, const std::string& content) {
    fs::path p = work_dir() / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
}

fs::path write_line_csv(const std::string& name, int steps, double slope) {
    std::string s = "t,x1\n";
    char buf[80];
    for (int k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", t, slope * t);
        s += buf;
    }
    return write_text(name, s);
}

}  // namespace

TEST_CASE("signature report on the L-shaped path", "[cli]") {
    fs::path csv = write_text("L.csv", "t,x1,x2\n0,0,0\n0.5,1,0\n1,1,1\n");
    RunResult r = run_cli("sig " + csv.string() + " --level 2");
    REQUIRE(r.exit_code == 0);
    json rep = json::parse(r.out);
    CHECK(rep["command"] == "sig");
    CHECK(rep["dim"] == 2);
    CHECK(rep["level"] == 2);
    // level-2 block, row-major: [[0.5, 1.0], [0.0, 0.5]]
    const auto g2 = rep["signature"]["grades"][2];
    REQUIRE(g2.size() == 4);
    CHECK(g2[0].get<double>() == Catch::Approx(0.5).margin(1e-15));
    CHECK(g2[1].get<double>() == Catch::Approx(1.0).margin(1e-15));
    CHECK(g2[2].get<double>() == Catch::Approx(0.0).margin(1e-15));
    CHECK(g2[3].get<double>() == Catch::Approx(0.5).margin(1e-15));
    CHECK(rep["p_variation"].get<double>() == Catch::Approx(2.0).margin(1e-12));
    CHECK(rep["signature"]["grades"][1][0].get<double>() == Catch::Approx(1.0));
}

TEST_CASE("csv loader rejects malformed inputs with line numbers", "[cli]") {
    fs::path empty = write_text("empty.csv", "");
    RunResult r = run_cli("sig " + empty.string());
    CHECK(r.exit_code == 2);
    CHECK(json::parse(r.err)["error"]["category"] == "parse");

    fs::path badhdr = write_text("badhdr.csv", "time,a\n0,1\n1,2\n");
    CHECK(run_cli("sig " + badhdr.string()).exit_code == 2);

    fs::path badrow = write_text("badrow.csv", "t,x1\n0,0\n0.5,oops\n1,1\n");
    r = run_cli("sig " + badrow.string());
    CHECK(r.exit_code == 2);
    CHECK(json::parse(r.err)["error"]["message"].get<std::string>().find(":3:") !=
          std::string::npos);

    fs::path nonmono = write_text("nonmono.csv", "t,x1\n0,0\n1,1\n0.5,2\n");
    CHECK(run_cli("sig " + nonmono.string()).exit_code == 2);

    // 3 valid rows -> a 2-segment path, accepted
    fs::path ok3 = write_text("ok3.csv", "t,x1\n0,0\n0.5,0.25\n1,1\n");
    r = run_cli("sig " + ok3.string());
    REQUIRE(r.exit_code == 0);
    json rep = json::parse(r.out);
    CHECK(rep["dim"] == 1);
    CHECK(rep["signature"]["grades"][1][0].get<double>() == Catch::Approx(1.0));
}

TEST_CASE("trace emission round trips at the printed precision", "[cli]") {
    // awkward binary doubles exercise the 17-significant-digit contract
    std::string s = "t,x1\n";
    char buf[80];
    double t = 0.0, x = 0.1;
    for (int k = 0; k < 10; ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", t, x);
        s += buf;
        t += 1.0 / 3.0;
        x = x * 1.7 - 0.05;
    }
    fs::path csv = write_text("awkward.csv", s);
    fs::path out = work_dir() / "rt";
    // the identity one-form reproduces the level-1 trace
    RunResult r = run_cli("integrate " + csv.string() + " --form x1*0+1 --level 2 --out " +
                          out.string());
    REQUIRE(r.exit_code == 0);
    std::string trace = slurp(out / "integrate_trace.csv");

    // re-load both CSVs; values must agree bit-for-bit after %.17g round trip
    auto parse_csv = [](const std::string& text) {
        std::vector<std::vector<double>> rows;
        std::stringstream ss(text);
        std::string line;
        std::getline(ss, line);  // header
        while (std::getline(ss, line)) {
            if (line.empty()) continue;
            std::vector<double> row;
            std::stringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
            rows.push_back(row);
        }
        return rows;
    };
    auto a = parse_csv(s), b = parse_csv(trace);
    REQUIRE(a.size() == b.size());
    const double x0 = a[0][1];
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i][0] == b[i][0]);                 // times are copied exactly
        CHECK(b[i][1] == Catch::Approx(a[i][1] - x0).margin(1e-13));
    }
}

TEST_CASE("reports are byte-identical across runs", "[cli]") {
    fs::path csv = write_line_csv("det.csv", 50, 0.7);
    RunResult r1 = run_cli("sig " + csv.string() + " --level 2");
    RunResult r2 = run_cli("sig " + csv.string() + " --level 2");
    REQUIRE(r1.exit_code == 0);
    CHECK(r1.out == r2.out);

    RunResult c1 = run_cli("check --seed 42");
    RunResult c2 = run_cli("check --seed 42");
    REQUIRE(c1.exit_code == 0);
    CHECK(c1.out == c2.out);
}

TEST_CASE("rde subcommand: zero field freezes, linear field matches exp", "[cli]") {
    fs::path csv = write_line_csv("drv.csv", 100, 0.8);
    fs::path out = work_dir() / "rde0";
    RunResult r = run_cli("rde " + csv.string() + " --field x1*0 --y0 0.25 --out " +
                          out.string());
    REQUIRE(r.exit_code == 0);
    std::string trace = slurp(out / "rde_trace.csv");
    std::stringstream ss(trace);
    std::string line;
    std::getline(ss, line);
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        const double y = std::stod(line.substr(line.find(',') + 1));
        CHECK(y == Catch::Approx(0.25).margin(1e-12));
    }

    r = run_cli("rde " + csv.string() + " --field x1 --y0 1 --out " + out.string() +
                " --emit-gnuplot");
    REQUIRE(r.exit_code == 0);
    json rep = json::parse(r.out);
    CHECK(rep["endpoint"][0].get<double>() ==
          Catch::Approx(std::exp(0.8)).margin(1e-7));
    CHECK(rep["residual"].get<double>() <= 1e-6);
    CHECK(fs::exists(out / "rde_trace.gp"));
}

TEST_CASE("exit-code contract", "[cli]") {
    fs::path csv = write_line_csv("ec.csv", 20, 0.5);
    // unparseable expression -> 2
    CHECK(run_cli("integrate " + csv.string() + " --form 'sin(x1'").exit_code == 2);
    // unknown flag -> 2
    CHECK(run_cli("sig " + csv.string() + " --bogus 1").exit_code == 2);
    // p/gamma invariant violated -> 3
    CHECK(run_cli("sig " + csv.string() + " --p 3 --gamma 2").exit_code == 3);
    // field arity mismatch -> 3
    CHECK(run_cli("rde " + csv.string() + " --field x1,x1 --y0 1").exit_code == 3);
    // blow-up inside the horizon -> numeric failure 4
    fs::path big = write_line_csv("ec2.csv", 100, 0.8);
    RunResult r = run_cli("rde " + big.string() + " --field x1^2 --y0 10");
    CHECK(r.exit_code == 4);
    CHECK(json::parse(r.err)["error"]["category"] == "numeric");
}

TEST_CASE("check subcommand reports a passing suite", "[cli]") {
    fs::path out = work_dir() / "chk";
    RunResult r = run_cli("check --seed 7 --out " + out.string());
    REQUIRE(r.exit_code == 0);
    json rep = json::parse(r.out);
    CHECK(rep["ok"] == true);
    REQUIRE(rep["suites"].size() >= 6);
    for (const auto& s : rep["suites"]) CHECK(s["pass"] == true);
    CHECK(slurp(out / "check.json") == r.out);
}

TEST_CASE("manifold-rde subcommand produces verifiable artifacts", "[cli]") {
    auto N = std::make_shared<Atlas>(build_vector_space_atlas(1, {-2.0}, {2.0}));
    auto M = std::make_shared<Atlas>(build_vector_space_atlas(1, {-2.0}, {2.0}));

    SampledPath P;
    P.dim = 1;
    for (int k = 0; k <= 100; ++k) {
        P.times.push_back(k / 100.0);
        P.points.push_back({0.5 * k / 100.0});
    }
    ClassicalRoughPath X = signature(P, 2, 1.0);
    ManifoldRoughPath Xm = from_classical(X, N);
    fs::path sig_json = write_text("signal.json", manifold_path_to_json(Xm).dump());

    // rep per chart pair for g(x,y)(v) = y v: in coordinates, y = x2 + center
    ConnectionSpec S;
    S.N = N;
    S.M = M;
    S.gamma = 3.0;
    S.C = 2.0;
    for (int i = 0; i < static_cast<int>(N->charts.size()); ++i)
        for (int j = 0; j < static_cast<int>(M->charts.size()); ++j) {
            ConnectionRep rep;
            rep.chartN = i;
            rep.chartM = j;
            const double cM = M->charts[static_cast<std::size_t>(j)]
                                  .params.at("center")[0]
                                  .get<double>();
            char buf[64];
            std::snprintf(buf, sizeof buf, "x2 + (%.17g)", cM);
            rep.exprs = {buf};
            rep.g = compile_exprs(rep.exprs, 2);
            S.reps.push_back(rep);
        }
    fs::path conn_json = write_text("conn.json", connection_to_json(S).dump());

    fs::path out = work_dir() / "mrde";
    RunResult r = run_cli("manifold-rde " + sig_json.string() + " --connection " +
                          conn_json.string() + " --y0 0.5 --out " + out.string());
    REQUIRE(r.exit_code == 0);
    json rep = json::parse(r.out);
    CHECK(rep["ok"] == true);
    CHECK(rep["start_err"].get<double>() <= 1e-12);
    CHECK(rep["signal_resid"].get<double>() <= 1e-7);
    CHECK(rep["fixed_resid"].get<double>() <= 1e-6);

    // solution JSON loads back as a valid manifold rough path
    json solj = json::parse(slurp(out / "manifold_rde_solution.json"));
    ManifoldRoughPath Z = manifold_path_from_json(solj["solution"]);
    CHECK(check_manifold_path(Z).ok);
    CHECK(Z.segments.size() == rep["segments"].get<std::size_t>());

    // support CSV has a header and one row per support point
    std::string sup = slurp(out / "manifold_rde_support.csv");
    CHECK(sup.rfind("x1,x2", 0) == 0);
    CHECK(std::count(sup.begin(), sup.end(), '\n') == 1 + static_cast<long>(support(Z).size()));

    // mismatched atlas -> validation failure
    auto N3 = std::make_shared<Atlas>(build_vector_space_atlas(1, {-3.0}, {3.0}));
    ManifoldRoughPath Xm3 = from_classical(X, N3);
    fs::path bad = write_text("signal_bad.json", manifold_path_to_json(Xm3).dump());
    CHECK(run_cli("manifold-rde " + bad.string() + " --connection " + conn_json.string() +
                  " --y0 0.5").exit_code == 3);

    // unreadable connection file -> parse failure
    CHECK(run_cli("manifold-rde " + sig_json.string() +
                  " --connection /nonexistent.json --y0 0.5").exit_code == 2);
}
