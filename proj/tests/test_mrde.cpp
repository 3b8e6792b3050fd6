#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include <rp/mrde.hpp>

using namespace rp;

namespace {

std::shared_ptr<Atlas> vs1() {
    return std::make_shared<Atlas>(build_atlas(
        "vector_space", {{"d", 1}, {"lo", Vec{-2.0}}, {"hi", Vec{2.0}}}));
}

std::shared_ptr<Atlas> sphere_atlas_ptr() {
    static std::shared_ptr<Atlas> S =
        std::make_shared<Atlas>(build_atlas("sphere"));
    return S;
}

// ambient coefficient G(x, y) = c * y for scalar spaces: dY = c Y dX
JetFn scalar_linear_field(double c) {
    return {2, 1, [c](const std::vector<Jet2>& xy) {
                return std::vector<Jet2>{c * xy[1]};
            }};
}

ClassicalRoughPath line_lift(double T, int m, double p = 1.0) {
    SampledPath P;
    P.dim = 1;
    for (int k = 0; k <= m; ++k) {
        P.times.push_back(T * k / m);
        P.points.push_back(Vec{T * k / m});
    }
    return signature(P, 2, p);
}

// ambient parallel-transport coefficient on the sphere:
// g(x, y)(v) = -(y . v) (x - (x . y) y), tangent to the sphere at y
JetFn transport_field() {
    return {6, 9, [](const std::vector<Jet2>& xy) {
                std::vector<Jet2> x(xy.begin(), xy.begin() + 3);
                std::vector<Jet2> y(xy.begin() + 3, xy.end());
                Jet2 xy_dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
                std::vector<Jet2> out;
                for (int r = 0; r < 3; ++r) {
                    Jet2 base = x[static_cast<std::size_t>(r)] -
                                xy_dot * y[static_cast<std::size_t>(r)];
                    for (int s = 0; s < 3; ++s)
                        out.push_back(-1.0 * y[static_cast<std::size_t>(s)] * base);
                }
                return out;
            }};
}

// manifold rough path tracing the colatitude-theta circle, built by a greedy
// chart walk over a fine polyline
ManifoldRoughPath sphere_circle_path(std::shared_ptr<Atlas> A, double theta, double mesh) {
    const double L = 2.0 * M_PI * std::sin(theta);
    const int m = static_cast<int>(std::ceil(L / mesh));
    std::vector<Vec> pts;
    std::vector<double> times;
    for (int k = 0; k <= m; ++k) {
        const double ph = 2.0 * M_PI * k / m;
        pts.push_back(Vec{std::sin(theta) * std::cos(ph), std::sin(theta) * std::sin(ph),
                          std::cos(theta)});
        times.push_back(static_cast<double>(k) / m);
    }
    ManifoldRoughPath Z;
    Z.atlas = A;
    Z.p = 1.0;
    Z.gamma = 3.0;
    Z.start = pts.front();
    std::size_t a = 0;
    while (a + 1 < pts.size()) {
        const int ci = A->find_chart(pts[a], A->delta);
        REQUIRE(ci >= 0);
        const Chart& c = A->charts[static_cast<std::size_t>(ci)];
        std::size_t b = a + 1;
        while (b < pts.size()) {
            Vec u = c.phi.value(pts[b]);
            double nrm = 0.0;
            for (double v : u) nrm = std::max(nrm, std::abs(v));
            if (nrm >= 0.85) break;
            ++b;
        }
        if (b == a + 1) ++b;  // always make progress
        SampledPath P;
        P.dim = A->dim;
        for (std::size_t k = a; k < b; ++k) {
            P.times.push_back(times[k]);
            P.points.push_back(c.phi.value(pts[k]));
        }
        if (b - 1 == a) break;
        MSegment seg;
        seg.t0 = times[a];
        seg.t1 = times[b - 1];
        seg.chart = ci;
        seg.Z = signature(P, 2, 1.0);
        seg.z0 = seg.Z.start;
        Z.segments.push_back(std::move(seg));
        a = b - 1;
    }
    return Z;
}

double max_abs_diff(const Vec& a, const Vec& b) {
    double r = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) r = std::max(r, std::abs(a[k] - b[k]));
    return r;
}

}  // namespace

TEST_CASE("vector-space reduction matches the classical solver", "[mrde]") {
    auto N = vs1(), M = vs1();
    ConnectionSpec S = connection_from_ambient(N, M, scalar_linear_field(1.0), 3.0, 2.0);
    ClassicalRoughPath Xc = line_lift(1.0, 200);
    ManifoldRoughPath Xm = from_classical(Xc, N);

    MrdeOptions opt;
    opt.rde.tol = 1e-10;
    ManifoldRdeSolution sol = solve_manifold_rde(S, Xm, Vec{0.5}, opt);
    ClassicalRoughPath Zc = to_classical(sol.Z);

    FieldJet g = FieldJet::state_field(1, 1, [](const std::vector<Jet2>& y) {
        return std::vector<Jet2>{y[0]};
    });
    RdeOptions ropt;
    ropt.tol = 1e-10;
    ClassicalRoughPath oracle = solve_rde(Xc, g, Vec{0.5}, ropt);
    CHECK(d_p(Zc, oracle) <= 1e-7);
    CHECK(Zc.end_position()[1] == Catch::Approx(0.5 * std::exp(1.0)).margin(1e-7));

    MrdeVerify v = verify_solution(sol, S, Xm);
    CHECK(v.ok);
    CHECK(v.signal_resid <= 1e-7);
    CHECK(v.fixed_resid <= 1e-6);
}

TEST_CASE("zero coefficients freeze the response", "[mrde]") {
    auto N = vs1(), M = vs1();
    ConnectionSpec S = connection_from_ambient(N, M, scalar_linear_field(0.0), 3.0, 1.0);
    ClassicalRoughPath Xc = line_lift(1.0, 100);
    ManifoldRoughPath Xm = from_classical(Xc, N);
    ManifoldRdeSolution sol = solve_manifold_rde(S, Xm, Vec{0.25});
    for (const auto& m : support(sol.Z))
        CHECK(m[1] == Catch::Approx(0.25).margin(1e-12));
    MrdeVerify v = verify_solution(sol, S, Xm);
    INFO(v.witness);
    CHECK(v.start_err <= 1e-12);
    CHECK(v.signal_resid <= 1e-7);
    CHECK(v.fixed_resid <= 1e-9);
    CHECK(v.ok);
}

TEST_CASE("one-form substitution laws", "[mrde]") {
    auto N = vs1(), M = vs1();
    ConnectionSpec S = connection_from_ambient(N, M, scalar_linear_field(0.7), 3.0, 2.0);
    const int D = 2;
    std::vector<Vec> samples{{0.1, 0.3}, {-0.4, 0.2}, {0.5, -0.5}, {0.0, 0.0}};

    // identity one-form: the substitution produces the augmented-field matrix
    ManifoldOneForm ident;
    ident.dim_out = D;
    ident.gamma = 2.0;
    ident.charts.assign(N->charts.size() * M->charts.size(), OneFormJet::identity(D));
    ManifoldOneForm ag = alpha_gamma(ident, S, true);
    const ConnectionRep& rep = S.require(4, 4);  // chart centered at 0 in both factors
    const int pc = product_chart_index(S, 4, 4);
    OneFormJet htilde = make_h_form(FieldJet{2, 1, 1, rep.g.f, 3.0, {}});
    for (const auto& z : samples) {
        Vec got = ag.charts[static_cast<std::size_t>(pc)].jet.fn.value(z);
        Vec want = htilde.jet.fn.value(z);
        CHECK(max_abs_diff(got, want) <= 1e-12);
    }

    // a form annihilating the horizontal subspace maps to zero
    auto gf = rep.g.f;
    ManifoldOneForm ann;
    ann.dim_out = 1;
    ann.gamma = 2.0;
    ann.charts.assign(N->charts.size() * M->charts.size(),
                      OneFormJet::from_map(
                          D, 1,
                          [gf](const std::vector<Jet2>& z) {
                              std::vector<Jet2> g = gf(z);
                              return std::vector<Jet2>{-1.0 * g[0], Jet2::constant(1.0, z[0].n, z[0].ord)};
                          },
                          2.0));
    ManifoldOneForm ann_g = alpha_gamma(ann, S);
    for (const auto& z : samples) {
        Vec got = ann_g.charts[static_cast<std::size_t>(pc)].jet.fn.value(z);
        for (double v : got) CHECK(std::abs(v) <= 1e-12);
    }

    // idempotence of the substitution
    ManifoldOneForm ag2 = alpha_gamma(ag, S);
    for (const auto& z : samples) {
        Vec a = ag.charts[static_cast<std::size_t>(pc)].jet.fn.value(z);
        Vec b = ag2.charts[static_cast<std::size_t>(pc)].jet.fn.value(z);
        CHECK(max_abs_diff(a, b) <= 1e-12);
    }
}

TEST_CASE("pushforward connection: identity and affine frames", "[mrde]") {
    auto N = vs1(), M = vs1();
    ConnectionSpec S = connection_from_ambient(N, M, scalar_linear_field(0.7), 3.0, 2.0);
    const ConnectionRep& rep = S.require(4, 4);

    JetFn id1 = jet_identity(1);
    JetFn push_id = pushforward_connection(S, 4, 4, id1, id1, id1, id1);
    for (const Vec& z : {Vec{0.2, 0.4}, Vec{-0.3, 0.1}})
        CHECK(max_abs_diff(push_id.value(z), rep.g.value(z)) <= 1e-12);

    // xi1(u) = 2u, xi2(w) = w + 1: gtilde(zeta) = g(zeta_u / 2, zeta_w - 1) / 2
    JetFn x1 = jet_affine(1, 1, Vec{2.0}, Vec{0.0});
    JetFn x1i = jet_affine(1, 1, Vec{0.5}, Vec{0.0});
    JetFn x2 = jet_affine(1, 1, Vec{1.0}, Vec{1.0});
    JetFn x2i = jet_affine(1, 1, Vec{1.0}, Vec{-1.0});
    JetFn push = pushforward_connection(S, 4, 4, x1, x1i, x2, x2i);
    for (const Vec& z : {Vec{0.2, 1.4}, Vec{-0.6, 0.9}}) {
        const double want = 0.5 * rep.g.value(Vec{0.5 * z[0], z[1] - 1.0})[0];
        CHECK(push.value(z)[0] == Catch::Approx(want).margin(1e-12));
    }
}

TEST_CASE("sphere transport connection validates", "[mrde]") {
    auto Ssp = sphere_atlas_ptr();
    ConnectionSpec S = connection_from_ambient(Ssp, Ssp, transport_field(), 3.0, 1000.0);
    ConnectionCheck c = validate_connection(S);
    CHECK(c.ok);
    CHECK(c.worst_compat <= 1e-8);
    CHECK(connection_value_norm(S) < 100.0);
}

TEST_CASE("parallel transport around a latitude circle", "[mrde]") {
    auto Ssp = sphere_atlas_ptr();
    ConnectionSpec S = connection_from_ambient(Ssp, Ssp, transport_field(), 3.0, 1000.0);
    const double theta = M_PI / 4.0;
    ManifoldRoughPath X = sphere_circle_path(Ssp, theta, 1e-3);
    CHECK(check_manifold_path(X).ok);

    const Vec x0{std::sin(theta), 0.0, std::cos(theta)};
    const Vec y0{0.0, 1.0, 0.0};
    ManifoldRdeSolution sol = solve_manifold_rde(S, X, y0);

    // response stays on the sphere
    double worst = 0.0;
    for (const auto& m : support(sol.Z)) {
        const double n2 = m[3] * m[3] + m[4] * m[4] + m[5] * m[5];
        worst = std::max(worst, std::abs(std::sqrt(n2) - 1.0));
    }
    CHECK(worst <= 1e-6);

    // holonomy angle after one loop
    const Vec zend =
        segment_end_ambient(*sol.Z.atlas, sol.Z.segments.back());
    const Vec yT{zend[3], zend[4], zend[5]};
    const Vec e2{x0[1] * y0[2] - x0[2] * y0[1], x0[2] * y0[0] - x0[0] * y0[2],
                 x0[0] * y0[1] - x0[1] * y0[0]};
    const double ca = yT[0] * y0[0] + yT[1] * y0[1] + yT[2] * y0[2];
    const double sa = yT[0] * e2[0] + yT[1] * e2[1] + yT[2] * e2[2];
    double ang = std::atan2(sa, ca);  // in (-pi, pi]
    const double deficit = 2.0 * M_PI * (1.0 - std::cos(theta));
    double best = 1e300;
    for (int k = -2; k <= 2; ++k)
        for (int sgn : {-1, 1})
            best = std::min(best, std::abs(ang - sgn * deficit + 2.0 * M_PI * k));
    CHECK(best <= 1e-3);

    MrdeVerify v = verify_solution(sol, S, X, 5e-6, 1e-6, 6, SewOptions{1e-8, 20, 0});
    CHECK(v.signal_resid <= 5e-6);
    CHECK(v.fixed_resid <= 1e-6);
}

TEST_CASE("corrupted response segments are flagged", "[mrde]") {
    auto N = vs1(), M = vs1();
    ConnectionSpec S = connection_from_ambient(N, M, scalar_linear_field(1.0), 3.0, 2.0);
    ClassicalRoughPath Xc = line_lift(1.0, 100);
    ManifoldRoughPath Xm = from_classical(Xc, N);
    ManifoldRdeSolution sol = solve_manifold_rde(S, Xm, Vec{0.5});
    REQUIRE(!sol.Z.segments.empty());
    // shift the response start of one segment: a valid rough path, but no
    // longer a solution across the corrupted stretch
    MSegment& seg = sol.Z.segments[sol.Z.segments.size() / 2];
    seg.z0[1] += 0.05;
    seg.Z.start = seg.z0;
    seg.Z.invalidate_cache();
    MrdeVerify v = verify_solution(sol, S, Xm);
    CHECK_FALSE(v.ok);
    CHECK(v.fixed_resid > 1e-6);
}

TEST_CASE("connection json round trip", "[mrde]") {
    auto N = vs1(), M = vs1();
    nlohmann::json j = {
        {"N", atlas_to_json(*N)},
        {"M", atlas_to_json(*M)},
        {"gamma", 3.0},
        {"C", 2.0},
        {"reps", nlohmann::json::array({{{"chartN", "vs4"},
                                         {"chartM", "vs4"},
                                         {"expr", std::vector<std::string>{"x2"}}},
                                        {{"chartN", "vs4"},
                                         {"chartM", "vs5"},
                                         {"expr", std::vector<std::string>{"x2 + 0.5"}}}})}};
    ConnectionSpec S = connection_from_json(j);
    REQUIRE(S.reps.size() == 2);
    CHECK(S.require(4, 4).g.value(Vec{0.1, 0.3})[0] == Catch::Approx(0.3));
    CHECK(S.require(4, 5).g.value(Vec{0.1, 0.3})[0] == Catch::Approx(0.8));
    nlohmann::json back = connection_to_json(S);
    ConnectionSpec S2 = connection_from_json(back);
    CHECK(S2.require(4, 5).g.value(Vec{0.1, 0.3})[0] == Catch::Approx(0.8));
    CHECK(back.at("C").get<double>() == 2.0);

    // missing pairs are rejected on demand
    CHECK_THROWS_AS(S.require(0, 0), domain_error);
}
