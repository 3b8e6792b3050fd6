#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <rp/jet.hpp>

using namespace rp;

namespace {

std::vector<Vec> grid1d(double lo, double hi, double pitch) {
    std::vector<Vec> g;
    for (double x = lo; x <= hi + 1e-12; x += pitch) g.push_back({x});
    return g;
}

LipJet scalar_jet(MapFn f, double gamma, std::vector<Vec> domain) {
    LipJet j;
    j.fn = {1, 1, std::move(f)};
    j.gamma = gamma;
    j.domain = std::move(domain);
    return j;
}

}  // namespace

TEST_CASE("jet arithmetic reproduces analytic derivatives") {
    JetFn f{2, 1, [](const std::vector<Jet2>& x) {
                return std::vector<Jet2>{sin(x[0]) * x[1] + exp(x[0] * x[1])};
            }};
    Vec x{0.3, -0.7};
    auto v = f.value(x);
    const double ref = std::sin(0.3) * (-0.7) + std::exp(0.3 * -0.7);
    CHECK(v[0] == Catch::Approx(ref).epsilon(1e-14));
    auto g = f.deriv(x, 1);
    CHECK(g[0] == Catch::Approx(std::cos(0.3) * (-0.7) + (-0.7) * std::exp(-0.21)).epsilon(1e-12));
    CHECK(g[1] == Catch::Approx(std::sin(0.3) + 0.3 * std::exp(-0.21)).epsilon(1e-12));
    auto h = f.deriv(x, 2);
    CHECK(h[0] == Catch::Approx(-std::sin(0.3) * (-0.7) + 0.49 * std::exp(-0.21)).epsilon(1e-12));
    // mixed partial
    CHECK(h[1] == Catch::Approx(std::cos(0.3) + std::exp(-0.21) * (1.0 + 0.3 * -0.7)).epsilon(1e-12));
}

TEST_CASE("constant jet has norm |c| and zero remainders") {
    auto j = scalar_jet(
        [](const std::vector<Jet2>& x) {
            return std::vector<Jet2>{Jet2::constant(-3.0, x[0].n, x[0].ord)};
        },
        2.0, grid1d(0.0, 1.0, 0.1));
    auto rep = lip_norm_estimate(j);
    CHECK(rep.norm == Catch::Approx(3.0).margin(1e-12));
    auto r0 = lip_remainder(j, {0.2}, {0.8}, 0);
    CHECK(std::abs(r0[0]) <= 1e-14);
}

TEST_CASE("identity on [0,1] has Lip-gamma norm 1 for gamma in (1,2]") {
    auto j = scalar_jet([](const std::vector<Jet2>& x) { return std::vector<Jet2>{x[0]}; }, 2.0,
                        grid1d(0.0, 1.0, 0.01));
    auto rep = lip_norm_estimate(j);
    CHECK(rep.norm == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("x^2 on [0,1] at gamma 2 has norm 2") {
    auto j = scalar_jet([](const std::vector<Jet2>& x) { return std::vector<Jet2>{x[0] * x[0]}; },
                        2.0, grid1d(0.0, 1.0, 0.01));
    auto rep = lip_norm_estimate(j);
    CHECK(rep.norm == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("empty domain rejected") {
    auto j = scalar_jet([](const std::vector<Jet2>& x) { return std::vector<Jet2>{x[0]}; }, 2.0, {});
    CHECK_THROWS_AS(lip_norm_estimate(j), domain_error);
}

TEST_CASE("compose with identity preserves the jet") {
    auto f = scalar_jet(
        [](const std::vector<Jet2>& x) { return std::vector<Jet2>{sin(x[0]) + x[0] * x[0]}; }, 2.0,
        grid1d(0.0, 1.0, 0.05));
    LipJet id = scalar_jet([](const std::vector<Jet2>& x) { return std::vector<Jet2>{x[0]}; }, 2.0,
                           grid1d(-3.0, 3.0, 0.05));
    auto c = lip_compose(id, f);
    for (double x = 0.0; x <= 1.0; x += 0.1) {
        CHECK(c.fn.value({x})[0] == Catch::Approx(f.fn.value({x})[0]).epsilon(1e-14));
        CHECK(c.fn.deriv({x}, 1)[0] == Catch::Approx(f.fn.deriv({x}, 1)[0]).epsilon(1e-14));
    }
    CHECK(lip_norm_estimate(c).norm == Catch::Approx(lip_norm_estimate(f).norm).epsilon(1e-10));
}

TEST_CASE("g(y)=y^2 after f(x)=x+1 equals the analytic jet") {
    auto f = scalar_jet([](const std::vector<Jet2>& x) { return std::vector<Jet2>{x[0] + 1.0}; },
                        2.0, grid1d(0.0, 1.0, 0.05));
    auto g = scalar_jet([](const std::vector<Jet2>& y) { return std::vector<Jet2>{y[0] * y[0]}; },
                        2.0, grid1d(0.0, 3.0, 0.05));
    auto c = lip_compose(g, f);
    for (double x = 0.0; x <= 1.0; x += 0.05) {
        CHECK(c.fn.value({x})[0] == Catch::Approx((x + 1.0) * (x + 1.0)).margin(1e-12));
        CHECK(c.fn.deriv({x}, 1)[0] == Catch::Approx(2.0 * (x + 1.0)).margin(1e-12));
    }
}

TEST_CASE("sin composed with sin validates and satisfies the norm inequality") {
    auto s = scalar_jet([](const std::vector<Jet2>& x) { return std::vector<Jet2>{sin(x[0])}; },
                        2.0, grid1d(0.0, 1.0, 0.02));
    auto c = lip_compose(s, s);
    auto rep = lip_norm_estimate(c);
    double nf = lip_norm_estimate(s).norm;
    double bound = lip_composition_constant(2.0) * nf * std::max(nf, 1.0);
    CHECK(rep.norm <= bound);
}

TEST_CASE("composition inequality on random polynomial pairs") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double gamma : {1.5, 2.0, 2.5}) {
        for (int rep = 0; rep < 34; ++rep) {
            double a0 = u(rng), a1 = u(rng), a2 = u(rng);
            double b0 = u(rng), b1 = u(rng), b2 = u(rng);
            auto f = scalar_jet(
                [a0, a1, a2](const std::vector<Jet2>& x) {
                    return std::vector<Jet2>{a0 + a1 * x[0] + a2 * x[0] * x[0]};
                },
                gamma, grid1d(-1.0, 1.0, 0.05));
            auto g = scalar_jet(
                [b0, b1, b2](const std::vector<Jet2>& y) {
                    return std::vector<Jet2>{b0 + b1 * y[0] + b2 * y[0] * y[0]};
                },
                gamma, grid1d(-4.0, 4.0, 0.05));
            auto c = lip_compose(g, f);
            const double nf = lip_norm_estimate(f).norm;
            const double ng = lip_norm_estimate(g).norm;
            const int k = c.k();
            const double bound =
                lip_composition_constant(gamma) * ng * std::max(std::pow(nf, k), 1.0);
            CHECK(lip_norm_estimate(c).norm <= bound * (1.0 + 1e-9));
        }
    }
}

TEST_CASE("derivative components match finite differences on a convex domain") {
    auto f = scalar_jet(
        [](const std::vector<Jet2>& x) { return std::vector<Jet2>{sin(2.0 * x[0]) + x[0]}; }, 2.0,
        grid1d(0.0, 1.0, 1.0 / 64.0));
    const double h = 1e-6;
    for (double x = 0.1; x < 0.9; x += 0.13) {
        double fd = (f.fn.value({x + h})[0] - f.fn.value({x - h})[0]) / (2.0 * h);
        CHECK(f.fn.deriv({x}, 1)[0] == Catch::Approx(fd).margin(1e-8));
    }
}

TEST_CASE("closure extension reaches the endpoints of (0,1)") {
    auto j = scalar_jet([](const std::vector<Jet2>& x) { return std::vector<Jet2>{x[0]}; }, 2.0,
                        grid1d(0.01, 0.99, 0.01));
    auto e = lip_extend_closure(j, {{0.0}, {1.0}});
    CHECK(e.fn.value({0.0})[0] == Catch::Approx(0.0).margin(1e-12));
    CHECK(e.fn.value({1.0})[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(lip_norm_estimate(e).norm == Catch::Approx(lip_norm_estimate(j).norm).margin(1e-8));
}

TEST_CASE("closure extension of sqrt(x + 0.01) tracks the finer-grid limit") {
    auto mk = [](double pitch) {
        return scalar_jet(
            [](const std::vector<Jet2>& x) { return std::vector<Jet2>{sqrt(x[0] + 0.01)}; }, 1.5,
            grid1d(pitch, 1.0 - pitch, pitch));
    };
    auto coarse = lip_extend_closure(mk(0.02), {{1.0}});
    auto fine = lip_extend_closure(mk(0.002), {{1.0}});
    // both should approach sqrt(1.01); the coarse error is bounded by the
    // grid-scale Cauchy modulus 4 L pitch^{gamma - 1}
    const double L = lip_norm_estimate(mk(0.02)).norm;
    const double bound = 4.0 * L * std::pow(0.02, 0.5);
    CHECK(std::abs(coarse.fn.value({1.0})[0] - std::sqrt(1.01)) <= bound);
    CHECK(std::abs(fine.fn.value({1.0})[0] - std::sqrt(1.01)) <
          std::abs(coarse.fn.value({1.0})[0] - std::sqrt(1.01)) + 1e-12);
}

TEST_CASE("local-to-global bound formula") {
    CHECK(local_to_global_bound(1.0, 1.0, 1.7) == Catch::Approx(2.0));
    CHECK(local_to_global_bound(3.0, 0.5, 1.5) == Catch::Approx(6.0 / std::sqrt(0.5)).epsilon(1e-12));
    // f(x)=x^2 on [0,1], local norms on delta-balls <= 2, global = 2 <= max(2, 2*2/0.25^0) = 4
    auto j = scalar_jet([](const std::vector<Jet2>& x) { return std::vector<Jet2>{x[0] * x[0]}; },
                        2.0, grid1d(0.0, 1.0, 0.01));
    double local_C = 0.0;
    for (double c = 0.0; c <= 1.0; c += 0.25) {
        LipJet sub = j;
        sub.domain.clear();
        for (const auto& x : j.domain)
            if (std::abs(x[0] - c) <= 0.25) sub.domain.push_back(x);
        local_C = std::max(local_C, lip_norm_estimate(sub).norm);
    }
    const double bound = local_to_global_bound(local_C, 0.25, 2.0);
    CHECK(lip_norm_estimate(j).norm <= bound + 1e-9);
}

TEST_CASE("blended extension builds a bump and restricts to the input") {
    LipJet one;
    one.fn = jet_constant(2, {1.0});
    one.gamma = 2.0;
    for (double x = -0.5; x <= 0.5; x += 0.125)
        for (double y = -0.5; y <= 0.5; y += 0.125) one.domain.push_back({x, y});
    Box inner{{-0.5, -0.5}, {0.5, 0.5}};
    auto bump = lip_extend_blend(one, {inner}, 0.25);
    // equals the input on the original domain
    for (const auto& x : one.domain)
        CHECK(bump.fn.value(x)[0] == Catch::Approx(1.0).margin(1e-12));
    // values in [0,1], vanishing far away
    for (double x = -1.2; x <= 1.2; x += 0.05) {
        double v = bump.fn.value({x, 0.0})[0];
        CHECK(v >= -1e-12);
        CHECK(v <= 1.0 + 1e-12);
    }
    CHECK(bump.fn.value({1.0, 0.0})[0] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("separation requirement enforced") {
    LipJet one;
    one.fn = jet_constant(1, {1.0});
    one.gamma = 2.0;
    one.domain = grid1d(0.0, 1.0, 0.1);
    Box a{{0.0}, {1.0}}, b{{1.1}, {2.0}};
    CHECK_THROWS_AS(lip_extend_blend(one, {a, b}, 0.3), domain_error);
}

TEST_CASE("scaled identity extensions have u-independent derivative bounds") {
    // f_u(x) = u f_1(x/u) where f_1 is the identity blended to vanish off a box;
    // first and second derivative sups must not grow with u >= 1
    auto build = [](double u) {
        LipJet id;
        id.fn = jet_identity(1);
        id.gamma = 2.0;
        id.domain = grid1d(-1.0, 1.0, 0.05);
        Box box{{-1.0}, {1.0}};
        auto blended = lip_extend_blend(id, {box}, 0.5);
        auto base = blended.fn;
        JetFn scaled{1, 1, [base, u](const std::vector<Jet2>& x) {
                         std::vector<Jet2> xs{x[0] / u};
                         auto r = base.f(xs);
                         for (auto& j : r) j = j * u;
                         return r;
                     }};
        return scaled;
    };
    auto sup_deriv = [](const JetFn& f, double u, int ord) {
        double m = 0.0;
        for (double x = -1.6 * u; x <= 1.6 * u; x += 0.01 * u)
            m = std::max(m, std::abs(f.deriv({x}, ord)[0]));
        return m;
    };
    const double d1_ref = sup_deriv(build(1.0), 1.0, 1);
    const double d2_ref = sup_deriv(build(1.0), 1.0, 2);
    for (double u : {2.0, 4.0, 8.0}) {
        CHECK(sup_deriv(build(u), u, 1) <= d1_ref + 1e-9);
        CHECK(sup_deriv(build(u), u, 2) <= d2_ref + 1e-9);
    }
}
