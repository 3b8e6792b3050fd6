#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <rp/tensor.hpp>

using namespace rp;

namespace {

TruncatedTensor random_tensor(int d, int n, std::mt19937& rng, bool group_zero_grade) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    TruncatedTensor t(d, n);
    for (int g = 0; g <= n; ++g)
        for (auto& v : t.grade(g)) v = u(rng);
    t.set_scalar(group_zero_grade ? 0.0 : 1.0);
    return t;
}

}  // namespace

TEST_CASE("unit is a two-sided identity") {
    std::mt19937 rng(7);
    auto b = random_tensor(2, 3, rng, false);
    auto e = TruncatedTensor::unit(2, 3);
    auto lhs = tensor_mul(e, b);
    auto rhs = tensor_mul(b, e);
    for (int g = 0; g <= 3; ++g) {
        CHECK(tensor_norm(lhs - b, g) == Catch::Approx(0.0).margin(1e-15));
        CHECK(tensor_norm(rhs - b, g) == Catch::Approx(0.0).margin(1e-15));
    }
}

TEST_CASE("d=2 n=2 grade pattern of a product") {
    // (1, x, 0) (x) (1, y, 0) = (1, x+y, x(x)y)
    TruncatedTensor a(2, 2), b(2, 2);
    a.set_scalar(1.0);
    b.set_scalar(1.0);
    a.grade(1) = {1.0, 2.0};
    b.grade(1) = {3.0, -1.0};
    auto r = tensor_mul(a, b);
    CHECK(r.grade(1)[0] == Catch::Approx(4.0));
    CHECK(r.grade(1)[1] == Catch::Approx(1.0));
    // x (x) y row-major: [x1 y1, x1 y2, x2 y1, x2 y2]
    CHECK(r.grade(2)[0] == Catch::Approx(3.0));
    CHECK(r.grade(2)[1] == Catch::Approx(-1.0));
    CHECK(r.grade(2)[2] == Catch::Approx(6.0));
    CHECK(r.grade(2)[3] == Catch::Approx(-2.0));
}

TEST_CASE("d=1 n=3 hand-expanded product") {
    // (1,2,0,0) (x) (1,3,0,0) = (1, 5, 6, 0)
    TruncatedTensor a(1, 3), b(1, 3);
    a.set_scalar(1.0);
    b.set_scalar(1.0);
    a.grade(1) = {2.0};
    b.grade(1) = {3.0};
    auto r = tensor_mul(a, b);
    CHECK(r.grade(1)[0] == Catch::Approx(5.0));
    CHECK(r.grade(2)[0] == Catch::Approx(6.0));
    CHECK(r.grade(3)[0] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("shape mismatch rejected") {
    TruncatedTensor a(2, 2), b(3, 2), c(2, 3);
    CHECK_THROWS_AS(tensor_mul(a, b), shape_error);
    CHECK_THROWS_AS(tensor_mul(a, c), shape_error);
}

TEST_CASE("capacity envelope") {
    CHECK_THROWS_AS(TruncatedTensor(9, 2), capacity_error);
    CHECK_THROWS_AS(TruncatedTensor(2, 7), capacity_error);
}

TEST_CASE("exp of zero and 1-d series value") {
    TruncatedTensor z(1, 2);
    auto e = tensor_exp(z);
    CHECK(e.scalar() == Catch::Approx(1.0));
    CHECK(tensor_norm(e, 1) == Catch::Approx(0.0).margin(1e-15));
    CHECK(tensor_norm(e, 2) == Catch::Approx(0.0).margin(1e-15));

    TruncatedTensor x(1, 2);
    x.grade(1) = {2.0};
    auto ex = tensor_exp(x);
    CHECK(ex.grade(1)[0] == Catch::Approx(2.0));
    CHECK(ex.grade(2)[0] == Catch::Approx(2.0));  // 2^2 / 2!
}

TEST_CASE("exp/log domain errors") {
    TruncatedTensor g(1, 2);  // grade-0 = 0 here
    CHECK_THROWS_AS(tensor_log(g), domain_error);
    auto u = TruncatedTensor::unit(1, 2);
    CHECK_THROWS_AS(tensor_exp(u), domain_error);
}

TEST_CASE("log(exp(x)) round trip") {
    std::mt19937 rng(42);
    for (int rep = 0; rep < 20; ++rep) {
        auto x = random_tensor(3, 4, rng, true);
        auto back = tensor_log(tensor_exp(x));
        for (int g = 1; g <= 4; ++g) CHECK(tensor_norm(back - x, g) <= 1e-12);
    }
}

TEST_CASE("tensor_norm basics") {
    TruncatedTensor a(2, 2);
    CHECK(tensor_norm(a, 1) == 0.0);
    a.grade(1) = {3.0, -4.0};
    CHECK(tensor_norm(a, 1) == Catch::Approx(7.0));
    a.grade(2) = {1.0, -1.0, 0.5, 0.0};
    CHECK(tensor_norm(a, 2) == Catch::Approx(2.5));
    CHECK_THROWS_AS(tensor_norm(a, 3), domain_error);
}

TEST_CASE("associativity on random triples") {
    std::mt19937 rng(3);
    for (int d = 1; d <= 3; ++d) {
        for (int n = 1; n <= 4; ++n) {
            for (int rep = 0; rep < 5; ++rep) {
                auto a = random_tensor(d, n, rng, false);
                auto b = random_tensor(d, n, rng, false);
                auto c = random_tensor(d, n, rng, false);
                auto lhs = tensor_mul(tensor_mul(a, b), c);
                auto rhs = tensor_mul(a, tensor_mul(b, c));
                for (int g = 0; g <= n; ++g) CHECK(tensor_norm(lhs - rhs, g) <= 1e-12);
            }
        }
    }
}

TEST_CASE("norm submultiplicativity across grades") {
    std::mt19937 rng(11);
    for (int rep = 0; rep < 30; ++rep) {
        auto a = random_tensor(3, 3, rng, false);
        auto b = random_tensor(3, 3, rng, false);
        auto ab = tensor_mul(a, b);
        for (int g = 0; g <= 3; ++g) {
            double bound = 0.0;
            for (int i = 0; i <= g; ++i)
                bound += tensor_norm(a, i) * tensor_norm(b, g - i);
            CHECK(tensor_norm(ab, g) <= bound + 1e-12);
        }
    }
}

TEST_CASE("json round trip") {
    std::mt19937 rng(5);
    auto a = random_tensor(3, 3, rng, false);
    auto j = tensor_to_json(a);
    auto b = tensor_from_json(j);
    for (int g = 0; g <= 3; ++g) CHECK(tensor_norm(a - b, g) == 0.0);
}
