#ifndef RP_TENSOR_HPP
#define RP_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

// Truncated tensor algebra T^(n)(R^d), dense storage per grade.
// Grade g holds d^g coefficients, row-major: index(i1,...,ig) =
// i1*d^{g-1} + ... + ig (0-based).

namespace rp {

using Vec = std::vector<double>;

struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct domain_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kMaxLevel = 6;
constexpr int kMaxDim = 8;

inline std::size_t grade_size(int dim, int g) {
    std::size_t s = 1;
    for (int i = 0; i < g; ++i) s *= static_cast<std::size_t>(dim);
    return s;
}

class TruncatedTensor {
public:
    TruncatedTensor() = default;

    TruncatedTensor(int dim, int level) : dim_(dim), level_(level) {
        if (dim < 1 || level < 0) throw shape_error("TruncatedTensor: dim/level out of range");
        if (dim > kMaxDim || level > kMaxLevel)
            throw capacity_error("TruncatedTensor: supported envelope is d <= 8, n <= 6");
        grades_.resize(static_cast<std::size_t>(level) + 1);
        for (int g = 0; g <= level; ++g)
            grades_[static_cast<std::size_t>(g)].assign(grade_size(dim, g), 0.0);
    }

    static TruncatedTensor unit(int dim, int level) {
        TruncatedTensor t(dim, level);
        t.grades_[0][0] = 1.0;
        return t;
    }

    int dim() const { return dim_; }
    int level() const { return level_; }

    std::vector<double>& grade(int g) { return grades_.at(static_cast<std::size_t>(g)); }
    const std::vector<double>& grade(int g) const { return grades_.at(static_cast<std::size_t>(g)); }

    double scalar() const { return grades_[0][0]; }
    void set_scalar(double v) { grades_[0][0] = v; }

    TruncatedTensor& operator+=(const TruncatedTensor& o) {
        check_shape(o);
        for (int g = 0; g <= level_; ++g) {
            auto& a = grades_[static_cast<std::size_t>(g)];
            const auto& b = o.grades_[static_cast<std::size_t>(g)];
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        }
        return *this;
    }
    TruncatedTensor& operator-=(const TruncatedTensor& o) {
        check_shape(o);
        for (int g = 0; g <= level_; ++g) {
            auto& a = grades_[static_cast<std::size_t>(g)];
            const auto& b = o.grades_[static_cast<std::size_t>(g)];
            for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
        }
        return *this;
    }
    TruncatedTensor& operator*=(double c) {
        for (auto& g : grades_)
            for (auto& v : g) v *= c;
        return *this;
    }

    friend TruncatedTensor operator+(TruncatedTensor a, const TruncatedTensor& b) { return a += b; }
    friend TruncatedTensor operator-(TruncatedTensor a, const TruncatedTensor& b) { return a -= b; }
    friend TruncatedTensor operator*(TruncatedTensor a, double c) { return a *= c; }
    friend TruncatedTensor operator*(double c, TruncatedTensor a) { return a *= c; }

    void check_shape(const TruncatedTensor& o) const {
        if (dim_ != o.dim_ || level_ != o.level_)
            throw shape_error("TruncatedTensor: dim/level mismatch");
    }

private:
    int dim_ = 0;
    int level_ = 0;
    std::vector<std::vector<double>> grades_;
};

// (a (x) b)^g = sum_{i+j=g} a^i (x) b^j, grades above the truncation level dropped.
inline TruncatedTensor tensor_mul(const TruncatedTensor& a, const TruncatedTensor& b) {
    a.check_shape(b);
    const int d = a.dim(), n = a.level();
    TruncatedTensor r(d, n);
    for (int g = 0; g <= n; ++g) {
        auto& out = r.grade(g);
        for (int i = 0; i <= g; ++i) {
            const int j = g - i;
            const auto& ga = a.grade(i);
            const auto& gb = b.grade(j);
            const std::size_t nb = gb.size();
            for (std::size_t ia = 0; ia < ga.size(); ++ia) {
                const double va = ga[ia];
                if (va == 0.0) continue;
                double* dst = out.data() + ia * nb;
                for (std::size_t ib = 0; ib < nb; ++ib) dst[ib] += va * gb[ib];
            }
        }
    }
    return r;
}

// l1 norm of one grade; with the l1 base norm on R^d this is the projective
// tensor norm of that component.
inline double tensor_norm(const TruncatedTensor& a, int g) {
    if (g < 0 || g > a.level()) throw domain_error("tensor_norm: grade out of range");
    double s = 0.0;
    for (double v : a.grade(g)) s += std::abs(v);
    return s;
}

// max over grades >= 1 of the grade norms
inline double tensor_norm_max(const TruncatedTensor& a) {
    double m = 0.0;
    for (int g = 1; g <= a.level(); ++g) m = std::max(m, tensor_norm(a, g));
    return m;
}

// exp(x) = sum_k x^{(x)k} / k!, requires grade-0 == 0.
inline TruncatedTensor tensor_exp(const TruncatedTensor& x) {
    if (x.scalar() != 0.0) throw domain_error("tensor_exp: grade-0 coefficient must be 0");
    const int n = x.level();
    TruncatedTensor r = TruncatedTensor::unit(x.dim(), n);
    TruncatedTensor pw = TruncatedTensor::unit(x.dim(), n);
    double fact = 1.0;
    for (int k = 1; k <= n; ++k) {
        pw = tensor_mul(pw, x);
        fact *= k;
        r += pw * (1.0 / fact);
    }
    return r;
}

// log(g) = sum_k (-1)^{k+1} (g-1)^{(x)k} / k, requires grade-0 == 1.
inline TruncatedTensor tensor_log(const TruncatedTensor& g) {
    if (std::abs(g.scalar() - 1.0) > 1e-9)
        throw domain_error("tensor_log: grade-0 coefficient must be 1");
    const int n = g.level();
    TruncatedTensor u = g;
    u.set_scalar(g.scalar() - 1.0);  // u = g - 1, keeps any round-off
    TruncatedTensor r(g.dim(), n);
    TruncatedTensor pw = TruncatedTensor::unit(g.dim(), n);
    double sign = 1.0;
    for (int k = 1; k <= n; ++k) {
        pw = tensor_mul(pw, u);
        r += pw * (sign / k);
        sign = -sign;
    }
    r.set_scalar(0.0);
    return r;
}

// group inverse of a grade-0 == 1 element
inline TruncatedTensor tensor_inverse(const TruncatedTensor& g) {
    return tensor_exp(tensor_log(g) * -1.0);
}

inline nlohmann::json tensor_to_json(const TruncatedTensor& a) {
    nlohmann::json j;
    j["dim"] = a.dim();
    j["level"] = a.level();
    auto grades = nlohmann::json::array();
    for (int g = 0; g <= a.level(); ++g) grades.push_back(a.grade(g));
    j["grades"] = grades;
    return j;
}

inline TruncatedTensor tensor_from_json(const nlohmann::json& j) {
    TruncatedTensor a(j.at("dim").get<int>(), j.at("level").get<int>());
    const auto& grades = j.at("grades");
    if (static_cast<int>(grades.size()) != a.level() + 1)
        throw shape_error("tensor_from_json: wrong number of grades");
    for (int g = 0; g <= a.level(); ++g) {
        auto vals = grades.at(static_cast<std::size_t>(g)).get<std::vector<double>>();
        if (vals.size() != grade_size(a.dim(), g))
            throw shape_error("tensor_from_json: grade " + std::to_string(g) + " has wrong length");
        a.grade(g) = std::move(vals);
    }
    return a;
}

}  // namespace rp

#endif
