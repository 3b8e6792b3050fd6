#ifndef RP_PATH_HPP
#define RP_PATH_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tensor.hpp"

// Signature lifts of piecewise-linear paths, Chen multiplicativity,
// restriction/concatenation, p-variation and the d_p metric, and numerical
// extension of multiplicative functionals to higher degree.

namespace rp {

inline double gamma_fact(double x) { return std::tgamma(x + 1.0); }  // (x)! = Gamma(x+1)

// ---------------------------------------------------------------------------
// SampledPath: piecewise-linear (bounded-variation) path through samples.
// ---------------------------------------------------------------------------
struct SampledPath {
    int dim = 0;
    std::vector<double> times;
    std::vector<Vec> points;

    void validate() const {
        if (times.size() < 2 || points.size() != times.size())
            throw shape_error("SampledPath: need >= 1 segment and matching arrays");
        for (std::size_t i = 1; i < times.size(); ++i)
            if (!(times[i] > times[i - 1]))
                throw shape_error("SampledPath: times must be strictly increasing");
        for (const auto& p : points)
            if (static_cast<int>(p.size()) != dim) throw shape_error("SampledPath: point dim mismatch");
    }
};

// ---------------------------------------------------------------------------
// ClassicalRoughPath: degree-n multiplicative functional on a grid, with a
// superadditive control realized as per-segment weights times a calibrated
// scale (ControlEstimate).
// ---------------------------------------------------------------------------
class ClassicalRoughPath {
public:
    int dim = 0;
    double p = 1.0;
    int level = 1;
    std::vector<double> times;            // grid t_0 < ... < t_m
    std::vector<TruncatedTensor> segs;    // increment over (t_k, t_{k+1})
    Vec start;
    std::vector<double> weights;          // per-segment control weights
    double control_scale = 1.0;

    std::size_t segments() const { return segs.size(); }
    double t_begin() const { return times.front(); }
    double t_end() const { return times.back(); }

    void validate() const {
        if (times.size() != segs.size() + 1) throw shape_error("ClassicalRoughPath: grid/segment mismatch");
        for (const auto& s : segs)
            if (s.dim() != dim || s.level() != level)
                throw shape_error("ClassicalRoughPath: segment tensor shape mismatch");
    }

    // increment over grid indices [i, j]
    TruncatedTensor increment_idx(std::size_t i, std::size_t j) const {
        ensure_prefix();
        if (i == j) return TruncatedTensor::unit(dim, level);
        if (prefix_inv_.size() != prefix_.size()) {
            prefix_inv_.clear();
            prefix_inv_.reserve(prefix_.size());
            for (const auto& pfx : prefix_) prefix_inv_.push_back(tensor_inverse(pfx));
        }
        return tensor_mul(prefix_inv_[i], prefix_[j]);
    }

    // increment over arbitrary [s, t] within the span; partial segments are
    // interpolated log-linearly (exact for signature lifts of polylines)
    TruncatedTensor increment(double s, double t) const {
        if (s > t) throw domain_error("increment: s > t");
        const auto [is, fs] = locate(s);
        const auto [it, ft] = locate(t);
        if (is == it) {
            if (ft <= fs) return TruncatedTensor::unit(dim, level);
            return seg_fraction(is, fs, ft);
        }
        TruncatedTensor r = fs > 0.0
                                ? tensor_mul(seg_fraction(is, fs, 1.0), increment_idx(is + 1, it))
                                : increment_idx(is, it);
        if (ft > 0.0) r = tensor_mul(r, seg_fraction(it, 0.0, ft));
        return r;
    }

    // control omega(s, t) = scale * (fractional) sum of weights over [s, t]
    double control(double s, double t) const {
        if (t <= s) return 0.0;
        const auto [is, fs] = locate(s);
        const auto [it, ft] = locate(t);
        double w = 0.0;
        if (is == it) {
            w = weights[is] * (ft - fs);
        } else {
            if (weight_prefix_.size() != weights.size() + 1) {
                weight_prefix_.assign(1, 0.0);
                weight_prefix_.reserve(weights.size() + 1);
                for (double wk : weights) weight_prefix_.push_back(weight_prefix_.back() + wk);
            }
            if (fs > 0.0) w += weights[is] * (1.0 - fs);
            const std::size_t k0 = (fs > 0.0 ? is + 1 : is);
            w += weight_prefix_[it] - weight_prefix_[k0];
            if (ft > 0.0) w += weights[it] * ft;
        }
        return control_scale * w;
    }

    // base-point position at time t: start + pi_1 X_{t0, t}
    Vec position(double t) const {
        TruncatedTensor inc = increment(t_begin(), t);
        Vec x = start;
        const auto& g1 = inc.grade(1);
        for (int i = 0; i < dim; ++i) x[static_cast<std::size_t>(i)] += g1[static_cast<std::size_t>(i)];
        return x;
    }
    Vec end_position() const { return position(t_end()); }

    void invalidate_cache() const {
        prefix_.clear();
        prefix_inv_.clear();
        seg_logs_.clear();
    }

    // locate time t: segment index k and fraction f in [0, 1) such that
    // t = t_k + f * (t_{k+1} - t_k); returns (m-1, 1.0) clamp semantics via (it, ft).
    std::pair<std::size_t, double> locate(double t) const {
        if (t <= times.front()) return {0, 0.0};
        if (t >= times.back()) return {segs.size(), 0.0};
        auto it = std::upper_bound(times.begin(), times.end(), t);
        std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
        double f = (t - times[k]) / (times[k + 1] - times[k]);
        if (f >= 1.0) {
            k += 1;
            f = 0.0;
        }
        return {k, f};
    }

private:
    mutable std::vector<TruncatedTensor> prefix_;  // prefix_[j] = X_{t0, tj}
    mutable std::vector<TruncatedTensor> prefix_inv_;
    mutable std::vector<TruncatedTensor> seg_logs_;
    mutable std::vector<double> weight_prefix_;  // weight_prefix_[j] = sum of weights[0..j)

    void ensure_prefix() const {
        if (prefix_.size() == times.size()) return;
        prefix_.clear();
        prefix_.reserve(times.size());
        prefix_.push_back(TruncatedTensor::unit(dim, level));
        for (const auto& s : segs) prefix_.push_back(tensor_mul(prefix_.back(), s));
    }

    // sub-increment of segment k over fractional window [a, b] via log scaling
    TruncatedTensor seg_fraction(std::size_t k, double a, double b) const {
        if (k >= segs.size()) return TruncatedTensor::unit(dim, level);
        if (seg_logs_.size() != segs.size()) {
            seg_logs_.clear();
            seg_logs_.reserve(segs.size());
            for (const auto& sg : segs) seg_logs_.push_back(tensor_log(sg));
        }
        return tensor_exp(seg_logs_[k] * (b - a));
    }
};

// ---------------------------------------------------------------------------
// beta constant of the finite p-variation bound:
// beta = p (1 + sum_{r>=3} (2/(r-2))^{(floor(p)+1)/p}) = p (1 + 2^q zeta(q)).
// zeta via Euler-Maclaurin, absolute tail below 1e-13.
// ---------------------------------------------------------------------------
inline double riemann_zeta(double q) {
    const int N = 2000;
    double s = 0.0;
    for (int n = 1; n <= N; ++n) s += std::pow(static_cast<double>(n), -q);
    const double Nd = N;
    s += std::pow(Nd, 1.0 - q) / (q - 1.0) - 0.5 * std::pow(Nd, -q);
    s += q / 12.0 * std::pow(Nd, -q - 1.0);
    s -= q * (q + 1.0) * (q + 2.0) / 720.0 * std::pow(Nd, -q - 3.0);
    return s;
}

inline double beta_const(double p) {
    if (p < 1.0) throw domain_error("beta_const: p must be >= 1");
    const double q = (std::floor(p) + 1.0) / p;
    return p * (1.0 + std::pow(2.0, q) * riemann_zeta(q));
}

// smallest per-pair control weight consistent with the finite-variation bound
inline double finite_variation_weight(const TruncatedTensor& inc, double p) {
    double w = 0.0;
    const double beta = beta_const(p);
    for (int g = 1; g <= inc.level(); ++g) {
        const double nrm = tensor_norm(inc, g);
        if (nrm <= 0.0) continue;
        const double gi = static_cast<double>(g) / p;
        w = std::max(w, std::pow(beta * gamma_fact(gi) * nrm, 1.0 / gi));
    }
    return w;
}

// calibrate control_scale so the finite-variation bound holds on scanned pairs
inline void calibrate_control(ClassicalRoughPath& X) {
    const std::size_t m = X.segments();
    if (m == 0) return;
    double c = 1.0;
    const std::size_t max_pairs = 20000;
    const std::size_t stride = std::max<std::size_t>(1, m * m / (2 * max_pairs));
    std::vector<double> wpre(1, 0.0);
    wpre.reserve(m + 1);
    for (double wk : X.weights) wpre.push_back(wpre.back() + wk);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j <= m; j += stride) {
            const double w0 = wpre[j] - wpre[i];
            if (w0 <= 0.0) continue;
            const double need = finite_variation_weight(X.increment_idx(i, j), X.p);
            c = std::max(c, need / w0);
        }
    X.control_scale = c;
}

// ---------------------------------------------------------------------------
// signature lift of a sampled polyline at level n (Chen products of segment
// exponentials). p defaults to n.
// ---------------------------------------------------------------------------
inline ClassicalRoughPath signature(const SampledPath& path, int n,
                                    std::optional<double> p_override = std::nullopt) {
    path.validate();
    if (n < 1) throw domain_error("signature: level must be >= 1");
    ClassicalRoughPath X;
    X.dim = path.dim;
    X.level = n;
    X.p = p_override.value_or(static_cast<double>(n));
    X.times = path.times;
    X.start = path.points.front();
    X.segs.reserve(path.times.size() - 1);
    X.weights.reserve(path.times.size() - 1);
    for (std::size_t k = 0; k + 1 < path.times.size(); ++k) {
        TruncatedTensor d(path.dim, n);
        auto& g1 = d.grade(1);
        for (int i = 0; i < path.dim; ++i)
            g1[static_cast<std::size_t>(i)] =
                path.points[k + 1][static_cast<std::size_t>(i)] - path.points[k][static_cast<std::size_t>(i)];
        X.segs.push_back(tensor_exp(d));
        X.weights.push_back(finite_variation_weight(X.segs.back(), X.p));
    }
    calibrate_control(X);
    return X;
}

// build a rough path directly from per-segment increments (synthetic drivers)
inline ClassicalRoughPath rough_path_from_increments(int dim, int level, double p,
                                                     std::vector<double> times,
                                                     std::vector<TruncatedTensor> segs, Vec start) {
    ClassicalRoughPath X;
    X.dim = dim;
    X.level = level;
    X.p = p;
    X.times = std::move(times);
    X.segs = std::move(segs);
    X.start = std::move(start);
    for (const auto& s : X.segs) X.weights.push_back(finite_variation_weight(s, p));
    calibrate_control(X);
    X.validate();
    return X;
}

// ---------------------------------------------------------------------------
// restriction and classical concatenation
// ---------------------------------------------------------------------------
inline ClassicalRoughPath restrict_path(const ClassicalRoughPath& X, double s, double t) {
    if (s < X.t_begin() - 1e-12 || t > X.t_end() + 1e-12 || s >= t)
        throw domain_error("restrict: interval outside path span");
    ClassicalRoughPath R;
    R.dim = X.dim;
    R.p = X.p;
    R.level = X.level;
    R.start = X.position(s);
    // insert s, t into the grid by segment splitting
    std::vector<double> ts;
    ts.push_back(s);
    for (double u : X.times)
        if (u > s + 1e-15 && u < t - 1e-15) ts.push_back(u);
    ts.push_back(t);
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        R.segs.push_back(X.increment(ts[k], ts[k + 1]));
        R.weights.push_back(finite_variation_weight(R.segs.back(), R.p));
    }
    R.times = std::move(ts);
    R.control_scale = X.control_scale;
    return R;
}

// three-case concatenation: increments of Z on [s,u], of Y on [u,t], products across
inline ClassicalRoughPath concat_classical(const ClassicalRoughPath& Z, const ClassicalRoughPath& Y) {
    if (Z.dim != Y.dim || Z.level != Y.level) throw shape_error("concat: dim/level mismatch");
    if (std::abs(Z.t_end() - Y.t_begin()) > 1e-12)
        throw domain_error("concat: interval misalignment");
    ClassicalRoughPath R;
    R.dim = Z.dim;
    R.p = std::max(Z.p, Y.p);
    R.level = Z.level;
    R.start = Z.start;
    R.times = Z.times;
    R.times.insert(R.times.end(), Y.times.begin() + 1, Y.times.end());
    R.segs = Z.segs;
    R.segs.insert(R.segs.end(), Y.segs.begin(), Y.segs.end());
    R.weights = Z.weights;
    R.weights.insert(R.weights.end(), Y.weights.begin(), Y.weights.end());
    R.control_scale = std::max(Z.control_scale, Y.control_scale);
    return R;
}

// ---------------------------------------------------------------------------
// d_p metric: exact dynamic-programming supremum over sub-partitions of the
// merged grid, per level i, then max_i (...)^{i/p}.
// ---------------------------------------------------------------------------
namespace detail {
inline std::vector<double> merged_grid(const ClassicalRoughPath& X, const ClassicalRoughPath& Y) {
    std::vector<double> g;
    g.reserve(X.times.size() + Y.times.size());
    std::merge(X.times.begin(), X.times.end(), Y.times.begin(), Y.times.end(), std::back_inserter(g));
    g.erase(std::unique(g.begin(), g.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }),
            g.end());
    return g;
}
}  // namespace detail

inline double d_p(const ClassicalRoughPath& X, const ClassicalRoughPath& Y) {
    if (X.dim != Y.dim || X.level != Y.level) throw shape_error("d_p: dim/level mismatch");
    const double p = std::max(X.p, Y.p);
    auto grid = detail::merged_grid(X, Y);
    const std::size_t m = grid.size();
    // pair increments of the difference, per level
    std::vector<TruncatedTensor> xi, yi, xinv, yinv;
    xi.reserve(m);
    yi.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        xi.push_back(X.increment(grid.front(), grid[i]));
        yi.push_back(Y.increment(grid.front(), grid[i]));
        xinv.push_back(tensor_inverse(xi.back()));
        yinv.push_back(tensor_inverse(yi.back()));
    }
    // dp per level, one pass over j; pair-increment differences built per j
    std::vector<std::vector<double>> dp(static_cast<std::size_t>(X.level) + 1,
                                        std::vector<double>(m, 0.0));
    for (std::size_t j = 1; j < m; ++j) {
        for (std::size_t l = 0; l < j; ++l) {
            const TruncatedTensor diff = tensor_mul(xinv[l], xi[j]) - tensor_mul(yinv[l], yi[j]);
            for (int lev = 1; lev <= X.level; ++lev) {
                const double e = p / static_cast<double>(lev);
                const double cand = dp[static_cast<std::size_t>(lev)][l] +
                                    std::pow(tensor_norm(diff, lev), e);
                auto& cur = dp[static_cast<std::size_t>(lev)][j];
                cur = std::max(cur, cand);
            }
        }
    }
    double best = 0.0;
    for (int lev = 1; lev <= X.level; ++lev) {
        const double e = p / static_cast<double>(lev);
        best = std::max(best, std::pow(dp[static_cast<std::size_t>(lev)][m - 1], 1.0 / e));
    }
    return best;
}

inline double p_variation(const ClassicalRoughPath& X, double p) {
    ClassicalRoughPath Z = X;
    Z.p = p;
    // constant path on the same grid
    ClassicalRoughPath C = X;
    C.p = p;
    for (auto& s : C.segs) s = TruncatedTensor::unit(X.dim, X.level);
    C.invalidate_cache();
    return d_p(Z, C);
}

// ---------------------------------------------------------------------------
// Extension of a degree-n multiplicative functional to degree m > n by the
// dyadic compensated construction: per segment, pad with zero higher grades
// and refine through midpoints until the product stabilizes.
// ---------------------------------------------------------------------------
namespace detail {
inline TruncatedTensor pad_level(const TruncatedTensor& a, int m) {
    TruncatedTensor r(a.dim(), m);
    for (int g = 0; g <= a.level(); ++g) r.grade(g) = a.grade(g);
    return r;
}
}  // namespace detail

inline ClassicalRoughPath extend(const ClassicalRoughPath& X, int m, double tol = 1e-12,
                                 int max_refine = 26) {
    if (m <= X.level) throw domain_error("extend: target degree must exceed current");
    ClassicalRoughPath R;
    R.dim = X.dim;
    R.p = X.p;
    R.level = m;
    R.times = X.times;
    R.start = X.start;
    for (const auto& seg : X.segs) {
        TruncatedTensor lg = detail::pad_level(tensor_log(seg), m);
        TruncatedTensor prev = detail::pad_level(seg, m);
        TruncatedTensor cur = prev;
        bool converged = false;
        for (int D = 1; D <= max_refine; ++D) {
            const std::size_t parts = static_cast<std::size_t>(1) << D;
            TruncatedTensor acc =
                detail::pad_level(tensor_exp(tensor_log(seg) * (1.0 / static_cast<double>(parts))), m);
            for (int s = 0; s < D; ++s) acc = tensor_mul(acc, acc);  // identical pieces: square up
            cur = acc;
            double diff = 0.0;
            for (int g = 1; g <= m; ++g) diff = std::max(diff, tensor_norm(cur - prev, g));
            if (diff <= tol * (1.0 + tensor_norm_max(cur))) {
                converged = true;
                break;
            }
            prev = cur;
        }
        if (!converged)
            throw numeric_error("extend: dyadic compensated construction did not stabilize");
        R.segs.push_back(cur);
        R.weights.push_back(finite_variation_weight(cur, R.p));
    }
    calibrate_control(R);
    return R;
}

// ---------------------------------------------------------------------------
// CSV path format: header "t,x1,...,xd", one row per sample.
// ---------------------------------------------------------------------------
inline SampledPath load_path_csv(std::istream& in) {
    SampledPath path;
    std::string line;
    if (!std::getline(in, line)) throw domain_error("path csv: empty file");
    std::size_t lineno = 1;
    {
        std::stringstream ss(line);
        std::string tok;
        int cols = 0;
        while (std::getline(ss, tok, ',')) ++cols;
        if (cols < 2) throw domain_error("path csv: header must be t,x1,...,xd");
        path.dim = cols - 1;
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<double> row;
        while (std::getline(ss, tok, ',')) {
            try {
                row.push_back(std::stod(tok));
            } catch (...) {
                throw domain_error("path csv: bad number at line " + std::to_string(lineno));
            }
        }
        if (static_cast<int>(row.size()) != path.dim + 1)
            throw domain_error("path csv: wrong column count at line " + std::to_string(lineno));
        path.times.push_back(row[0]);
        path.points.emplace_back(row.begin() + 1, row.end());
    }
    path.validate();
    return path;
}

inline SampledPath load_path_csv_file(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw domain_error("path csv: cannot open " + file);
    return load_path_csv(in);
}

inline void emit_trace_csv(std::ostream& out, const ClassicalRoughPath& X) {
    out.precision(17);
    out << "t";
    for (int i = 1; i <= X.dim; ++i) out << ",x" << i;
    out << "\n";
    for (std::size_t k = 0; k < X.times.size(); ++k) {
        Vec x = X.position(X.times[k]);
        out << X.times[k];
        for (double v : x) out << "," << v;
        out << "\n";
    }
}

inline nlohmann::json rough_path_to_json(const ClassicalRoughPath& X) {
    nlohmann::json j;
    j["dim"] = X.dim;
    j["p"] = X.p;
    j["level"] = X.level;
    j["grid"] = X.times;
    j["start"] = X.start;
    j["control_scale"] = X.control_scale;
    j["weights"] = X.weights;
    auto incs = nlohmann::json::array();
    for (const auto& s : X.segs) incs.push_back(tensor_to_json(s));
    j["increments"] = incs;
    return j;
}

inline ClassicalRoughPath rough_path_from_json(const nlohmann::json& j) {
    ClassicalRoughPath X;
    X.dim = j.at("dim").get<int>();
    X.p = j.at("p").get<double>();
    X.level = j.at("level").get<int>();
    X.times = j.at("grid").get<std::vector<double>>();
    X.start = j.at("start").get<Vec>();
    X.control_scale = j.at("control_scale").get<double>();
    X.weights = j.at("weights").get<std::vector<double>>();
    for (const auto& t : j.at("increments")) X.segs.push_back(tensor_from_json(t));
    X.validate();
    return X;
}

}  // namespace rp

#endif
