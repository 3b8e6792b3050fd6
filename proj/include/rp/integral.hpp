#ifndef RP_INTEGRAL_HPP
#define RP_INTEGRAL_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "jet.hpp"
#include "path.hpp"

// Almost rough paths, the sewing/association step, and rough integration of
// Lip-(gamma-1) one-forms against rough paths of degree floor(p) in {1, 2}.

namespace rp {

// ---------------------------------------------------------------------------
// OneFormJet: x in R^d -> linear map R^d -> R^e, with derivative components.
// The underlying JetFn has dim_out = e*d, layout [e][col], and the LipJet
// carries the Lip-(gamma-1) accounting (jet.gamma stores gamma-1).
// ---------------------------------------------------------------------------
struct OneFormJet {
    LipJet jet;
    int dim_in = 0;   // d
    int dim_out = 0;  // e
    std::optional<Box> support;  // nullopt = global

    static OneFormJet from_map(int d, int e, MapFn f, double gamma_minus_1,
                               std::vector<Vec> domain = {}) {
        OneFormJet a;
        a.dim_in = d;
        a.dim_out = e;
        a.jet.fn = {d, e * d, std::move(f)};
        a.jet.gamma = gamma_minus_1;
        a.jet.one_form_cols = d;
        a.jet.domain = std::move(domain);
        return a;
    }

    // identity one-form dId on R^d
    static OneFormJet identity(int d, double gamma_minus_1 = 2.0) {
        Vec I(static_cast<std::size_t>(d) * d, 0.0);
        for (int i = 0; i < d; ++i) I[static_cast<std::size_t>(i) * d + i] = 1.0;
        return constant(d, d, I, gamma_minus_1);
    }

    // constant linear map A (e x d, row-major)
    static OneFormJet constant(int d, int e, Vec A, double gamma_minus_1 = 2.0) {
        return from_map(d, e,
                        [A](const std::vector<Jet2>& x) {
                            std::vector<Jet2> r;
                            r.reserve(A.size());
                            for (double v : A) r.push_back(Jet2::constant(v, x[0].n, x[0].ord));
                            return r;
                        },
                        gamma_minus_1);
    }
};

// ---------------------------------------------------------------------------
// almost rough path: increment evaluator with control and exponent theta
// ---------------------------------------------------------------------------
struct AlmostRoughPath {
    int dim = 0;    // output dimension
    int level = 1;  // floor(p)
    double p = 1.0;
    std::vector<double> times;  // base grid
    std::function<TruncatedTensor(double, double)> Q;
    std::function<double(double, double)> omega;
    double theta = 1.5;
};

// one-step almost increment of the rough integral of alpha against X over [s,t]:
//   level 1: grade-1 = alpha(x_s) X^1
//   level 2: grade-1 = alpha(x_s) X^1 + alpha'(x_s) . X^2
//            grade-2 = (alpha(x_s) (x) alpha(x_s)) . X^2
inline TruncatedTensor almost_increment(const OneFormJet& alpha, const ClassicalRoughPath& X,
                                        double s, double t) {
    if (X.level > 2) throw capacity_error("almost_increment: floor(p) <= 2 supported");
    if (alpha.dim_in != X.dim) throw shape_error("almost_increment: one-form/driver dim mismatch");
    const int d = X.dim, e = alpha.dim_out;
    const Vec xs = X.position(s);
    const TruncatedTensor inc = X.increment(s, t);
    TruncatedTensor out(e, X.level);
    out.set_scalar(1.0);
    const int ord = X.level >= 2 ? 1 : 0;
    auto jets = alpha.jet.fn.eval_jets(xs, ord);
    auto& g1 = out.grade(1);
    const auto& x1 = inc.grade(1);
    for (int eo = 0; eo < e; ++eo) {
        double sum = 0.0;
        for (int j = 0; j < d; ++j)
            sum += jets[static_cast<std::size_t>(eo) * d + j].v * x1[static_cast<std::size_t>(j)];
        g1[static_cast<std::size_t>(eo)] = sum;
    }
    if (X.level >= 2) {
        const auto& x2 = inc.grade(2);
        // derivative correction: sum_{i,j} d_i alpha[e][j] X2[i][j]
        for (int eo = 0; eo < e; ++eo) {
            double sum = 0.0;
            for (int j = 0; j < d; ++j) {
                const auto& grad = jets[static_cast<std::size_t>(eo) * d + j].g;
                for (int i = 0; i < d; ++i)
                    sum += grad[static_cast<std::size_t>(i)] * x2[static_cast<std::size_t>(i) * d + j];
            }
            g1[static_cast<std::size_t>(eo)] += sum;
        }
        auto& g2 = out.grade(2);
        for (int e1 = 0; e1 < e; ++e1)
            for (int e2 = 0; e2 < e; ++e2) {
                double sum = 0.0;
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j)
                        sum += jets[static_cast<std::size_t>(e1) * d + i].v *
                               jets[static_cast<std::size_t>(e2) * d + j].v *
                               x2[static_cast<std::size_t>(i) * d + j];
                g2[static_cast<std::size_t>(e1) * e + e2] = sum;
            }
    }
    return out;
}

struct SewOptions {
    double tol = 1e-10;
    int max_refine = 20;
    int min_refine = 0;  // force at least this many dyadic levels
};

struct SewReport {
    double worst_defect = 0.0;
    double measured_theta = 0.0;
};

namespace detail {

struct SewWorker {
    const AlmostRoughPath& Q;
    const SewOptions& opt;
    SewReport* report;

    TruncatedTensor run(double s, double t, int depth) const {
        const double w = Q.omega(s, t);
        TruncatedTensor whole = Q.Q(s, t);
        return run_budget(s, t, depth, opt.tol * std::max(std::pow(w, Q.theta), 1e-16), whole);
    }

    // budget halves with each dyadic split so the leaf errors stay summable
    TruncatedTensor run_budget(double s, double t, int depth, double budget,
                               const TruncatedTensor& whole) const {
        const double m = 0.5 * (s + t);
        TruncatedTensor left = Q.Q(s, m);
        TruncatedTensor right = Q.Q(m, t);
        TruncatedTensor split = tensor_mul(left, right);
        const double defect = tensor_norm_max(split - whole);
        if (depth >= opt.min_refine && defect <= budget) return split;
        if (depth >= opt.max_refine) {
            // measure the contraction exponent actually achieved before failing
            double th = measure_theta(s, t);
            throw numeric_error("sew: refinement not contracting (measured theta " +
                                std::to_string(th) + ")");
        }
        if (report) report->worst_defect = std::max(report->worst_defect, defect);
        return tensor_mul(run_budget(s, m, depth + 1, 0.5 * budget, left),
                          run_budget(m, t, depth + 1, 0.5 * budget, right));
    }

    double measure_theta(double s, double t) const {
        // slope of log defect vs log omega across dyadic scales
        std::vector<double> lw, ld;
        double a = s, b = t;
        for (int k = 0; k < 6; ++k) {
            const double m = 0.5 * (a + b);
            const double defect = tensor_norm_max(tensor_mul(Q.Q(a, m), Q.Q(m, b)) - Q.Q(a, b));
            const double w = Q.omega(a, b);
            if (defect > 0.0 && w > 0.0) {
                lw.push_back(std::log(w));
                ld.push_back(std::log(defect));
            }
            b = m;
        }
        if (lw.size() < 2) return 0.0;
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < lw.size(); ++i) {
            sx += lw[i];
            sy += ld[i];
            sxx += lw[i] * lw[i];
            sxy += lw[i] * ld[i];
        }
        const double n = static_cast<double>(lw.size());
        return (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
};

}  // namespace detail

// associate the unique nearby rough path by dyadic refinement of Q between
// base grid points
inline ClassicalRoughPath sew(const AlmostRoughPath& Q, const SewOptions& opt = {},
                              SewReport* report = nullptr) {
    ClassicalRoughPath X;
    X.dim = Q.dim;
    X.level = Q.level;
    X.p = Q.p;
    X.times = Q.times;
    X.start.assign(static_cast<std::size_t>(Q.dim), 0.0);
    detail::SewWorker worker{Q, opt, report};
    for (std::size_t k = 0; k + 1 < Q.times.size(); ++k) {
        X.segs.push_back(worker.run(Q.times[k], Q.times[k + 1], 0));
        X.weights.push_back(finite_variation_weight(X.segs.back(), X.p));
    }
    calibrate_control(X);
    if (report) {
        detail::SewWorker w2{Q, opt, nullptr};
        report->measured_theta = w2.measure_theta(Q.times.front(), Q.times.back());
    }
    return X;
}

// measured empirical exponent for the acceptance band
inline double sew_exponent(double gamma, double p) {
    return std::min(gamma / p, (std::floor(p) + 1.0) / p);
}

inline AlmostRoughPath make_almost_path(const OneFormJet& alpha, const ClassicalRoughPath& X) {
    AlmostRoughPath Q;
    Q.dim = alpha.dim_out;
    Q.level = X.level;
    Q.p = X.p;
    Q.times = X.times;
    auto Xc = std::make_shared<ClassicalRoughPath>(X);
    Q.Q = [alpha, Xc](double s, double t) { return almost_increment(alpha, *Xc, s, t); };
    Q.omega = [Xc](double s, double t) { return Xc->control(s, t); };
    Q.theta = sew_exponent(alpha.jet.gamma + 1.0, X.p);
    return Q;
}

struct RoughIntegralReport {
    SewReport sew;
    double control_ratio = 0.0;  // measured C with output control <= C * omega_X
};

// rough integral of a Lip-(gamma-1) one-form against X; start is 0 in R^e
inline ClassicalRoughPath rough_integrate(const OneFormJet& alpha, const ClassicalRoughPath& X,
                                          const SewOptions& opt = {},
                                          RoughIntegralReport* report = nullptr) {
    AlmostRoughPath Q = make_almost_path(alpha, X);
    ClassicalRoughPath Y = sew(Q, opt, report ? &report->sew : nullptr);
    if (report) {
        double ratio = 0.0;
        for (std::size_t k = 0; k + 1 < Y.times.size(); ++k) {
            const double wx = X.control(Y.times[k], Y.times[k + 1]);
            const double wy = Y.control(Y.times[k], Y.times[k + 1]);
            if (wx > 0.0) ratio = std::max(ratio, wy / wx);
        }
        report->control_ratio = ratio;
    }
    return Y;
}

// level-1 trace of an integral path: cumulative grade-1 values on the grid
inline std::vector<Vec> integral_trace(const ClassicalRoughPath& Y) {
    std::vector<Vec> out;
    Vec acc = Y.start;
    out.push_back(acc);
    for (const auto& s : Y.segs) {
        const auto& g1 = s.grade(1);
        for (int i = 0; i < Y.dim; ++i) acc[static_cast<std::size_t>(i)] += g1[static_cast<std::size_t>(i)];
        out.push_back(acc);
    }
    return out;
}

}  // namespace rp

#endif
