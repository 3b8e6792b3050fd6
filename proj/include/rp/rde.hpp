#ifndef RP_RDE_HPP
#define RP_RDE_HPP

#include <cmath>
#include <vector>

#include "integral.hpp"

// Classical RDE solving on vector spaces via the fixed point Z = int h(Z) dZ,
// driven by Picard iteration with interval splitting as fallback.

namespace rp {

namespace detail {

// embed a tensor on R^{d1} into R^{D} at coordinate offset 0
inline TruncatedTensor embed_tensor(const TruncatedTensor& a, int D) {
    TruncatedTensor r(D, a.level());
    const int d = a.dim();
    for (int g = 0; g <= a.level(); ++g) {
        const auto& src = a.grade(g);
        auto& dst = r.grade(g);
        // map index tuple (i1..ig) in base d to base D
        const std::size_t n = src.size();
        for (std::size_t idx = 0; idx < n; ++idx) {
            std::size_t rem = idx, out = 0;
            std::size_t mulD = 1;
            std::size_t digits[kMaxLevel];
            for (int k = 0; k < g; ++k) {
                digits[k] = rem % static_cast<std::size_t>(d);
                rem /= static_cast<std::size_t>(d);
            }
            for (int k = 0; k < g; ++k) {
                out += digits[static_cast<std::size_t>(k)] * mulD;
                mulD *= static_cast<std::size_t>(D);
            }
            dst[out] = src[idx];
        }
    }
    return r;
}

// overwrite the pure-V components (all tuple indices < d1) of dst with src's
inline void overwrite_v_block(TruncatedTensor& dst, const TruncatedTensor& src, int d1) {
    const int D = dst.dim();
    for (int g = 1; g <= dst.level(); ++g) {
        auto& gd = dst.grade(g);
        const auto& gs = src.grade(g);
        const std::size_t n = gd.size();
        for (std::size_t idx = 0; idx < n; ++idx) {
            std::size_t rem = idx;
            bool pure_v = true;
            std::size_t src_idx = 0, mul = 1;
            std::size_t digits[kMaxLevel];
            for (int k = 0; k < g; ++k) {
                digits[k] = rem % static_cast<std::size_t>(D);
                rem /= static_cast<std::size_t>(D);
                if (digits[k] >= static_cast<std::size_t>(d1)) pure_v = false;
            }
            if (!pure_v) continue;
            for (int k = 0; k < g; ++k) {
                src_idx += digits[static_cast<std::size_t>(k)] * mul;
                mul *= static_cast<std::size_t>(d1);
            }
            gd[idx] = gs[src_idx];
        }
    }
}

}  // namespace detail

// initial Picard iterate: (X, constant y0) on R^{d1+d2}
inline ClassicalRoughPath embed_driver(const ClassicalRoughPath& X, const Vec& y0) {
    const int D = X.dim + static_cast<int>(y0.size());
    ClassicalRoughPath Z;
    Z.dim = D;
    Z.p = X.p;
    Z.level = X.level;
    Z.times = X.times;
    Z.start = X.start;
    Z.start.insert(Z.start.end(), y0.begin(), y0.end());
    for (const auto& s : X.segs) {
        Z.segs.push_back(detail::embed_tensor(s, D));
        Z.weights.push_back(finite_variation_weight(Z.segs.back(), Z.p));
    }
    Z.control_scale = X.control_scale;
    return Z;
}

// coarsened copy for cheap d_p evaluation on long grids
inline ClassicalRoughPath coarsen(const ClassicalRoughPath& X, std::size_t max_points) {
    if (X.times.size() <= max_points) return X;
    const std::size_t m = X.segments();
    const std::size_t stride = (m + max_points - 2) / (max_points - 1);
    ClassicalRoughPath R;
    R.dim = X.dim;
    R.p = X.p;
    R.level = X.level;
    R.start = X.start;
    R.control_scale = X.control_scale;
    R.times.push_back(X.times.front());
    for (std::size_t i = 0; i < m; i += stride) {
        const std::size_t j = std::min(i + stride, m);
        R.segs.push_back(X.increment_idx(i, j));
        double w = 0.0;
        for (std::size_t k = i; k < j; ++k) w += X.weights[k];
        R.weights.push_back(w);
        R.times.push_back(X.times[j]);
    }
    return R;
}

inline double d_p_coarse(const ClassicalRoughPath& A, const ClassicalRoughPath& B,
                         std::size_t max_points = 160) {
    return d_p(coarsen(A, max_points), coarsen(B, max_points));
}

struct RdeOptions {
    double tol = 1e-9;
    int max_sweeps = 50;
    int max_splits = 10;
    SewOptions sew{1e-8, 20, 0};  // per-segment budgets add up well below tol targets
    bool existence_only = false;  // g merely Lip-(gamma-1); no uniqueness checks
};

struct RdeReport {
    double residual = 0.0;  // d_p(Z, int h(Z) dZ) on the working grid
    int sweeps = 0;
    int splits = 0;
};

// coefficient field u: R^{dim_in} -> L(R^{d1}, R^{d2}); the map emits the
// d2*d1 matrix entries row-major ([row][col]). gamma is the full Lip exponent.
struct FieldJet {
    int dim_in = 0;
    int d1 = 0;
    int d2 = 0;
    MapFn f;
    double gamma = 3.0;
    std::vector<Vec> domain;

    static FieldJet state_field(int d1, int d2, MapFn f, double gamma = 3.0) {
        return FieldJet{d2, d1, d2, std::move(f), gamma, {}};
    }
    static FieldJet signal_field(int d1, int d2, MapFn f, double gamma = 3.0) {
        return FieldJet{d1 + d2, d1, d2, std::move(f), gamma, {}};
    }
};

// lift a state field g(y) to the product space: (x, y) -> g(y)
inline FieldJet lift_state_field(const FieldJet& g) {
    if (g.dim_in != g.d2) throw shape_error("lift_state_field: g must be a field on W");
    auto gf = g.f;
    const int d1 = g.d1;
    FieldJet r = g;
    r.dim_in = g.d1 + g.d2;
    r.f = [gf, d1](const std::vector<Jet2>& z) {
        std::vector<Jet2> y(z.begin() + d1, z.end());
        return gf(y);
    };
    return r;
}

// one-form h on V + W from a signal-dependent field f: (x, y) -> L(V, W):
// h(x,y)(v,w) = (v, f(x,y) v)
inline OneFormJet make_h_form(const FieldJet& f) {
    const int d1 = f.d1, d2 = f.d2;
    const int D = d1 + d2;
    if (f.dim_in != D) throw shape_error("make_h_form: f must live on V + W");
    auto ff = f.f;
    MapFn h = [ff, d1, d2, D](const std::vector<Jet2>& z) {
        auto fm = ff(z);  // d2 x d1 matrix jets
        std::vector<Jet2> out(static_cast<std::size_t>(D) * D,
                              Jet2::constant(0.0, z[0].n, z[0].ord));
        for (int i = 0; i < d1; ++i)
            out[static_cast<std::size_t>(i) * D + i] = Jet2::constant(1.0, z[0].n, z[0].ord);
        for (int r = 0; r < d2; ++r)
            for (int c = 0; c < d1; ++c)
                out[static_cast<std::size_t>(d1 + r) * D + c] =
                    fm[static_cast<std::size_t>(r) * d1 + c];
        return out;
    };
    OneFormJet hf = OneFormJet::from_map(D, D, std::move(h), f.gamma - 1.0);
    hf.jet.domain = f.domain;
    return hf;
}

namespace detail {

inline ClassicalRoughPath picard_solve(const ClassicalRoughPath& X, const FieldJet& f,
                                       const Vec& y0, const RdeOptions& opt, RdeReport* report,
                                       int split_depth) {
    const int d1 = X.dim;
    const int d2 = static_cast<int>(y0.size());
    if (f.d1 != d1 || f.d2 != d2) throw shape_error("solve_rde: field dimensions mismatch");
    OneFormJet h = make_h_form(f);
    ClassicalRoughPath Z = embed_driver(X, y0);
    double resid = 1e300;
    double best_resid = 1e300;
    for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
        // loose sewing while the Picard residual is large; one switch to the
        // final tolerance, since every tolerance change perturbs the operator
        SewOptions sw = opt.sew;
        sw.tol = (best_resid > 1e-2) ? std::max(opt.sew.tol, 1e-5) : opt.sew.tol;
        ClassicalRoughPath Y = rough_integrate(h, Z, sw);
        // copy the V block rather than re-integrating it
        for (std::size_t k = 0; k < Y.segs.size(); ++k)
            overwrite_v_block(Y.segs[k], X.segs[k], d1);
        Y.invalidate_cache();
        Y.start = Z.start;
        for (std::size_t k = 0; k < Y.segs.size(); ++k)
            Y.weights[k] = finite_variation_weight(Y.segs[k], Y.p);
        calibrate_control(Y);
        resid = d_p_coarse(Y, Z);
        best_resid = std::min(best_resid, resid);
        Z = std::move(Y);
        if (report) report->sweeps += 1;
#ifdef RP_DEBUG_SWEEPS
        std::fprintf(stderr, "sweep %d depth %d sw.tol %.1e resid %.3e\n", sweep, split_depth,
                     sw.tol, resid);
#endif
        if (resid <= opt.tol && sw.tol <= opt.sew.tol * (1.0 + 1e-12)) {
            if (report) report->residual = resid;
            return Z;
        }
    }
    // non-contraction: split the interval and solve the halves
    if (split_depth >= opt.max_splits)
        throw numeric_error("solve_rde: Picard iteration failed to contract (residual " +
                            std::to_string(resid) + ")");
    if (report) report->splits += 1;
    const double mid = 0.5 * (X.t_begin() + X.t_end());
    // align mid with the grid
    double tm = X.times[X.times.size() / 2];
    if (X.times.size() <= 2) tm = mid;
    ClassicalRoughPath XA = restrict_path(X, X.t_begin(), tm);
    ClassicalRoughPath XB = restrict_path(X, tm, X.t_end());
    ClassicalRoughPath ZA = picard_solve(XA, f, y0, opt, report, split_depth + 1);
    Vec y_mid(y0.size());
    {
        auto inc = ZA.increment(ZA.t_begin(), ZA.t_end());
        const auto& g1 = inc.grade(1);
        for (int i = 0; i < d2; ++i)
            y_mid[static_cast<std::size_t>(i)] =
                y0[static_cast<std::size_t>(i)] + g1[static_cast<std::size_t>(d1 + i)];
    }
    ClassicalRoughPath ZB = picard_solve(XB, f, y_mid, opt, report, split_depth + 1);
    return concat_classical(ZA, ZB);
}

}  // namespace detail

// solve dY = f(X, Y) dX for a signal-dependent field f: V+W -> L(V, W)
inline ClassicalRoughPath solve_rde_signal_dep(const ClassicalRoughPath& X, const FieldJet& f,
                                               const Vec& y0, const RdeOptions& opt = {},
                                               RdeReport* report = nullptr) {
    return detail::picard_solve(X, f, y0, opt, report, 0);
}

// solve dY = g(Y) dX for a state-dependent field g: W -> L(V, W)
inline ClassicalRoughPath solve_rde(const ClassicalRoughPath& X, const FieldJet& g,
                                    const Vec& y0, const RdeOptions& opt = {},
                                    RdeReport* report = nullptr) {
    return solve_rde_signal_dep(X, lift_state_field(g), y0, opt, report);
}

// fixed-point residual d_p(Z, int h(Z) dZ) of a candidate solution
inline double rde_fixed_point_residual(const ClassicalRoughPath& Z, const FieldJet& f,
                                       const SewOptions& sew_opt = {}) {
    OneFormJet h = make_h_form(f);
    ClassicalRoughPath Y = rough_integrate(h, Z, sew_opt);
    return d_p_coarse(Y, Z);
}

// response trace: y values on the grid
inline std::vector<Vec> response_trace(const ClassicalRoughPath& Z, int d1) {
    const int d2 = Z.dim - d1;
    std::vector<Vec> out;
    for (std::size_t k = 0; k < Z.times.size(); ++k) {
        Vec z = Z.position(Z.times[k]);
        out.emplace_back(z.begin() + d1, z.begin() + d1 + d2);
    }
    return out;
}

}  // namespace rp

#endif
