#ifndef RP_JET_HPP
#define RP_JET_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tensor.hpp"

// Stein Lip-gamma machinery. Functions carry their derivative collections
// (f^0, f^1, f^2) through an order-2 forward-mode jet scalar, so composition,
// products and cutoff blending inherit correct derivatives automatically.
// Supported envelope: gamma <= 3 (k <= 2).

namespace rp {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Order-2 forward jet scalar: value, gradient, hessian w.r.t. n seed variables.
// ord selects how much is propagated (0, 1 or 2).
// ---------------------------------------------------------------------------
struct Jet2 {
    double v = 0.0;
    int n = 0;
    int ord = 0;
    Vec g;  // size n when ord >= 1
    Vec h;  // size n*n row-major symmetric when ord == 2

    Jet2() = default;
    Jet2(double value, int nvars, int order) : v(value), n(nvars), ord(order) {
        if (ord >= 1) g.assign(static_cast<std::size_t>(n), 0.0);
        if (ord >= 2) h.assign(static_cast<std::size_t>(n) * n, 0.0);
    }
    static Jet2 variable(double value, int nvars, int order, int idx) {
        Jet2 j(value, nvars, order);
        if (order >= 1) j.g[static_cast<std::size_t>(idx)] = 1.0;
        return j;
    }
    static Jet2 constant(double value, int nvars, int order) { return Jet2(value, nvars, order); }
};

namespace detail {
// r = f(a) with f' = d1, f'' = d2 (univariate chain rule)
inline Jet2 chain1(const Jet2& a, double v, double d1, double d2) {
    Jet2 r(v, a.n, a.ord);
    if (a.ord >= 1)
        for (int i = 0; i < a.n; ++i) r.g[i] = d1 * a.g[i];
    if (a.ord >= 2)
        for (int i = 0; i < a.n; ++i)
            for (int j = 0; j < a.n; ++j)
                r.h[static_cast<std::size_t>(i) * a.n + j] =
                    d1 * a.h[static_cast<std::size_t>(i) * a.n + j] + d2 * a.g[i] * a.g[j];
    return r;
}
}  // namespace detail

inline Jet2 operator+(const Jet2& a, const Jet2& b) {
    Jet2 r(a.v + b.v, a.n, std::min(a.ord, b.ord));
    if (r.ord >= 1)
        for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] + b.g[i];
    if (r.ord >= 2)
        for (std::size_t i = 0; i < r.h.size(); ++i) r.h[i] = a.h[i] + b.h[i];
    return r;
}
inline Jet2 operator-(const Jet2& a, const Jet2& b) {
    Jet2 r(a.v - b.v, a.n, std::min(a.ord, b.ord));
    if (r.ord >= 1)
        for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] - b.g[i];
    if (r.ord >= 2)
        for (std::size_t i = 0; i < r.h.size(); ++i) r.h[i] = a.h[i] - b.h[i];
    return r;
}
inline Jet2 operator-(const Jet2& a) {
    Jet2 r(-a.v, a.n, a.ord);
    if (r.ord >= 1)
        for (int i = 0; i < r.n; ++i) r.g[i] = -a.g[i];
    if (r.ord >= 2)
        for (std::size_t i = 0; i < r.h.size(); ++i) r.h[i] = -a.h[i];
    return r;
}
inline Jet2 operator*(const Jet2& a, const Jet2& b) {
    Jet2 r(a.v * b.v, a.n, std::min(a.ord, b.ord));
    if (r.ord >= 1)
        for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
    if (r.ord >= 2)
        for (int i = 0; i < r.n; ++i)
            for (int j = 0; j < r.n; ++j)
                r.h[static_cast<std::size_t>(i) * r.n + j] =
                    a.h[static_cast<std::size_t>(i) * r.n + j] * b.v +
                    a.v * b.h[static_cast<std::size_t>(i) * r.n + j] + a.g[i] * b.g[j] +
                    a.g[j] * b.g[i];
    return r;
}
inline Jet2 operator+(const Jet2& a, double c) {
    Jet2 r = a;
    r.v += c;
    return r;
}
inline Jet2 operator+(double c, const Jet2& a) { return a + c; }
inline Jet2 operator-(const Jet2& a, double c) { return a + (-c); }
inline Jet2 operator-(double c, const Jet2& a) { return (-a) + c; }
inline Jet2 operator*(const Jet2& a, double c) { return detail::chain1(a, a.v * c, c, 0.0); }
inline Jet2 operator*(double c, const Jet2& a) { return a * c; }
inline Jet2 inv(const Jet2& a) {
    const double iv = 1.0 / a.v;
    return detail::chain1(a, iv, -iv * iv, 2.0 * iv * iv * iv);
}
inline Jet2 operator/(const Jet2& a, const Jet2& b) { return a * inv(b); }
inline Jet2 operator/(const Jet2& a, double c) { return a * (1.0 / c); }
inline Jet2 operator/(double c, const Jet2& a) { return c * inv(a); }
inline Jet2 sin(const Jet2& a) { return detail::chain1(a, std::sin(a.v), std::cos(a.v), -std::sin(a.v)); }
inline Jet2 cos(const Jet2& a) { return detail::chain1(a, std::cos(a.v), -std::sin(a.v), -std::cos(a.v)); }
inline Jet2 exp(const Jet2& a) {
    const double e = std::exp(a.v);
    return detail::chain1(a, e, e, e);
}
inline Jet2 sqrt(const Jet2& a) {
    const double s = std::sqrt(a.v);
    return detail::chain1(a, s, 0.5 / s, -0.25 / (s * a.v));
}
inline Jet2 pow(const Jet2& a, int k) {
    if (k == 0) return Jet2::constant(1.0, a.n, a.ord);
    const double p1 = std::pow(a.v, k - 1);
    return detail::chain1(a, p1 * a.v, k * p1, k * (k - 1) * std::pow(a.v, k - 2));
}
inline Jet2 pow(const Jet2& a, double e) {
    return detail::chain1(a, std::pow(a.v, e), e * std::pow(a.v, e - 1.0),
                          e * (e - 1.0) * std::pow(a.v, e - 2.0));
}
// atan2(y, x); smooth away from the origin
inline Jet2 atan2(const Jet2& y, const Jet2& x) {
    const double r2 = x.v * x.v + y.v * y.v;
    // d/dy = x/r2, d/dx = -y/r2; second derivatives from the quotient forms
    Jet2 r(std::atan2(y.v, x.v), x.n, std::min(x.ord, y.ord));
    if (r.ord == 0) return r;
    // propagate via theta = atan2: dtheta = (x dy - y dx)/r2 computed in jet arithmetic
    // using one order less would lose the hessian, so express through
    // already-defined jet ops on a shifted argument instead:
    // theta(x,y) satisfies the same jets as atan(y/x) + const in each half plane,
    // handle x ~ 0 with atan(-x/y) branch.
    auto atan1 = [](const Jet2& t) {
        const double d1 = 1.0 / (1.0 + t.v * t.v);
        return detail::chain1(t, std::atan(t.v), d1, -2.0 * t.v * d1 * d1);
    };
    Jet2 raw = (std::abs(x.v) >= std::abs(y.v)) ? atan1(y / x) : -atan1(x / y);
    const double offset = r.v - raw.v;
    raw.v += offset;
    return raw;
}

inline std::vector<Jet2> seed_point(const Vec& x, int ord) {
    std::vector<Jet2> s;
    s.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        s.push_back(Jet2::variable(x[i], static_cast<int>(x.size()), ord, static_cast<int>(i)));
    return s;
}

// ---------------------------------------------------------------------------
// JetFn: a map R^a -> R^b evaluated in jet arithmetic.
// ---------------------------------------------------------------------------
using MapFn = std::function<std::vector<Jet2>(const std::vector<Jet2>&)>;

struct JetFn {
    int dim_in = 0;
    int dim_out = 0;
    MapFn f;

    std::vector<Jet2> eval_jets(const Vec& x, int ord) const { return f(seed_point(x, ord)); }

    Vec value(const Vec& x) const {
        auto r = f(seed_point(x, 0));
        Vec v(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) v[i] = r[i].v;
        return v;
    }
    // derivative array of order j: size dim_out * dim_in^j, layout [o][i1]..[ij]
    Vec deriv(const Vec& x, int j) const {
        if (j < 0 || j > 2) throw domain_error("JetFn::deriv: order must be 0..2");
        auto r = f(seed_point(x, j));
        const int a = dim_in;
        Vec out;
        if (j == 0) {
            out.resize(r.size());
            for (std::size_t o = 0; o < r.size(); ++o) out[o] = r[o].v;
        } else if (j == 1) {
            out.assign(r.size() * a, 0.0);
            for (std::size_t o = 0; o < r.size(); ++o)
                for (int i = 0; i < a; ++i) out[o * a + i] = r[o].g[i];
        } else {
            out.assign(r.size() * a * a, 0.0);
            for (std::size_t o = 0; o < r.size(); ++o)
                for (int i = 0; i < a * a; ++i) out[o * a * a + i] = r[o].h[i];
        }
        return out;
    }
};

inline JetFn jet_identity(int d) {
    return {d, d, [](const std::vector<Jet2>& x) { return x; }};
}
inline JetFn jet_constant(int dim_in, Vec c) {
    return {dim_in, static_cast<int>(c.size()), [c](const std::vector<Jet2>& x) {
                std::vector<Jet2> r;
                const int n = x.empty() ? 0 : x[0].n;
                const int ord = x.empty() ? 0 : x[0].ord;
                for (double v : c) r.push_back(Jet2::constant(v, n, ord));
                return r;
            }};
}
// f(x) = A x + b, A given row-major (m x a)
inline JetFn jet_affine(int a, int m, Vec A, Vec b) {
    return {a, m, [a, m, A, b](const std::vector<Jet2>& x) {
                std::vector<Jet2> r;
                r.reserve(static_cast<std::size_t>(m));
                for (int o = 0; o < m; ++o) {
                    Jet2 s = Jet2::constant(b.empty() ? 0.0 : b[o], x[0].n, x[0].ord);
                    for (int i = 0; i < a; ++i) s = s + A[static_cast<std::size_t>(o) * a + i] * x[i];
                    r.push_back(s);
                }
                return r;
            }};
}
inline JetFn jet_compose(const JetFn& g, const JetFn& f) {
    if (f.dim_out != g.dim_in) throw shape_error("jet_compose: dimension mismatch");
    auto ff = f.f;
    auto gf = g.f;
    return {f.dim_in, g.dim_out,
            [ff, gf](const std::vector<Jet2>& x) { return gf(ff(x)); }};
}
inline JetFn jet_concat(const JetFn& f, const JetFn& g) {
    if (f.dim_in != g.dim_in) throw shape_error("jet_concat: input dimension mismatch");
    auto ff = f.f;
    auto gf = g.f;
    return {f.dim_in, f.dim_out + g.dim_out, [ff, gf](const std::vector<Jet2>& x) {
                auto r = ff(x);
                auto s = gf(x);
                r.insert(r.end(), s.begin(), s.end());
                return r;
            }};
}
inline JetFn jet_sum(const JetFn& f, const JetFn& g) {
    if (f.dim_in != g.dim_in || f.dim_out != g.dim_out) throw shape_error("jet_sum: shape mismatch");
    auto ff = f.f;
    auto gf = g.f;
    return {f.dim_in, f.dim_out, [ff, gf](const std::vector<Jet2>& x) {
                auto r = ff(x);
                auto s = gf(x);
                for (std::size_t i = 0; i < r.size(); ++i) r[i] = r[i] + s[i];
                return r;
            }};
}
inline JetFn jet_scale(const JetFn& f, double c) {
    auto ff = f.f;
    return {f.dim_in, f.dim_out, [ff, c](const std::vector<Jet2>& x) {
                auto r = ff(x);
                for (auto& j : r) j = j * c;
                return r;
            }};
}
// scalar * vector pointwise product; s must have dim_out == 1
inline JetFn jet_scalar_mul(const JetFn& s, const JetFn& v) {
    if (s.dim_out != 1 || s.dim_in != v.dim_in) throw shape_error("jet_scalar_mul: shape mismatch");
    auto sf = s.f;
    auto vf = v.f;
    return {v.dim_in, v.dim_out, [sf, vf](const std::vector<Jet2>& x) {
                auto sv = sf(x)[0];
                auto r = vf(x);
                for (auto& j : r) j = sv * j;
                return r;
            }};
}
// select output components [lo, lo+cnt)
inline JetFn jet_slice(const JetFn& f, int lo, int cnt) {
    auto ff = f.f;
    return {f.dim_in, cnt, [ff, lo, cnt](const std::vector<Jet2>& x) {
                auto r = ff(x);
                return std::vector<Jet2>(r.begin() + lo, r.begin() + lo + cnt);
            }};
}
// precompose with a coordinate slice of a larger input: g(x) = f(x[lo..lo+f.dim_in))
inline JetFn jet_on_slice(const JetFn& f, int total_in, int lo) {
    auto ff = f.f;
    const int a = f.dim_in;
    return {total_in, f.dim_out, [ff, lo, a](const std::vector<Jet2>& x) {
                std::vector<Jet2> sub(x.begin() + lo, x.begin() + lo + a);
                return ff(sub);
            }};
}

// ---------------------------------------------------------------------------
// Smooth cutoffs. psi01 is the standard C-infinity step: 0 for u<=0, 1 for u>=1.
// ---------------------------------------------------------------------------
inline Jet2 psi01(const Jet2& u) {
    if (u.v <= 1e-12) return Jet2::constant(0.0, u.n, u.ord);
    if (u.v >= 1.0 - 1e-12) return Jet2::constant(1.0, u.n, u.ord);
    Jet2 e1 = exp(-1.0 * inv(u));
    Jet2 e2 = exp(-1.0 * inv(1.0 - u));
    return e1 / (e1 + e2);
}

// 1-d even cutoff: 1 on |t| <= a, 0 on |t| >= b, smooth in between.
inline Jet2 cutoff1d(const Jet2& t, double a, double b) {
    const double at = std::abs(t.v);
    if (at <= a) return Jet2::constant(1.0, t.n, t.ord);
    if (at >= b) return Jet2::constant(0.0, t.n, t.ord);
    Jet2 s = (t.v > 0.0) ? t : -t;  // sign is locally constant here
    return psi01((b - s) / (b - a));
}

// box cutoff around center c: product of per-axis cutoffs with inner/outer
// half-widths a, b (same on all axes)
inline JetFn jet_box_cutoff(Vec center, double a, double b) {
    const int d = static_cast<int>(center.size());
    return {d, 1, [center, a, b, d](const std::vector<Jet2>& x) {
                Jet2 r = Jet2::constant(1.0, x[0].n, x[0].ord);
                for (int i = 0; i < d; ++i) r = r * cutoff1d(x[i] - center[i], a, b);
                return std::vector<Jet2>{r};
            }};
}

// radial (euclidean) cutoff around center: 1 inside radius a, 0 outside b
inline JetFn jet_radial_cutoff(Vec center, double a, double b) {
    const int d = static_cast<int>(center.size());
    return {d, 1, [center, a, b, d](const std::vector<Jet2>& x) {
                double r2v = 0.0;
                for (int i = 0; i < d; ++i) r2v += (x[i].v - center[i]) * (x[i].v - center[i]);
                const double rv = std::sqrt(r2v);
                if (rv <= a) return std::vector<Jet2>{Jet2::constant(1.0, x[0].n, x[0].ord)};
                if (rv >= b) return std::vector<Jet2>{Jet2::constant(0.0, x[0].n, x[0].ord)};
                Jet2 r2 = Jet2::constant(0.0, x[0].n, x[0].ord);
                for (int i = 0; i < d; ++i) r2 = r2 + (x[i] - center[i]) * (x[i] - center[i]);
                return std::vector<Jet2>{psi01((b - sqrt(r2)) / (b - a))};
            }};
}

// ---------------------------------------------------------------------------
// LipJet: a jet together with gamma, sampled domain and norm accounting.
// one_form_cols > 0 marks linear-map-valued outputs (dim_out = e * cols);
// norms then treat the column index as an extra contraction slot.
// ---------------------------------------------------------------------------
struct LipJet {
    JetFn fn;
    double gamma = 2.0;
    std::vector<Vec> domain;
    int one_form_cols = 0;
    double declared_norm = 0.0;

    int k() const {
        int kk = static_cast<int>(std::ceil(gamma)) - 1;
        if (kk < 0) kk = 0;
        if (kk > 2) throw capacity_error("LipJet: gamma > 3 unsupported");
        return kk;
    }
};

struct LipReport {
    bool ok = true;
    double norm = 0.0;          // smallest L consistent with all sampled constraints
    double worst_ratio = 0.0;   // max violation ratio vs declared_norm (<= 1 means ok)
    std::string detail;
};

namespace detail {

// operator norm of the order-j derivative array under the l1 base norm:
// max over input index tuples (and one-form column) of the l1 norm over outputs.
inline double component_norm(const Vec& arr, int e_rows, int tuple_count) {
    double m = 0.0;
    for (int t = 0; t < tuple_count; ++t) {
        double s = 0.0;
        for (int o = 0; o < e_rows; ++o)
            s += std::abs(arr[static_cast<std::size_t>(o) * tuple_count + t]);
        m = std::max(m, s);
    }
    return m;
}

// contract the trailing l slots of an order-(j+l) derivative array with v
inline Vec contract_tail(const Vec& arr, int d, int l, const Vec& v) {
    Vec cur = arr;
    for (int step = 0; step < l; ++step) {
        const std::size_t blocks = cur.size() / static_cast<std::size_t>(d);
        Vec nxt(blocks, 0.0);
        for (std::size_t b = 0; b < blocks; ++b) {
            double s = 0.0;
            for (int i = 0; i < d; ++i) s += cur[b * d + i] * v[static_cast<std::size_t>(i)];
            nxt[b] = s;
        }
        cur = std::move(nxt);
    }
    return cur;
}

}  // namespace detail

// order-j component norm at x
inline double lip_component_norm(const LipJet& jet, const Vec& x, int j) {
    const int d = jet.fn.dim_in;
    Vec arr = jet.fn.deriv(x, j);
    int tuples = 1;
    for (int t = 0; t < j; ++t) tuples *= d;
    int rows = jet.fn.dim_out;
    if (jet.one_form_cols > 0) {
        // treat the column index as one more tuple slot: reorder not needed since
        // layout [e][col] x [i1..ij] has col adjacent to e; fold cols into rows' max:
        const int cols = jet.one_form_cols;
        rows = jet.fn.dim_out / cols;
        double m = 0.0;
        for (int c = 0; c < cols; ++c) {
            for (int t = 0; t < tuples; ++t) {
                double s = 0.0;
                for (int e = 0; e < rows; ++e)
                    s += std::abs(arr[(static_cast<std::size_t>(e) * cols + c) * tuples + t]);
                m = std::max(m, s);
            }
        }
        return m;
    }
    return detail::component_norm(arr, rows, tuples);
}

// Taylor remainder R_j(x, y): f^j(y) - sum_{l=0..k-j} f^{j+l}(x)((y-x)^{(x)l}) / l!
inline Vec lip_remainder(const LipJet& jet, const Vec& x, const Vec& y, int j) {
    const int d = jet.fn.dim_in;
    Vec dv(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) dv[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)];
    Vec r = jet.fn.deriv(y, j);
    double fact = 1.0;
    for (int l = 0; l + j <= jet.k(); ++l) {
        if (l > 0) fact *= l;
        Vec term = detail::contract_tail(jet.fn.deriv(x, j + l), d, l, dv);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= term[i] / fact;
    }
    return r;
}

// smallest L making sup-bounds and remainder bounds hold over the sampled domain
inline LipReport lip_norm_estimate(const LipJet& jet) {
    if (jet.domain.empty()) throw domain_error("lip_norm_estimate: empty sampled domain");
    LipReport rep;
    const int k = jet.k();
    const double gamma = jet.gamma;
    double L = 0.0;
    for (const auto& x : jet.domain)
        for (int j = 0; j <= k; ++j) L = std::max(L, lip_component_norm(jet, x, j));
    const std::size_t N = jet.domain.size();
    // pair loop; for large domains subsample pairs deterministically
    const std::size_t stride = std::max<std::size_t>(1, N * N / 40000);
    std::size_t counter = 0;
    for (std::size_t a = 0; a < N; ++a) {
        for (std::size_t b = a + 1; b < N; ++b) {
            if (counter++ % stride) continue;
            const Vec& x = jet.domain[a];
            const Vec& y = jet.domain[b];
            double dist = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) dist += std::abs(x[i] - y[i]);
            if (dist < 1e-9) continue;
            for (int j = 0; j <= k; ++j) {
                Vec rj = lip_remainder(jet, x, y, j);
                int tuples = 1;
                for (int t = 0; t < j; ++t) tuples *= jet.fn.dim_in;
                if (jet.one_form_cols > 0) tuples *= jet.one_form_cols;
                const double rn = detail::component_norm(rj, static_cast<int>(rj.size()) / tuples, tuples);
                const double denom = std::pow(dist, gamma - j);
                if (denom > 0.0) L = std::max(L, rn / denom);
            }
        }
    }
    rep.norm = L;
    rep.worst_ratio = jet.declared_norm > 0.0 ? L / jet.declared_norm : 0.0;
    rep.ok = jet.declared_norm <= 0.0 || L <= jet.declared_norm * (1.0 + 1e-8);
    return rep;
}

inline LipReport lip_validate(const LipJet& jet) {
    LipReport rep = lip_norm_estimate(jet);
    if (!rep.ok)
        rep.detail = "estimated norm " + std::to_string(rep.norm) + " exceeds declared " +
                     std::to_string(jet.declared_norm);
    return rep;
}

// composition g(f(.)); jets compose exactly in jet arithmetic
inline LipJet lip_compose(const LipJet& g, const LipJet& f) {
    LipJet r;
    r.fn = jet_compose(g.fn, f.fn);
    r.gamma = std::min(g.gamma, f.gamma);
    r.domain = f.domain;
    r.one_form_cols = g.one_form_cols;
    return r;
}

// published composition constant: ||g o f|| <= C(gamma) ||g|| max(||f||^k, 1)
inline double lip_composition_constant(double gamma) {
    const int k = static_cast<int>(std::ceil(gamma)) - 1;
    return std::pow(2.0, 2 * std::max(k, 0) + 3);
}

// local-to-global bound of a convex-domain jet: max(C, 2 C / delta^{gamma - k})
inline double local_to_global_bound(double C, double delta, double gamma) {
    const int k = static_cast<int>(std::ceil(gamma)) - 1;
    return std::max(C, 2.0 * C / std::pow(delta, gamma - k));
}

// Closure extension: evaluate at points outside the sampled domain by Taylor
// expansion from the nearest sample. Returns a jet whose domain includes the
// requested closure points.
inline LipJet lip_extend_closure(const LipJet& jet, const std::vector<Vec>& closure_pts) {
    LipJet r = jet;
    auto base = jet.fn;
    auto domain = jet.domain;
    const int k = jet.k();
    const int d = jet.fn.dim_in;
    r.fn = {d, jet.fn.dim_out, [base, domain, k, d](const std::vector<Jet2>& xj) {
                Vec x(static_cast<std::size_t>(d));
                for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = xj[static_cast<std::size_t>(i)].v;
                // nearest sample
                double best = std::numeric_limits<double>::max();
                const Vec* bx = nullptr;
                for (const auto& s : domain) {
                    double dist = 0.0;
                    for (int i = 0; i < d; ++i) dist += std::abs(s[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)]);
                    if (dist < best) {
                        best = dist;
                        bx = &s;
                    }
                }
                if (best < 1e-12 || bx == nullptr) return base.f(xj);
                // Taylor from *bx in jet arithmetic
                auto sj = seed_point(*bx, xj[0].ord);
                // shift: evaluate base at bx as constants, expand with (x - bx)
                Vec f0 = base.deriv(*bx, 0);
                Vec f1 = k >= 1 ? base.deriv(*bx, 1) : Vec{};
                Vec f2 = k >= 2 ? base.deriv(*bx, 2) : Vec{};
                std::vector<Jet2> out;
                const int m = base.dim_out;
                for (int o = 0; o < m; ++o) {
                    Jet2 acc = Jet2::constant(f0[static_cast<std::size_t>(o)], xj[0].n, xj[0].ord);
                    for (int i = 0; i < d && k >= 1; ++i)
                        acc = acc + f1[static_cast<std::size_t>(o) * d + i] * (xj[static_cast<std::size_t>(i)] - (*bx)[static_cast<std::size_t>(i)]);
                    if (k >= 2)
                        for (int i = 0; i < d; ++i)
                            for (int j2 = 0; j2 < d; ++j2)
                                acc = acc + 0.5 * f2[(static_cast<std::size_t>(o) * d + i) * d + j2] *
                                                (xj[static_cast<std::size_t>(i)] - (*bx)[static_cast<std::size_t>(i)]) *
                                                (xj[static_cast<std::size_t>(j2)] - (*bx)[static_cast<std::size_t>(j2)]);
                    out.push_back(acc);
                }
                return out;
            }};
    for (const auto& p : closure_pts) r.domain.push_back(p);
    return r;
}

// Axis-aligned box [lo, hi]
struct Box {
    Vec lo, hi;
    bool contains(const Vec& x, double slack = 0.0) const {
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
        return true;
    }
    double gap_to(const Box& o) const {
        double g = 0.0;
        for (std::size_t i = 0; i < lo.size(); ++i) {
            double gi = std::max(std::max(lo[i] - o.hi[i], o.lo[i] - hi[i]), 0.0);
            g = std::max(g, gi);
        }
        return g;
    }
};

// Blended-cutoff extension: the jet is known on a union of separated boxes;
// the result agrees with it on each box and falls off smoothly to 0 between.
// Each component value is cutoff_i(x) * f(x) where cutoff_i == 1 on box i and
// vanishes at l-infinity distance >= margin from it.
inline LipJet lip_extend_blend(const LipJet& jet, const std::vector<Box>& components,
                               double margin) {
    if (components.size() > 1) {
        double min_gap = std::numeric_limits<double>::max();
        for (std::size_t i = 0; i < components.size(); ++i)
            for (std::size_t j = i + 1; j < components.size(); ++j)
                min_gap = std::min(min_gap, components[i].gap_to(components[j]));
        if (min_gap < 2.0 * margin)
            throw domain_error("lip_extend_blend: components not separated by 2*margin");
    }
    auto base = jet.fn;
    const int d = jet.fn.dim_in;
    LipJet r = jet;
    r.fn = {d, jet.fn.dim_out, [base, components, margin, d](const std::vector<Jet2>& xj) {
                Vec x(static_cast<std::size_t>(d));
                for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = xj[static_cast<std::size_t>(i)].v;
                Jet2 chi = Jet2::constant(0.0, xj[0].n, xj[0].ord);
                bool near = false;
                for (const auto& box : components) {
                    if (!box.contains(x, margin)) continue;
                    near = true;
                    Jet2 c = Jet2::constant(1.0, xj[0].n, xj[0].ord);
                    for (int i = 0; i < d; ++i) {
                        const double ctr = 0.5 * (box.lo[static_cast<std::size_t>(i)] + box.hi[static_cast<std::size_t>(i)]);
                        const double half = 0.5 * (box.hi[static_cast<std::size_t>(i)] - box.lo[static_cast<std::size_t>(i)]);
                        c = c * cutoff1d(xj[static_cast<std::size_t>(i)] - ctr, half, half + margin);
                    }
                    chi = chi + c;
                }
                if (!near) {
                    std::vector<Jet2> z;
                    for (int o = 0; o < base.dim_out; ++o)
                        z.push_back(Jet2::constant(0.0, xj[0].n, xj[0].ord));
                    return z;
                }
                auto fv = base.f(xj);
                for (auto& c : fv) c = chi * c;
                return fv;
            }};
    return r;
}

}  // namespace rp

#endif
