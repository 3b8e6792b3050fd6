#ifndef RP_ATLAS_HPP
#define RP_ATLAS_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "expr.hpp"
#include "integral.hpp"

// Lip-gamma manifolds as finite chart atlases with constants (delta, L, R).
// Charts are globally defined, compactly supported coordinate maps into the
// unit ball of the atlas norm; invariants are verified statistically on dense
// point samples rather than proved.

namespace rp {

struct Chart {
    std::string id;
    std::string kind;  // vector_space | sphere | torus | custom | product
    int dim = 0;       // chart (manifold) dimension
    int ambient = 0;   // embedding dimension
    JetFn phi;         // ambient -> chart coordinates, global, compact support
    JetFn inv;         // chart coordinates -> ambient, valid on the unit ball
    JetFn weight;      // smooth [0,1] factor: 1 on the shrunk chart, 0 off U
    std::function<bool(const Vec&)> in_domain;  // hard membership test for U
    nlohmann::json params;
};

struct Atlas {
    std::string manifold;
    int dim = 0;
    int ambient = 0;
    double gamma0 = 3.0;
    double delta = 0.2;
    double L = 0.0;  // measured transition Lip bound
    double R = 0.0;  // measured global coordinate bound
    std::string norm = "max";  // "max" (ell-infinity) or "l1"
    std::vector<Chart> charts;
    std::vector<Vec> samples;  // dense ambient point sample of the manifold
    nlohmann::json build_params;
    mutable std::shared_ptr<void> members_cache;  // lazy detail::Membership

    double norm_of(const Vec& u) const {
        double r = 0.0;
        if (norm == "l1") {
            for (double v : u) r += std::abs(v);
        } else {
            for (double v : u) r = std::max(r, std::abs(v));
        }
        return r;
    }

    bool chart_contains(std::size_t ci, const Vec& m, double shrink = 0.0) const {
        const Chart& c = charts[ci];
        if (c.in_domain && !c.in_domain(m)) return false;
        return norm_of(c.phi.value(m)) < 1.0 - shrink;
    }

    // chart whose coordinates of m are deepest inside the ball; -1 if none
    int find_chart(const Vec& m, double shrink = 0.0) const {
        int best = -1;
        double best_norm = 1e300;
        for (std::size_t i = 0; i < charts.size(); ++i) {
            const Chart& c = charts[i];
            if (c.in_domain && !c.in_domain(m)) continue;
            const double n = norm_of(c.phi.value(m));
            if (n < 1.0 - shrink && n < best_norm) {
                best = static_cast<int>(i);
                best_norm = n;
            }
        }
        return best;
    }
};

struct ManifoldPoint {
    std::string manifold;
    Vec ambient;
};

namespace detail {

// chart membership and coordinates of every sample, computed once per atlas
struct Membership {
    std::vector<std::vector<std::uint8_t>> in;  // chart x sample
    std::vector<std::vector<Vec>> coords;       // chart x sample (valid when in)
};

inline Membership membership(const Atlas& A, const std::vector<Vec>& samples) {
    Membership M;
    M.in.assign(A.charts.size(), std::vector<std::uint8_t>(samples.size(), 0));
    M.coords.assign(A.charts.size(), std::vector<Vec>(samples.size()));
    for (std::size_t c = 0; c < A.charts.size(); ++c) {
        const Chart& ch = A.charts[c];
        for (std::size_t s = 0; s < samples.size(); ++s) {
            if (ch.in_domain && !ch.in_domain(samples[s])) continue;
            Vec u = ch.phi.value(samples[s]);
            if (A.norm_of(u) < 1.0) {
                M.in[c][s] = 1;
                M.coords[c][s] = std::move(u);
            }
        }
    }
    return M;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// jets of first derivatives (order drops by one); used for pullbacks
// ---------------------------------------------------------------------------
namespace detail {

inline Jet2 deriv_jet(const Jet2& a, int var) {
    Jet2 r(0.0, a.n, std::max(0, a.ord - 1));
    if (a.ord >= 1) r.v = a.g[static_cast<std::size_t>(var)];
    if (a.ord >= 2)
        for (int i = 0; i < a.n; ++i)
            r.g[static_cast<std::size_t>(i)] = a.h[static_cast<std::size_t>(var) * a.n + i];
    return r;
}

inline std::vector<Vec> subsample(const std::vector<Vec>& pts, std::size_t cap) {
    if (pts.size() <= cap) return pts;
    std::vector<Vec> out;
    out.reserve(cap);
    const double step = static_cast<double>(pts.size()) / static_cast<double>(cap);
    for (std::size_t k = 0; k < cap; ++k)
        out.push_back(pts[static_cast<std::size_t>(step * static_cast<double>(k))]);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------
struct AtlasValidation {
    bool cover_ok = true;
    bool ball_ok = true;
    double L_measured = 0.0;
    double R_measured = 0.0;
    Vec cover_witness;  // sample missed by every shrunk chart, if any
};

inline const detail::Membership& atlas_members(const Atlas& A) {
    if (!A.members_cache)
        A.members_cache = std::make_shared<detail::Membership>(detail::membership(A, A.samples));
    return *static_cast<const detail::Membership*>(A.members_cache.get());
}

// transition coordinates of overlap samples in chart j, capped for cost
inline std::vector<Vec> overlap_coords(const Atlas& A, std::size_t i, std::size_t j,
                                       std::size_t cap = 80) {
    const auto& M = atlas_members(A);
    std::vector<Vec> pts;
    for (std::size_t s = 0; s < A.samples.size(); ++s)
        if (M.in[i][s] && M.in[j][s]) pts.push_back(M.coords[j][s]);
    return detail::subsample(pts, cap);
}

inline AtlasValidation validate_atlas(const Atlas& A) {
    AtlasValidation v;
    const auto& M = atlas_members(A);
    // condition 3: shrunk charts cover the sample
    for (std::size_t s = 0; s < A.samples.size() && v.cover_ok; ++s) {
        bool hit = false;
        for (std::size_t i = 0; i < A.charts.size() && !hit; ++i)
            if (M.in[i][s] && A.norm_of(M.coords[i][s]) < 1.0 - A.delta) hit = true;
        if (!hit) {
            v.cover_ok = false;
            v.cover_witness = A.samples[s];
        }
    }
    // the smooth chart weight must vanish outside the hard chart domain, so
    // partition bumps stay supported in their charts
    for (const auto& m : detail::subsample(A.samples, 2000))
        for (std::size_t i = 0; i < A.charts.size(); ++i) {
            const Chart& c = A.charts[i];
            if (c.in_domain && !c.in_domain(m) && c.weight.f &&
                c.weight.value(m)[0] > 1e-12)
                v.ball_ok = false;
        }
    // global bound R and transition Lip bound L
    for (std::size_t i = 0; i < A.charts.size(); ++i)
        for (const auto& m : detail::subsample(A.samples, 2000))
            v.R_measured = std::max(v.R_measured, A.norm_of(A.charts[i].phi.value(m)));
    for (std::size_t i = 0; i < A.charts.size(); ++i) {
        for (std::size_t j = 0; j < A.charts.size(); ++j) {
            if (i == j) continue;
            auto dom = overlap_coords(A, i, j);
            if (dom.size() < 2) continue;
            LipJet t{jet_compose(A.charts[i].phi, A.charts[j].inv), A.gamma0, dom, 0, 0.0};
            v.L_measured = std::max(v.L_measured, lip_norm_estimate(t).norm);
        }
    }
    v.L_measured = std::max(v.L_measured, 1.0);
    return v;
}

// ---------------------------------------------------------------------------
// built-in atlases
// ---------------------------------------------------------------------------
namespace detail {

inline Jet2 ramp(const Jet2& t, double lo, double hi) { return psi01((t - lo) / (hi - lo)); }

inline Chart vector_space_chart(int d, const Vec& center, double delta) {
    Chart c;
    c.kind = "vector_space";
    c.dim = d;
    c.ambient = d;
    JetFn shift = jet_affine(d, d, [&] {
        Vec I(static_cast<std::size_t>(d) * d, 0.0);
        for (int k = 0; k < d; ++k) I[static_cast<std::size_t>(k) * d + k] = 1.0;
        return I;
    }(), [&] {
        Vec b(center);
        for (auto& x : b) x = -x;
        return b;
    }());
    c.phi = jet_scalar_mul(jet_box_cutoff(center, 1.0, 1.5), shift);
    c.inv = jet_affine(d, d, [&] {
        Vec I(static_cast<std::size_t>(d) * d, 0.0);
        for (int k = 0; k < d; ++k) I[static_cast<std::size_t>(k) * d + k] = 1.0;
        return I;
    }(), center);
    c.weight = jet_box_cutoff(center, 1.0 - delta / 2.0, 1.0);
    c.in_domain = [center, d](const Vec& m) {
        for (int k = 0; k < d; ++k)
            if (std::abs(m[static_cast<std::size_t>(k)] - center[static_cast<std::size_t>(k)]) >=
                1.0)
                return false;
        return true;
    };
    c.params = {{"center", center}};
    return c;
}

// gnomonic (central projection) chart at pole n on the unit sphere, scaled so
// the unit coordinate ball is a comfortably sub-hemisphere square
inline Chart sphere_chart(const Vec& pole, const Vec& ea, const Vec& eb, double s) {
    Chart c;
    c.kind = "sphere";
    c.dim = 2;
    c.ambient = 3;
    const double w_min = 0.4;
    c.phi = {3, 2, [pole, ea, eb, s, w_min](const std::vector<Jet2>& x) {
                 Jet2 w = x[0] * pole[0] + x[1] * pole[1] + x[2] * pole[2];
                 Jet2 sm = ramp(w, 0.25, w_min);
                 Jet2 q = sm * w + (1.0 - sm) * 0.3;  // smooth positive denominator
                 Jet2 ua = x[0] * ea[0] + x[1] * ea[1] + x[2] * ea[2];
                 Jet2 ub = x[0] * eb[0] + x[1] * eb[1] + x[2] * eb[2];
                 return std::vector<Jet2>{sm * ua / (q * s), sm * ub / (q * s)};
             }};
    c.inv = {2, 3, [pole, ea, eb, s](const std::vector<Jet2>& u) {
                 Jet2 norm2 = (u[0] * u[0] + u[1] * u[1]) * (s * s) + 1.0;
                 Jet2 den = inv(sqrt(norm2));
                 std::vector<Jet2> m;
                 for (int k = 0; k < 3; ++k)
                     m.push_back((u[0] * (s * ea[k]) + u[1] * (s * eb[k]) + pole[k]) * den);
                 return m;
             }};
    c.weight = {3, 1, [pole](const std::vector<Jet2>& x) {
                    Jet2 w = x[0] * pole[0] + x[1] * pole[1] + x[2] * pole[2];
                    return std::vector<Jet2>{ramp(w, 0.40, 0.45)};
                }};
    c.in_domain = [pole, w_min](const Vec& m) {
        return m[0] * pole[0] + m[1] * pole[1] + m[2] * pole[2] > w_min;
    };
    c.params = {{"pole", pole}, {"scale", s}};
    return c;
}

// angle-window chart on the flat 2-torus embedded in R^4 as
// (cos a, sin a, cos b, sin b); coordinates are wrapped angle offsets / s
inline Chart torus_chart(double a0, double b0, double s) {
    Chart c;
    c.kind = "torus";
    c.dim = 2;
    c.ambient = 4;
    const double c1 = std::cos(a0), s1 = std::sin(a0);
    const double c2 = std::cos(b0), s2 = std::sin(b0);
    auto axis = [](const Jet2& cd, const Jet2& sd, double scale) {
        // chi ramps off before the atan2 branch cut at |delta| = pi
        Jet2 chi = ramp(cd, std::cos(2.6), std::cos(2.2));
        return chi * atan2(sd, cd) / scale;
    };
    c.phi = {4, 2, [c1, s1, c2, s2, s, axis](const std::vector<Jet2>& x) {
                 Jet2 cda = x[0] * c1 + x[1] * s1;
                 Jet2 sda = x[1] * c1 - x[0] * s1;
                 Jet2 cdb = x[2] * c2 + x[3] * s2;
                 Jet2 sdb = x[3] * c2 - x[2] * s2;
                 return std::vector<Jet2>{axis(cda, sda, s), axis(cdb, sdb, s)};
             }};
    c.inv = {2, 4, [a0, b0, s](const std::vector<Jet2>& u) {
                 Jet2 a = u[0] * s + a0;
                 Jet2 b = u[1] * s + b0;
                 return std::vector<Jet2>{cos(a), sin(a), cos(b), sin(b)};
             }};
    c.weight = {4, 1, [c1, s1, c2, s2](const std::vector<Jet2>& x) {
                    Jet2 cda = x[0] * c1 + x[1] * s1;
                    Jet2 cdb = x[2] * c2 + x[3] * s2;
                    return std::vector<Jet2>{ramp(cda, std::cos(1.95), std::cos(1.85)) *
                                             ramp(cdb, std::cos(1.95), std::cos(1.85))};
                }};
    const double c_lim = std::cos(2.0);
    c.in_domain = [c1, s1, c2, s2, c_lim](const Vec& m) {
        return m[0] * c1 + m[1] * s1 > c_lim && m[2] * c2 + m[3] * s2 > c_lim;
    };
    c.params = {{"a", a0}, {"b", b0}, {"scale", s}};
    return c;
}

inline std::vector<Vec> grid_samples(const Vec& lo, const Vec& hi, std::size_t target) {
    const std::size_t d = lo.size();
    std::size_t per = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(target),
                                                       1.0 / static_cast<double>(d)))));
    std::vector<Vec> out;
    std::vector<std::size_t> idx(d, 0);
    for (;;) {
        Vec p(d);
        for (std::size_t k = 0; k < d; ++k)
            p[k] = lo[k] + (hi[k] - lo[k]) * static_cast<double>(idx[k]) /
                               static_cast<double>(per - 1);
        out.push_back(p);
        std::size_t k = 0;
        while (k < d && ++idx[k] == per) idx[k++] = 0;
        if (k == d) break;
    }
    return out;
}

}  // namespace detail

inline Atlas build_vector_space_atlas(int d, const Vec& lo, const Vec& hi, double delta = 0.25,
                                      double step = 0.5) {
    Atlas A;
    A.manifold = "vector_space";
    A.dim = d;
    A.ambient = d;
    A.gamma0 = 3.0;
    A.delta = delta;
    A.build_params = {{"kind", "vector_space"}, {"d", d},       {"lo", lo},
                      {"hi", hi},               {"delta", delta}, {"step", step}};
    // chart centers on a grid covering the region
    std::vector<Vec> centers;
    std::vector<std::size_t> counts(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k)
        counts[static_cast<std::size_t>(k)] = static_cast<std::size_t>(
            std::floor((hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)]) / step +
                       0.5)) + 1;
    std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
    for (;;) {
        Vec cpt(static_cast<std::size_t>(d));
        for (int k = 0; k < d; ++k)
            cpt[static_cast<std::size_t>(k)] =
                lo[static_cast<std::size_t>(k)] + step * static_cast<double>(idx[static_cast<std::size_t>(k)]);
        centers.push_back(cpt);
        std::size_t k = 0;
        while (k < static_cast<std::size_t>(d) && ++idx[k] == counts[k]) idx[k++] = 0;
        if (k == static_cast<std::size_t>(d)) break;
    }
    int n = 0;
    for (const auto& cpt : centers) {
        Chart c = detail::vector_space_chart(d, cpt, delta);
        c.id = "vs" + std::to_string(n++);
        A.charts.push_back(std::move(c));
    }
    A.samples = detail::grid_samples(lo, hi, 10000);
    AtlasValidation v = validate_atlas(A);
    if (!v.cover_ok) throw domain_error("build_atlas: vector-space cover check failed");
    A.L = v.L_measured;
    A.R = v.R_measured;
    return A;
}

inline Atlas build_sphere_atlas(double delta = 0.2, double scale = 1.5) {
    Atlas A;
    A.manifold = "sphere";
    A.dim = 2;
    A.ambient = 3;
    A.gamma0 = 3.0;
    A.delta = delta;
    A.build_params = {{"kind", "sphere"}, {"delta", delta}, {"scale", scale}};
    int n = 0;
    for (int axisi = 0; axisi < 3; ++axisi) {
        for (double sign : {1.0, -1.0}) {
            Vec pole(3, 0.0), ea(3, 0.0), eb(3, 0.0);
            pole[static_cast<std::size_t>(axisi)] = sign;
            ea[static_cast<std::size_t>((axisi + 1) % 3)] = 1.0;
            eb[static_cast<std::size_t>((axisi + 2) % 3)] = 1.0;
            Chart c = detail::sphere_chart(pole, ea, eb, scale);
            c.id = "sp" + std::to_string(n++);
            A.charts.push_back(std::move(c));
        }
    }
    // Fibonacci sphere sample
    const std::size_t N = 10000;
    const double ga = M_PI * (3.0 - std::sqrt(5.0));
    for (std::size_t k = 0; k < N; ++k) {
        const double z = 1.0 - 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(N);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double th = ga * static_cast<double>(k);
        A.samples.push_back(Vec{r * std::cos(th), r * std::sin(th), z});
    }
    AtlasValidation v = validate_atlas(A);
    if (!v.cover_ok) throw domain_error("build_atlas: sphere cover check failed");
    A.L = v.L_measured;
    A.R = v.R_measured;
    return A;
}

inline Atlas build_torus_atlas(double delta = 0.2, double scale = 2.0) {
    Atlas A;
    A.manifold = "torus";
    A.dim = 2;
    A.ambient = 4;
    A.gamma0 = 3.0;
    A.delta = delta;
    A.build_params = {{"kind", "torus"}, {"delta", delta}, {"scale", scale}};
    int n = 0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            Chart c = detail::torus_chart(2.0 * M_PI * i / 3.0, 2.0 * M_PI * j / 3.0, scale);
            c.id = "tr" + std::to_string(n++);
            A.charts.push_back(std::move(c));
        }
    }
    for (int i = 0; i < 100; ++i) {
        for (int j = 0; j < 100; ++j) {
            const double a = 2.0 * M_PI * i / 100.0, b = 2.0 * M_PI * j / 100.0;
            A.samples.push_back(Vec{std::cos(a), std::sin(a), std::cos(b), std::sin(b)});
        }
    }
    AtlasValidation v = validate_atlas(A);
    if (!v.cover_ok) throw domain_error("build_atlas: torus cover check failed");
    A.L = v.L_measured;
    A.R = v.R_measured;
    return A;
}

// custom atlas from an expression-language description:
// {manifold, dim, ambient, gamma0, delta, norm, charts: [{id, phi: [...],
//  inv: [...], member: expr (>0 inside), weight: [expr] optional}],
//  samples: [[...]] optional (else generated from chart inverses)}
inline Atlas build_custom_atlas(const nlohmann::json& spec) {
    Atlas A;
    A.manifold = spec.value("manifold", std::string("custom"));
    A.dim = spec.at("dim").get<int>();
    A.ambient = spec.at("ambient").get<int>();
    A.gamma0 = spec.value("gamma0", 3.0);
    A.delta = spec.value("delta", 0.25);
    A.norm = spec.value("norm", std::string("max"));
    A.build_params = {{"kind", "custom"}, {"spec", spec}};
    for (const auto& cj : spec.at("charts")) {
        Chart c;
        c.id = cj.value("id", "c" + std::to_string(A.charts.size()));
        c.kind = "custom";
        c.dim = A.dim;
        c.ambient = A.ambient;
        c.phi = compile_exprs(cj.at("phi").get<std::vector<std::string>>(), A.ambient);
        c.inv = compile_exprs(cj.at("inv").get<std::vector<std::string>>(), A.dim);
        if (cj.contains("weight"))
            c.weight = compile_exprs(cj.at("weight").get<std::vector<std::string>>(), A.ambient);
        else
            c.weight = jet_constant(A.ambient, Vec{1.0});
        if (cj.contains("member")) {
            JetFn mem = compile_exprs(std::vector<std::string>{cj.at("member").get<std::string>()},
                                      A.ambient);
            c.in_domain = [mem](const Vec& m) { return mem.value(m)[0] > 0.0; };
        }
        c.params = cj;
        A.charts.push_back(std::move(c));
    }
    if (spec.contains("samples")) {
        A.samples = spec.at("samples").get<std::vector<Vec>>();
    } else {
        // push chart-ball grids through the inverses
        const std::size_t per = std::max<std::size_t>(64, 4096 / A.charts.size());
        Vec lo(static_cast<std::size_t>(A.dim), -(1.0 - A.delta / 2.0));
        Vec hi(static_cast<std::size_t>(A.dim), 1.0 - A.delta / 2.0);
        for (const auto& c : A.charts)
            for (const auto& u : detail::grid_samples(lo, hi, per))
                A.samples.push_back(c.inv.value(u));
    }
    AtlasValidation v = validate_atlas(A);
    if (!v.cover_ok) {
        std::string w = "build_atlas: custom cover check failed at (";
        for (double x : v.cover_witness) w += std::to_string(x) + ",";
        throw domain_error(w + ")");
    }
    A.L = v.L_measured;
    A.R = v.R_measured;
    return A;
}

inline Atlas build_atlas(const std::string& kind, const nlohmann::json& params_in = {}) {
    const nlohmann::json params =
        params_in.is_null() ? nlohmann::json::object() : params_in;
    if (kind == "vector_space") {
        const int d = params.value("d", 1);
        Vec lo = params.contains("lo") ? params.at("lo").get<Vec>()
                                       : Vec(static_cast<std::size_t>(d), -2.0);
        Vec hi = params.contains("hi") ? params.at("hi").get<Vec>()
                                       : Vec(static_cast<std::size_t>(d), 2.0);
        return build_vector_space_atlas(d, lo, hi, params.value("delta", 0.25),
                                        params.value("step", 0.5));
    }
    if (kind == "sphere") return build_sphere_atlas(params.value("delta", 0.2),
                                                    params.value("scale", 1.5));
    if (kind == "torus") return build_torus_atlas(params.value("delta", 0.2),
                                                  params.value("scale", 2.0));
    if (kind == "custom") return build_custom_atlas(params);
    throw domain_error("build_atlas: unknown kind " + kind);
}

// ---------------------------------------------------------------------------
// product atlas: charts (phi_i, psi_j) on U_i x V_j with the max direct-sum
// norm; constants delta = min, L = max, R = max
// ---------------------------------------------------------------------------
inline Atlas product_atlas(const Atlas& A, const Atlas& B) {
    Atlas P;
    P.manifold = A.manifold + "*" + B.manifold;
    P.dim = A.dim + B.dim;
    P.ambient = A.ambient + B.ambient;
    P.gamma0 = std::min(A.gamma0, B.gamma0);
    P.delta = std::min(A.delta, B.delta);
    P.L = std::max(A.L, B.L);
    P.R = std::max(A.R, B.R);
    P.norm = "max";
    P.build_params = {{"kind", "product"}, {"A", A.build_params}, {"B", B.build_params}};
    const int Da = A.ambient, da = A.dim;
    for (const auto& ca : A.charts) {
        for (const auto& cb : B.charts) {
            Chart c;
            c.id = ca.id + "*" + cb.id;
            c.kind = "product";
            c.dim = P.dim;
            c.ambient = P.ambient;
            c.phi = jet_concat(jet_on_slice(ca.phi, P.ambient, 0),
                               jet_on_slice(cb.phi, P.ambient, Da));
            c.inv = jet_concat(jet_on_slice(ca.inv, P.dim, 0), jet_on_slice(cb.inv, P.dim, da));
            JetFn wa = jet_on_slice(ca.weight, P.ambient, 0);
            JetFn wb = jet_on_slice(cb.weight, P.ambient, Da);
            c.weight = jet_scalar_mul(wa, wb);
            auto ina = ca.in_domain, inb = cb.in_domain;
            c.in_domain = [ina, inb, Da](const Vec& m) {
                Vec ma(m.begin(), m.begin() + Da), mb(m.begin() + Da, m.end());
                return (!ina || ina(ma)) && (!inb || inb(mb));
            };
            P.charts.push_back(std::move(c));
        }
    }
    // paired sample: deterministic pseudo-random combinations
    std::mt19937_64 rng(20240817);
    const std::size_t N = 10000;
    for (std::size_t k = 0; k < N; ++k) {
        const Vec& ma = A.samples[rng() % A.samples.size()];
        const Vec& mb = B.samples[rng() % B.samples.size()];
        Vec m(ma);
        m.insert(m.end(), mb.begin(), mb.end());
        P.samples.push_back(std::move(m));
    }
    return P;
}

// ---------------------------------------------------------------------------
// manifold Lip norm of an ambient function under an atlas: max over charts of
// the coordinate Lip norm on the chart's ball samples
// ---------------------------------------------------------------------------
inline double manifold_lip_norm(const Atlas& A, const JetFn& f, double gamma) {
    double n = 0.0;
    const auto& M = atlas_members(A);
    for (std::size_t i = 0; i < A.charts.size(); ++i) {
        std::vector<Vec> dom;
        for (std::size_t s = 0; s < A.samples.size(); ++s)
            if (M.in[i][s]) dom.push_back(M.coords[i][s]);
        dom = detail::subsample(dom, 80);
        if (dom.size() < 2) continue;
        LipJet lj{jet_compose(f, A.charts[i].inv), gamma, dom, 0, 0.0};
        n = std::max(n, lip_norm_estimate(lj).norm);
    }
    return n;
}

// ---------------------------------------------------------------------------
// equivalence of atlases on the same point set
// ---------------------------------------------------------------------------
struct EquivalenceReport {
    bool equivalent = false;
    double C = 0.0;       // max cross-transition Lip norm
    double c_probe = 0.0; // norm-equivalence band on probe functions
    double d_probe = 0.0;
    std::string witness;
};

inline EquivalenceReport atlas_equivalence_check(const Atlas& A1, const Atlas& A2, double gamma) {
    EquivalenceReport rep;
    auto cross = [&](const Atlas& P, const Atlas& Q) {
        double C = 0.0;
        const auto& MP = atlas_members(P);
        const auto MQ = detail::membership(Q, P.samples);
        for (std::size_t i = 0; i < P.charts.size(); ++i) {
            for (std::size_t j = 0; j < Q.charts.size(); ++j) {
                std::vector<Vec> dom;
                for (std::size_t s = 0; s < P.samples.size(); ++s)
                    if (MP.in[i][s] && MQ.in[j][s]) dom.push_back(MQ.coords[j][s]);
                dom = detail::subsample(dom, 80);
                if (dom.size() < 2) continue;
                LipJet t{jet_compose(P.charts[i].phi, Q.charts[j].inv), gamma, dom, 0, 0.0};
                C = std::max(C, lip_norm_estimate(t).norm);
            }
        }
        return C;
    };
    rep.C = std::max({cross(A1, A2), cross(A2, A1), 1.0});
    // consequence check: manifold Lip norms under the two atlases are within a
    // c/d band on a probe family (bumped coordinate functions of A1's charts)
    double cmin = 1e300, dmax = 0.0;
    for (std::size_t i = 0; i < A1.charts.size() && i < 4; ++i) {
        for (int coord = 0; coord < A1.dim; ++coord) {
            JetFn pick = jet_slice(jet_identity(A1.dim), coord, 1);
            JetFn probe = jet_scalar_mul(jet_box_cutoff(Vec(static_cast<std::size_t>(A1.dim), 0.0),
                                                        1.0 - A1.delta, 1.0 - A1.delta / 2.0),
                                         pick);
            JetFn ambient_probe = jet_compose(probe, A1.charts[i].phi);
            const double n1 = manifold_lip_norm(A1, ambient_probe, gamma);
            const double n2 = manifold_lip_norm(A2, ambient_probe, gamma);
            if (n1 <= 0.0) continue;
            cmin = std::min(cmin, n2 / n1);
            dmax = std::max(dmax, n2 / n1);
        }
    }
    rep.c_probe = cmin;
    rep.d_probe = dmax;
    rep.equivalent = std::isfinite(rep.C) && rep.C > 0.0 && dmax < 1e300;
    if (!rep.equivalent) rep.witness = "cross-transition Lip estimate unbounded";
    return rep;
}

// ---------------------------------------------------------------------------
// partition of unity subordinate to the charts: f_i = c_i / sum_j c_j with
// c_i = weight_i * bump(phi_i); each f_i is an ambient jet map
// ---------------------------------------------------------------------------
inline std::vector<JetFn> partition_of_unity(const Atlas& A) {
    const double a = 1.0 - A.delta;
    const double b = 1.0 - A.delta / 2.0;
    const int D = A.ambient;
    // c_i as jet maps
    std::vector<JetFn> cs;
    for (const auto& ch : A.charts) {
        JetFn bump = jet_compose(jet_box_cutoff(Vec(static_cast<std::size_t>(A.dim), 0.0), a, b),
                                 ch.phi);
        cs.push_back(jet_scalar_mul(ch.weight, bump));
    }
    std::vector<JetFn> fs;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        JetFn num = cs[i];
        std::vector<JetFn> all = cs;
        fs.push_back({D, 1, [num, all](const std::vector<Jet2>& x) {
                          Jet2 total = Jet2::constant(0.0, x[0].n, x[0].ord);
                          for (const auto& cj : all) total = total + cj.f(x)[0];
                          Jet2 ni = num.f(x)[0];
                          if (total.v <= 1e-14)
                              return std::vector<Jet2>{Jet2::constant(0.0, x[0].n, x[0].ord)};
                          return std::vector<Jet2>{ni / total};
                      }});
    }
    return fs;
}

// ---------------------------------------------------------------------------
// pullback of a vector-space one-form through h: M -> R^e, per chart:
// (h o inv_i)^* alpha, an OneFormJet on the chart ball
// ---------------------------------------------------------------------------
inline std::vector<OneFormJet> pullback_one_form(const Atlas& A, const JetFn& h,
                                                 const OneFormJet& alpha) {
    if (h.dim_in != A.ambient) throw shape_error("pullback_one_form: h not on the ambient space");
    if (h.dim_out != alpha.dim_in)
        throw shape_error("pullback_one_form: h range does not match the form");
    std::vector<OneFormJet> out;
    const int d = A.dim, e = alpha.dim_in, v = alpha.dim_out;
    for (const auto& ch : A.charts) {
        JetFn H = jet_compose(h, ch.inv);
        auto hf = H.f;
        auto af = alpha.jet.fn.f;
        MapFn m = [hf, af, d, e, v](const std::vector<Jet2>& x) {
            // re-seed one order higher so the chain-rule factor DH keeps the
            // derivative data the caller asked for (forms are always queried
            // at seed points)
            const int ord_in = x[0].ord;
            const int ord_up = std::min(2, ord_in + 1);
            std::vector<Jet2> xs;
            xs.reserve(x.size());
            for (int k = 0; k < d; ++k)
                xs.push_back(Jet2::variable(x[static_cast<std::size_t>(k)].v, d, ord_up, k));
            std::vector<Jet2> Hx = hf(xs);
            std::vector<Jet2> ax = af(Hx);  // v x e entries, jets in x
            std::vector<Jet2> out_jets;
            out_jets.reserve(static_cast<std::size_t>(v) * d);
            for (int o = 0; o < v; ++o) {
                for (int c = 0; c < d; ++c) {
                    Jet2 acc = Jet2::constant(0.0, d, ord_up - 1);
                    for (int r = 0; r < e; ++r)
                        acc = acc + ax[static_cast<std::size_t>(o) * e + r] *
                                        detail::deriv_jet(Hx[static_cast<std::size_t>(r)], c);
                    out_jets.push_back(acc);
                }
            }
            return out_jets;
        };
        OneFormJet beta = OneFormJet::from_map(d, v, std::move(m), alpha.jet.gamma);
        out.push_back(std::move(beta));
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------
inline nlohmann::json atlas_to_json(const Atlas& A) {
    nlohmann::json charts = nlohmann::json::array();
    for (const auto& c : A.charts)
        charts.push_back({{"id", c.id}, {"kind", c.kind}, {"params", c.params}});
    return {{"manifold", A.manifold}, {"gamma0", A.gamma0}, {"delta", A.delta},
            {"L", A.L},               {"R", A.R},           {"norm", A.norm},
            {"charts", charts},       {"build", A.build_params}};
}

inline Atlas atlas_from_json(const nlohmann::json& j) {
    const auto& b = j.at("build");
    const std::string kind = b.at("kind").get<std::string>();
    if (kind == "product") {
        Atlas A = atlas_from_json({{"build", b.at("A")}});
        Atlas B = atlas_from_json({{"build", b.at("B")}});
        return product_atlas(A, B);
    }
    if (kind == "custom") return build_custom_atlas(b.at("spec"));
    return build_atlas(kind, b);
}

}  // namespace rp

#endif
