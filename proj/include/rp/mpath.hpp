#ifndef RP_MPATH_HPP
#define RP_MPATH_HPP

#include <memory>
#include <string>
#include <vector>

#include "atlas.hpp"
#include "integral.hpp"
#include "path.hpp"

// Rough paths on manifolds, stored as localising sequences: an ordered list of
// time intervals, each carrying a chart and the coordinate rough path of the
// localised piece. Evaluation against one-forms recovers the functional view.

namespace rp {

struct MSegment {
    double t0 = 0.0;
    double t1 = 0.0;
    int chart = 0;
    Vec z0;                 // chart coordinates at t0
    ClassicalRoughPath Z;   // coordinate rough path, Z.start == z0
};

struct ManifoldRoughPath {
    std::shared_ptr<const Atlas> atlas;
    Vec start;  // ambient coordinates
    std::vector<MSegment> segments;
    double p = 1.0;
    double gamma = 3.0;

    double t_begin() const { return segments.empty() ? 0.0 : segments.front().t0; }
    double t_end() const { return segments.empty() ? 0.0 : segments.back().t1; }
};

// one-form on a manifold, given per chart in coordinates
struct ManifoldOneForm {
    int dim_out = 0;
    double gamma = 2.0;  // Lip regularity of the form plus one
    std::vector<OneFormJet> charts;  // indexed like atlas.charts
};

namespace detail {

// exact one-form dG of a jet map G (entries are the partial derivatives of G),
// evaluated by re-seeding one order higher as in pullback_one_form
inline OneFormJet exact_one_form(const JetFn& G, double gamma_minus_1 = 1.5) {
    const int d = G.dim_in, e = G.dim_out;
    auto gf = G.f;
    MapFn m = [gf, d, e](const std::vector<Jet2>& x) {
        const int ord_up = std::min(2, x[0].ord + 1);
        std::vector<Jet2> xs;
        xs.reserve(static_cast<std::size_t>(d));
        for (int k = 0; k < d; ++k)
            xs.push_back(Jet2::variable(x[static_cast<std::size_t>(k)].v, d, ord_up, k));
        std::vector<Jet2> Gx = gf(xs);
        std::vector<Jet2> out;
        out.reserve(static_cast<std::size_t>(e) * d);
        for (int o = 0; o < e; ++o)
            for (int c = 0; c < d; ++c)
                out.push_back(deriv_jet(Gx[static_cast<std::size_t>(o)], c));
        return out;
    };
    return OneFormJet::from_map(d, e, std::move(m), gamma_minus_1);
}

}  // namespace detail

// push a classical rough path through a jet map between vector spaces
inline ClassicalRoughPath pushforward_classical(const JetFn& g, const ClassicalRoughPath& X,
                                                const SewOptions& opt = {}) {
    ClassicalRoughPath Y = rough_integrate(detail::exact_one_form(g), X, opt);
    Y.start = g.value(X.start);
    return Y;
}

// ---------------------------------------------------------------------------
// probe functions: bumped coordinate functions of a chart, used for endpoint
// consistency and path equivalence checks
// ---------------------------------------------------------------------------
inline std::vector<JetFn> chart_probes(const Atlas& A, int ci) {
    const Chart& c = A.charts[static_cast<std::size_t>(ci)];
    std::vector<JetFn> probes;
    JetFn bump = jet_compose(
        jet_box_cutoff(Vec(static_cast<std::size_t>(A.dim), 0.0), 1.0 - A.delta / 2.0, 1.0),
        c.phi);
    for (int k = 0; k < A.dim; ++k) {
        JetFn coord = jet_slice(c.phi, k, 1);
        probes.push_back(jet_scalar_mul(c.weight, jet_scalar_mul(bump, coord)));
    }
    return probes;
}

// ambient end point of a segment (inverse chart map of the coordinate end)
inline Vec segment_end_ambient(const Atlas& A, const MSegment& s) {
    return A.charts[static_cast<std::size_t>(s.chart)].inv.value(s.Z.end_position());
}

struct MPathCheck {
    bool ok = true;
    double worst_trace_norm = 0.0;   // max coordinate norm over segment traces
    double worst_probe = 0.0;        // worst endpoint-consistency probe error
    std::string witness;
};

inline MPathCheck check_manifold_path(const ManifoldRoughPath& Z, double tol = 1e-8) {
    MPathCheck rep;
    const Atlas& A = *Z.atlas;
    for (std::size_t n = 0; n < Z.segments.size(); ++n) {
        const MSegment& s = Z.segments[n];
        for (double t : s.Z.times)
            rep.worst_trace_norm = std::max(rep.worst_trace_norm, A.norm_of(s.Z.position(t)));
        if (n + 1 < Z.segments.size()) {
            const Vec a = segment_end_ambient(A, s);
            const Vec b = A.charts[static_cast<std::size_t>(Z.segments[n + 1].chart)].inv.value(
                Z.segments[n + 1].z0);
            for (int ci : {s.chart, Z.segments[n + 1].chart})
                for (const auto& g : chart_probes(A, ci))
                    rep.worst_probe = std::max(
                        rep.worst_probe, std::abs(g.value(a)[0] - g.value(b)[0]));
        }
    }
    if (rep.worst_trace_norm >= 1.0 - A.delta / 2.0) {
        rep.ok = false;
        rep.witness = "segment trace leaves the shrunk coordinate ball";
    }
    if (rep.worst_probe > tol) {
        rep.ok = false;
        rep.witness = "endpoint consistency probes fail";
    }
    return rep;
}

// ---------------------------------------------------------------------------
// localisation of an on-manifold classical path (ambient coordinates)
// ---------------------------------------------------------------------------
struct LocaliseReport {
    double t0 = 0.0;
    std::size_t N = 0;
};

// largest operator norm of the chart differentials over domain samples
inline double atlas_dphi_norm(const Atlas& A) {
    double best = 0.0;
    for (std::size_t i = 0; i < A.charts.size(); ++i) {
        for (const auto& m : detail::subsample(A.samples, 500)) {
            if (!A.chart_contains(i, m)) continue;
            Vec D = A.charts[i].phi.deriv(m, 1);  // dim x ambient
            for (int r = 0; r < A.dim; ++r) {
                double row = 0.0;
                for (int c = 0; c < A.ambient; ++c)
                    row += std::abs(D[static_cast<std::size_t>(r) * A.ambient + c]);
                best = std::max(best, row);
            }
        }
    }
    return best;
}

namespace detail {

// coordinate rough path of an ambient sub-path in a chart
inline ClassicalRoughPath chart_coordinates(const Atlas& A, int ci, const ClassicalRoughPath& X,
                                            const SewOptions& opt) {
    const Chart& c = A.charts[static_cast<std::size_t>(ci)];
    if (X.level == 1) {
        // bounded-variation polyline: map positions directly
        SampledPath P;
        P.dim = A.dim;
        for (double t : X.times) {
            P.times.push_back(t);
            P.points.push_back(c.phi.value(X.position(t)));
        }
        return signature(P, X.level, X.p);
    }
    ClassicalRoughPath Z = rough_integrate(exact_one_form(c.phi), X, opt);
    Z.start = c.phi.value(X.start);
    return Z;
}

}  // namespace detail

// Split an on-manifold classical path into chart-localised segments. The step
// t0 is the largest time for which the level-1 displacement bound
// (|dphi| omega(0,t0))^{1/p} / (beta (1/p)!) stays below delta/(2L).
inline ManifoldRoughPath localise(std::shared_ptr<const Atlas> atlas, const ClassicalRoughPath& X,
                                  double gamma, LocaliseReport* report = nullptr,
                                  const SewOptions& opt = {}) {
    const Atlas& A = *atlas;
    if (X.dim != A.ambient) throw shape_error("localise: path not in the ambient space");
    ManifoldRoughPath Z;
    Z.atlas = atlas;
    Z.p = X.p;
    Z.gamma = gamma;
    Z.start = X.position(X.t_begin());
    const double T = X.t_end() - X.t_begin();
    const double dphi = atlas_dphi_norm(A);
    const double rhs = A.delta / (2.0 * std::max(A.L, 1.0));
    const double denom = beta_const(X.p) * gamma_fact(1.0 / X.p);
    auto bound = [&](double t) {
        return std::pow(dphi * X.control(X.t_begin(), X.t_begin() + t), 1.0 / X.p) / denom;
    };
    double t0 = T;
    if (bound(T) > rhs) {
        double lo = 0.0, hi = T;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (bound(mid) <= rhs ? lo : hi) = mid;
        }
        t0 = lo;
    }
    const double pitch = T / static_cast<double>(std::max<std::size_t>(1, X.times.size() - 1));
    if (t0 < pitch * 1e-3 || t0 <= 0.0)
        throw domain_error("localise: step t0 underflows the grid pitch; refine the path");
    for (int retry = 0; retry <= 8; ++retry) {
        Z.segments.clear();
        const std::size_t N =
            static_cast<std::size_t>(std::ceil(T / t0 * (1.0 - 1e-12)));
        bool ok = true;
        for (std::size_t n = 0; n < N && ok; ++n) {
            const double s = X.t_begin() + T * static_cast<double>(n) / static_cast<double>(N);
            const double t =
                X.t_begin() + T * static_cast<double>(n + 1) / static_cast<double>(N);
            const Vec xn = X.position(s);
            const int ci = A.find_chart(xn, A.delta);
            if (ci < 0) throw domain_error("localise: point not deep inside any chart");
            MSegment seg;
            seg.t0 = s;
            seg.t1 = t;
            seg.chart = ci;
            seg.Z = detail::chart_coordinates(A, ci, restrict_path(X, s, t), opt);
            seg.z0 = seg.Z.start;
            for (double tt : seg.Z.times)
                if (A.norm_of(seg.Z.position(tt)) >= 1.0 - A.delta / 2.0) ok = false;
            Z.segments.push_back(std::move(seg));
        }
        if (ok) {
            if (report) {
                report->t0 = T / static_cast<double>(Z.segments.size());
                report->N = Z.segments.size();
            }
            return Z;
        }
        t0 *= 0.5;  // support escaped: tighten and retry
    }
    throw numeric_error("localise: segment trace keeps escaping after retries");
}

// ---------------------------------------------------------------------------
// classical <-> manifold bijection on vector-space atlases
// ---------------------------------------------------------------------------
inline ManifoldRoughPath from_classical(const ClassicalRoughPath& X,
                                        std::shared_ptr<const Atlas> atlas, double gamma = 3.0) {
    const Atlas& A = *atlas;
    if (A.ambient != X.dim) throw shape_error("from_classical: dimension mismatch");
    ManifoldRoughPath Z;
    Z.atlas = atlas;
    Z.p = X.p;
    Z.gamma = gamma;
    Z.start = X.position(X.t_begin());
    // greedy segmentation: translation charts carry increments unchanged
    std::size_t a = 0;
    while (a + 1 < X.times.size()) {
        const Vec xa = X.position(X.times[a]);
        const int ci = A.find_chart(xa, A.delta);
        if (ci < 0) throw domain_error("from_classical: trace escapes the atlas region");
        const Vec center = A.charts[static_cast<std::size_t>(ci)].params.at("center").get<Vec>();
        std::size_t b = a;
        while (b + 1 < X.times.size()) {
            Vec nxt = X.position(X.times[b + 1]);
            double n = 0.0;
            for (std::size_t k = 0; k < nxt.size(); ++k)
                n = std::max(n, std::abs(nxt[k] - center[k]));
            if (n >= 1.0 - A.delta / 2.0) break;
            ++b;
        }
        if (b == a)
            throw domain_error("from_classical: single step escapes the chart; refine the path");
        MSegment seg;
        seg.t0 = X.times[a];
        seg.t1 = X.times[b];
        seg.chart = ci;
        seg.Z = restrict_path(X, seg.t0, seg.t1);
        Vec z0(xa);
        for (std::size_t k = 0; k < z0.size(); ++k) z0[k] -= center[k];
        seg.Z.start = z0;
        seg.z0 = z0;
        Z.segments.push_back(std::move(seg));
        a = b;
    }
    if (Z.segments.empty()) {  // constant path
        const int ci = A.find_chart(Z.start, A.delta);
        if (ci < 0) throw domain_error("from_classical: start outside the atlas region");
        const Vec center = A.charts[static_cast<std::size_t>(ci)].params.at("center").get<Vec>();
        MSegment seg;
        seg.t0 = X.t_begin();
        seg.t1 = X.t_end();
        seg.chart = ci;
        seg.Z = restrict_path(X, seg.t0, seg.t1);
        Vec z0(Z.start);
        for (std::size_t k = 0; k < z0.size(); ++k) z0[k] -= center[k];
        seg.Z.start = z0;
        seg.z0 = z0;
        Z.segments.push_back(std::move(seg));
    }
    return Z;
}

inline ClassicalRoughPath to_classical(const ManifoldRoughPath& Z) {
    const Atlas& A = *Z.atlas;
    ClassicalRoughPath out;
    bool first = true;
    for (const auto& s : Z.segments) {
        const Chart& c = A.charts[static_cast<std::size_t>(s.chart)];
        ClassicalRoughPath piece;
        if (c.kind == "vector_space") {
            piece = s.Z;  // translation chart: increments unchanged
            const Vec center = c.params.at("center").get<Vec>();
            Vec st(s.z0);
            for (std::size_t k = 0; k < st.size(); ++k) st[k] += center[k];
            piece.start = st;
        } else {
            piece = pushforward_classical(c.inv, s.Z);
        }
        out = first ? piece : concat_classical(out, piece);
        first = false;
    }
    return out;
}

// ---------------------------------------------------------------------------
// evaluation against one-forms, pushforward, support, concatenation
// ---------------------------------------------------------------------------
inline ClassicalRoughPath evaluate(const ManifoldRoughPath& Z, const ManifoldOneForm& alpha,
                                   const SewOptions& opt = {}) {
    if (alpha.charts.size() != Z.atlas->charts.size())
        throw shape_error("evaluate: form does not cover the atlas charts");
    ClassicalRoughPath out;
    bool first = true;
    Vec level(static_cast<std::size_t>(alpha.dim_out), 0.0);
    for (const auto& s : Z.segments) {
        ClassicalRoughPath piece =
            rough_integrate(alpha.charts[static_cast<std::size_t>(s.chart)], s.Z, opt);
        piece.start = level;
        out = first ? piece : concat_classical(out, piece);
        first = false;
        level = out.end_position();
    }
    return out;
}

// pushforward to a vector space: the classical path with increments Z(dg)
inline ClassicalRoughPath pushforward(const ManifoldRoughPath& Z, const JetFn& g,
                                      const SewOptions& opt = {}) {
    if (g.dim_in != Z.atlas->ambient)
        throw shape_error("pushforward: map not defined on the ambient space");
    const Atlas& A = *Z.atlas;
    ClassicalRoughPath out;
    bool first = true;
    for (const auto& s : Z.segments) {
        const Chart& c = A.charts[static_cast<std::size_t>(s.chart)];
        ClassicalRoughPath piece = pushforward_classical(jet_compose(g, c.inv), s.Z, opt);
        out = first ? piece : concat_classical(out, piece);
        first = false;
    }
    out.start = g.value(Z.start);
    return out;
}

inline std::vector<Vec> support(const ManifoldRoughPath& Z) {
    const Atlas& A = *Z.atlas;
    std::vector<Vec> pts{Z.start};
    for (const auto& s : Z.segments) {
        const Chart& c = A.charts[static_cast<std::size_t>(s.chart)];
        for (double t : s.Z.times) pts.push_back(c.inv.value(s.Z.position(t)));
    }
    return pts;
}

inline ManifoldRoughPath concat(const ManifoldRoughPath& Z, const ManifoldRoughPath& Y,
                                double tol = 1e-8) {
    if (Z.atlas.get() != Y.atlas.get())
        throw domain_error("concat: paths live on different atlases");
    const Atlas& A = *Z.atlas;
    const Vec a = Z.segments.empty() ? Z.start : segment_end_ambient(A, Z.segments.back());
    const Vec b = Y.start;
    double worst = 0.0;
    const int ca = Z.segments.empty() ? A.find_chart(a, 0.0) : Z.segments.back().chart;
    const int cb = Y.segments.empty() ? A.find_chart(b, 0.0) : Y.segments.front().chart;
    for (int ci : {ca, cb}) {
        if (ci < 0) continue;
        for (const auto& g : chart_probes(A, ci))
            worst = std::max(worst, std::abs(g.value(a)[0] - g.value(b)[0]));
    }
    if (worst > tol)
        throw domain_error("concat: endpoint inconsistency, worst probe error " +
                           std::to_string(worst));
    ManifoldRoughPath R = Z;
    for (const auto& s : Y.segments) R.segments.push_back(s);
    return R;
}

// restriction to a sub-interval aligned with segment boundaries is just list
// slicing; general sub-intervals restrict the boundary segments
inline ManifoldRoughPath restrict_manifold(const ManifoldRoughPath& Z, double s, double t) {
    ManifoldRoughPath R;
    R.atlas = Z.atlas;
    R.p = Z.p;
    R.gamma = Z.gamma;
    for (const auto& seg : Z.segments) {
        const double a = std::max(s, seg.t0), b = std::min(t, seg.t1);
        if (b <= a + 1e-15) continue;
        MSegment piece = seg;
        piece.t0 = a;
        piece.t1 = b;
        piece.Z = restrict_path(seg.Z, a, b);
        piece.z0 = piece.Z.start = seg.Z.position(a);
        R.segments.push_back(std::move(piece));
    }
    if (!R.segments.empty())
        R.start = Z.atlas->charts[static_cast<std::size_t>(R.segments.front().chart)].inv.value(
            R.segments.front().z0);
    return R;
}

// ---------------------------------------------------------------------------
// one-form embedding: g(m) = (f_j(m), phi_j(m)) blocks over supporting charts,
// with coordinate forms beta_i so that g*beta_i = alpha_i
// ---------------------------------------------------------------------------
struct WhitneyEmbedding {
    int n = 0;                      // embedding dimension
    JetFn g;                        // ambient -> R^n
    std::vector<OneFormJet> betas;  // forms on R^n, one per input form
    std::vector<std::vector<int>> supports;  // chart indices per form
};

inline WhitneyEmbedding whitney_embed(const Atlas& A,
                                      const std::vector<ManifoldOneForm>& forms) {
    WhitneyEmbedding W;
    const int d = A.dim;
    const auto& M = atlas_members(A);
    // chart bumps: 1 on the delta-shrunk coordinate ball, 0 at the delta/2 one
    auto chart_bump = [&](int j) {
        return jet_scalar_mul(
            A.charts[static_cast<std::size_t>(j)].weight,
            jet_compose(jet_box_cutoff(Vec(static_cast<std::size_t>(d), 0.0), 1.0 - A.delta,
                                       1.0 - A.delta / 2.0),
                        A.charts[static_cast<std::size_t>(j)].phi));
    };
    // support of each form on the sample, then a greedy minimal chart cover by
    // regions where the chart bump equals one
    for (const auto& al : forms) {
        std::vector<std::size_t> supp_pts;
        for (std::size_t s = 0; s < A.samples.size(); ++s) {
            for (std::size_t j = 0; j < A.charts.size(); ++j) {
                if (!M.in[j][s]) continue;
                Vec vals = al.charts[j].jet.fn.value(M.coords[j][s]);
                double peak = 0.0;
                for (double v : vals) peak = std::max(peak, std::abs(v));
                if (peak > 1e-12) supp_pts.push_back(s);
                break;  // one resolving chart suffices for the magnitude test
            }
        }
        std::vector<int> sup;
        std::vector<std::uint8_t> covered(A.samples.size(), 0);
        std::size_t remaining = supp_pts.size();
        while (remaining > 0) {
            int best = -1;
            std::size_t best_gain = 0;
            for (std::size_t j = 0; j < A.charts.size(); ++j) {
                std::size_t gain = 0;
                for (std::size_t s : supp_pts)
                    if (!covered[s] && M.in[j][s] && A.norm_of(M.coords[j][s]) < 1.0 - A.delta)
                        ++gain;
                if (gain > best_gain) {
                    best_gain = gain;
                    best = static_cast<int>(j);
                }
            }
            if (best < 0)
                throw domain_error("whitney_embed: form support not coverable by shrunk charts");
            sup.push_back(best);
            for (std::size_t s : supp_pts)
                if (!covered[s] && M.in[static_cast<std::size_t>(best)][s] &&
                    A.norm_of(M.coords[static_cast<std::size_t>(best)][s]) < 1.0 - A.delta) {
                    covered[s] = 1;
                    --remaining;
                }
        }
        if (sup.empty()) sup.push_back(0);  // zero form: one trivial block
        W.supports.push_back(std::move(sup));
    }
    int total_blocks = 0;
    for (const auto& s : W.supports) total_blocks += static_cast<int>(s.size());
    W.n = (d + 1) * total_blocks;
    // per form, weights w_j = c_j * r(sum of chosen c_k) with a smoothed
    // reciprocal r; exact partition wherever the chosen bumps sum to >= 1/2,
    // which contains the form's support by the greedy cover
    std::vector<JetFn> blocks;
    for (const auto& sup : W.supports) {
        std::vector<JetFn> bumps;
        for (int j : sup) bumps.push_back(chart_bump(j));
        for (std::size_t b = 0; b < bumps.size(); ++b) {
            JetFn mine = bumps[b];
            JetFn weight{A.ambient, 1, [mine, bumps](const std::vector<Jet2>& x) {
                             Jet2 total = Jet2::constant(0.0, x[0].n, x[0].ord);
                             for (const auto& c : bumps) total = total + c.f(x)[0];
                             Jet2 chi = psi01((total - 0.25) / 0.25);
                             Jet2 denom = chi * total + (1.0 - chi) * 0.25;
                             return std::vector<Jet2>{mine.f(x)[0] / denom};
                         }};
            blocks.push_back(
                jet_concat(weight, A.charts[static_cast<std::size_t>(sup[b])].phi));
        }
    }
    JetFn g = blocks.front();
    for (std::size_t b = 1; b < blocks.size(); ++b) g = jet_concat(g, blocks[b]);
    W.g = g;
    // beta_i reads only its own blocks: on block (w, v), w * alpha_chart(v) dv
    int offset = 0;
    for (std::size_t i = 0; i < forms.size(); ++i) {
        const auto& al = forms[i];
        const int e = al.dim_out;
        struct Block {
            int off;
            OneFormJet form;
        };
        std::vector<Block> bs;
        for (int j : W.supports[i]) {
            bs.push_back({offset, al.charts[static_cast<std::size_t>(j)]});
            offset += d + 1;
        }
        const int n = W.n;
        MapFn m = [bs, n, d, e](const std::vector<Jet2>& x) {
            std::vector<Jet2> out(static_cast<std::size_t>(e) * n,
                                  Jet2::constant(0.0, x[0].n, x[0].ord));
            for (const auto& blk : bs) {
                const Jet2& w = x[static_cast<std::size_t>(blk.off)];
                std::vector<Jet2> v(x.begin() + blk.off + 1, x.begin() + blk.off + 1 + d);
                std::vector<Jet2> av = blk.form.jet.fn.f(v);  // e x d entries
                for (int o = 0; o < e; ++o)
                    for (int c = 0; c < d; ++c)
                        out[static_cast<std::size_t>(o) * n + blk.off + 1 + c] =
                            w * av[static_cast<std::size_t>(o) * d + c];
            }
            return out;
        };
        W.betas.push_back(OneFormJet::from_map(W.n, e, std::move(m), al.gamma - 1.0));
    }
    // adjust block offsets consumed above started at 0 for form 0; nothing to fix
    return W;
}

// value-level check of g*beta = alpha at an ambient sample point: compares the
// two pullback matrices against ambient directions
inline double whitney_pullback_error(const Atlas& A, const WhitneyEmbedding& W,
                                     const std::vector<ManifoldOneForm>& forms, std::size_t i,
                                     const Vec& m) {
    const int D = A.ambient, d = A.dim;
    const int e = forms[i].dim_out;
    // lhs: beta(g(m)) composed with Dg(m)
    Vec gm = W.g.value(m);
    Vec Dg = W.g.deriv(m, 1);  // n x D
    Vec bv = W.betas[i].jet.fn.value(gm);  // e x n
    std::vector<double> lhs(static_cast<std::size_t>(e) * D, 0.0);
    for (int o = 0; o < e; ++o)
        for (int c = 0; c < D; ++c)
            for (int r = 0; r < W.n; ++r)
                lhs[static_cast<std::size_t>(o) * D + c] +=
                    bv[static_cast<std::size_t>(o) * W.n + r] *
                    Dg[static_cast<std::size_t>(r) * D + c];
    // rhs: ambient representation through any chart containing m
    const int ci = A.find_chart(m, A.delta);
    if (ci < 0) throw domain_error("whitney_pullback_error: sample outside all charts");
    const Chart& ch = A.charts[static_cast<std::size_t>(ci)];
    Vec u = ch.phi.value(m);
    Vec Dphi = ch.phi.deriv(m, 1);  // d x D
    Vec av = forms[i].charts[static_cast<std::size_t>(ci)].jet.fn.value(u);  // e x d
    double err = 0.0;
    for (int o = 0; o < e; ++o)
        for (int c = 0; c < D; ++c) {
            double rhs = 0.0;
            for (int r = 0; r < d; ++r)
                rhs += av[static_cast<std::size_t>(o) * d + r] *
                       Dphi[static_cast<std::size_t>(r) * D + c];
            err = std::max(err, std::abs(lhs[static_cast<std::size_t>(o) * D + c] - rhs));
        }
    return err;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------
inline nlohmann::json manifold_path_to_json(const ManifoldRoughPath& Z) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : Z.segments)
        segs.push_back({{"interval", {s.t0, s.t1}},
                        {"chart", Z.atlas->charts[static_cast<std::size_t>(s.chart)].id},
                        {"start_coords", s.z0},
                        {"roughpath", rough_path_to_json(s.Z)}});
    return {{"atlas", atlas_to_json(*Z.atlas)},
            {"start", Z.start},
            {"p", Z.p},
            {"gamma", Z.gamma},
            {"segments", segs}};
}

inline ManifoldRoughPath manifold_path_from_json(const nlohmann::json& j) {
    ManifoldRoughPath Z;
    auto atlas = std::make_shared<Atlas>(atlas_from_json(j.at("atlas")));
    Z.atlas = atlas;
    Z.start = j.at("start").get<Vec>();
    Z.p = j.at("p").get<double>();
    Z.gamma = j.at("gamma").get<double>();
    for (const auto& sj : j.at("segments")) {
        MSegment s;
        s.t0 = sj.at("interval")[0].get<double>();
        s.t1 = sj.at("interval")[1].get<double>();
        const std::string id = sj.at("chart").get<std::string>();
        s.chart = -1;
        for (std::size_t c = 0; c < atlas->charts.size(); ++c)
            if (atlas->charts[c].id == id) s.chart = static_cast<int>(c);
        if (s.chart < 0) throw domain_error("manifold_path_from_json: unknown chart " + id);
        s.z0 = sj.at("start_coords").get<Vec>();
        s.Z = rough_path_from_json(sj.at("roughpath"));
        s.Z.start = s.z0;
        Z.segments.push_back(std::move(s));
    }
    return Z;
}

}  // namespace rp

#endif
