#ifndef RP_MRDE_HPP
#define RP_MRDE_HPP

// Differential equations on manifolds driven by rough signals: connection
// maps given by per-chart-pair coordinate representations, the induced
// one-form substitution, pushforward connections, and the chart-hopping
// solver on the product manifold.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <rp/mpath.hpp>
#include <rp/rde.hpp>

namespace rp {

// ---------------------------------------------------------------------------
// connection specification
// ---------------------------------------------------------------------------

// coordinate representation of the connection coefficient on one chart pair:
// g(u, w) is the d2 x d1 matrix (row-major) mapping signal coordinate
// velocities to response coordinate velocities
struct ConnectionRep {
    int chartN = -1;
    int chartM = -1;
    JetFn g;  // dim_in = d1 + d2, dim_out = d2 * d1
    std::vector<std::string> exprs;  // nonempty when built from expressions
};

struct ConnectionSpec {
    std::shared_ptr<const Atlas> N;  // signal manifold
    std::shared_ptr<const Atlas> M;  // response manifold
    double gamma = 3.0;
    double C = 1.0;  // declared Lip-gamma constant of the coefficients
    std::vector<ConnectionRep> reps;

    const ConnectionRep* find(int ci, int cj) const {
        for (const auto& r : reps)
            if (r.chartN == ci && r.chartM == cj) return &r;
        return nullptr;
    }
    const ConnectionRep& require(int ci, int cj) const {
        const ConnectionRep* r = find(ci, cj);
        if (!r)
            throw domain_error("connection: no coordinate representation for chart pair (" +
                               std::to_string(ci) + ", " + std::to_string(cj) + ")");
        return *r;
    }
};

namespace detail {

// solve the linear system A x = b with Jet2 entries (Gaussian elimination,
// value-level partial pivoting); A is n x n row-major, b has n entries
inline std::vector<Jet2> jet_solve(std::vector<Jet2> A, std::vector<Jet2> b) {
    const std::size_t n = b.size();
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(A[r * n + k].v) > std::abs(A[piv * n + k].v)) piv = r;
        if (std::abs(A[piv * n + k].v) < 1e-14)
            throw numeric_error("connection: singular tangent-frame Gram matrix");
        if (piv != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(A[k * n + c], A[piv * n + c]);
            std::swap(b[k], b[piv]);
        }
        for (std::size_t r = k + 1; r < n; ++r) {
            Jet2 m = A[r * n + k] / A[k * n + k];
            for (std::size_t c = k; c < n; ++c) A[r * n + c] = A[r * n + c] - m * A[k * n + c];
            b[r] = b[r] - m * b[k];
        }
    }
    std::vector<Jet2> x(n, Jet2::constant(0.0, b[0].n, b[0].ord));
    for (std::size_t k = n; k-- > 0;) {
        Jet2 s = b[k];
        for (std::size_t c = k + 1; c < n; ++c) s = s - A[k * n + c] * x[c];
        x[k] = s / A[k * n + k];
    }
    return x;
}

// evaluate a jet map on a slice of freshly re-seeded input variables and
// return both the values and the first-derivative jets with respect to the
// full z variable set (valid when z holds seed jets)
struct SlicedJets {
    std::vector<Jet2> val;    // dim_out entries
    std::vector<Jet2> deriv;  // dim_out x slice_cnt entries, row-major
};

inline SlicedJets eval_with_jacobian(const JetFn& f, const std::vector<Jet2>& z, int lo,
                                     int cnt) {
    const int n = z[0].n;
    const int ord_up = std::min(2, z[0].ord + 1);
    std::vector<Jet2> xs;
    xs.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) xs.push_back(Jet2::variable(z[static_cast<std::size_t>(k)].v, n, ord_up, k));
    std::vector<Jet2> sliced(xs.begin() + lo, xs.begin() + lo + cnt);
    // the slice seeds are full-width variables at their global indices, so
    // the outputs already carry gradients in the full z variable set
    SlicedJets r;
    r.val = f.f(sliced);
    (void)n;
    for (const auto& o : r.val)
        for (int i = 0; i < cnt; ++i) r.deriv.push_back(deriv_jet(o, lo + i));
    return r;
}

// complete order-2 jets of a map whose evaluation yields exact values and
// gradients but no Hessian (one jet order is lost when differentials are
// assembled from chart jets): central differences of the gradient fill it in
inline JetFn fd_complete(const JetFn& base, double h = 1e-5) {
    const int d = base.dim_in, e = base.dim_out;
    JetFn b = base;
    return {d, e, [b, d, e, h](const std::vector<Jet2>& x) {
                std::vector<Jet2> out = b.f(x);
                if (x[0].ord < 2 || out.empty() || out[0].ord >= 2) return out;
                Vec v(static_cast<std::size_t>(d));
                for (int k = 0; k < d; ++k) v[static_cast<std::size_t>(k)] = x[static_cast<std::size_t>(k)].v;
                std::vector<std::vector<Jet2>> gp, gm;
                for (int k = 0; k < d; ++k) {
                    Vec vp = v, vm = v;
                    vp[static_cast<std::size_t>(k)] += h;
                    vm[static_cast<std::size_t>(k)] -= h;
                    gp.push_back(b.eval_jets(vp, 1));
                    gm.push_back(b.eval_jets(vm, 1));
                }
                const int n = x[0].n;
                for (int o = 0; o < e; ++o) {
                    Jet2 up(out[static_cast<std::size_t>(o)].v, n, 2);
                    up.g = out[static_cast<std::size_t>(o)].g;
                    for (int k = 0; k < d; ++k)
                        for (int l = 0; l <= k; ++l) {
                            const double hkl =
                                0.25 *
                                ((gp[static_cast<std::size_t>(l)][static_cast<std::size_t>(o)].g[static_cast<std::size_t>(k)] -
                                  gm[static_cast<std::size_t>(l)][static_cast<std::size_t>(o)].g[static_cast<std::size_t>(k)]) +
                                 (gp[static_cast<std::size_t>(k)][static_cast<std::size_t>(o)].g[static_cast<std::size_t>(l)] -
                                  gm[static_cast<std::size_t>(k)][static_cast<std::size_t>(o)].g[static_cast<std::size_t>(l)])) /
                                h;
                            up.h[static_cast<std::size_t>(k) * n + l] = hkl;
                            up.h[static_cast<std::size_t>(l) * n + k] = hkl;
                        }
                    out[static_cast<std::size_t>(o)] = std::move(up);
                }
                return out;
            }};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// connection builders
// ---------------------------------------------------------------------------

// build per-chart-pair coordinate representations from an ambient coefficient
// G(x, y): an (ambM * ambN) row-major matrix field mapping ambient signal
// velocities to ambient response velocities tangent to M. Coordinate reps are
// D_psi(y) G(x, y) D_inv_phi(u), with D_psi applied through the tangent-frame
// Gram system of the chart inverse. Translation-chart pairs shortcut to a
// plain shift, which keeps full jet order.
inline ConnectionSpec connection_from_ambient(std::shared_ptr<const Atlas> N,
                                              std::shared_ptr<const Atlas> M, const JetFn& G,
                                              double gamma = 3.0, double C = 1.0) {
    if (G.dim_in != N->ambient + M->ambient)
        throw shape_error("connection_from_ambient: coefficient input dimension mismatch");
    if (G.dim_out != M->ambient * N->ambient)
        throw shape_error("connection_from_ambient: coefficient output dimension mismatch");
    ConnectionSpec S;
    S.N = N;
    S.M = M;
    S.gamma = gamma;
    S.C = C;
    const int d1 = N->dim, d2 = M->dim, aN = N->ambient, aM = M->ambient;
    for (int i = 0; i < static_cast<int>(N->charts.size()); ++i) {
        for (int j = 0; j < static_cast<int>(M->charts.size()); ++j) {
            const Chart& cn = N->charts[static_cast<std::size_t>(i)];
            const Chart& cm = M->charts[static_cast<std::size_t>(j)];
            ConnectionRep rep;
            rep.chartN = i;
            rep.chartM = j;
            if (cn.kind == "vector_space" && cm.kind == "vector_space") {
                const Vec ca = cn.params.at("center").get<Vec>();
                const Vec cb = cm.params.at("center").get<Vec>();
                Vec shift(ca);
                shift.insert(shift.end(), cb.begin(), cb.end());
                Vec A(static_cast<std::size_t>(aN + aM) * (d1 + d2), 0.0);
                for (int k = 0; k < aN + aM; ++k) A[static_cast<std::size_t>(k) * (d1 + d2) + k] = 1.0;
                rep.g = jet_compose(G, jet_affine(d1 + d2, aN + aM, A, shift));
            } else {
                JetFn invN = cn.inv, invM = cm.inv;
                auto gf = G.f;
                rep.g = {d1 + d2, d2 * d1,
                         [gf, invN, invM, d1, d2, aN, aM](const std::vector<Jet2>& z) {
                             auto X = detail::eval_with_jacobian(invN, z, 0, d1);
                             auto Y = detail::eval_with_jacobian(invM, z, d1, d2);
                             std::vector<Jet2> xy(X.val);
                             xy.insert(xy.end(), Y.val.begin(), Y.val.end());
                             std::vector<Jet2> Gm = gf(xy);  // aM x aN
                             // T[c] = G * (column c of D invN): aM vectors
                             std::vector<Jet2> T(static_cast<std::size_t>(aM) * d1,
                                                 Jet2::constant(0.0, z[0].n, z[0].ord));
                             for (int r = 0; r < aM; ++r)
                                 for (int c = 0; c < d1; ++c) {
                                     Jet2 acc = Jet2::constant(0.0, z[0].n, z[0].ord);
                                     for (int s = 0; s < aN; ++s)
                                         acc = acc + Gm[static_cast<std::size_t>(r) * aN + s] *
                                                         X.deriv[static_cast<std::size_t>(s) * d1 + c];
                                     T[static_cast<std::size_t>(r) * d1 + c] = acc;
                                 }
                             // solve (J^T J) out_col = J^T T_col with J = D invM
                             std::vector<Jet2> A(static_cast<std::size_t>(d2) * d2,
                                                 Jet2::constant(0.0, z[0].n, z[0].ord));
                             for (int r = 0; r < d2; ++r)
                                 for (int c = 0; c < d2; ++c) {
                                     Jet2 acc = Jet2::constant(0.0, z[0].n, z[0].ord);
                                     for (int s = 0; s < aM; ++s)
                                         acc = acc + Y.deriv[static_cast<std::size_t>(s) * d2 + r] *
                                                         Y.deriv[static_cast<std::size_t>(s) * d2 + c];
                                     A[static_cast<std::size_t>(r) * d2 + c] = acc;
                                 }
                             std::vector<Jet2> out(static_cast<std::size_t>(d2) * d1,
                                                   Jet2::constant(0.0, z[0].n, z[0].ord));
                             for (int c = 0; c < d1; ++c) {
                                 std::vector<Jet2> rhs;
                                 for (int r = 0; r < d2; ++r) {
                                     Jet2 acc = Jet2::constant(0.0, z[0].n, z[0].ord);
                                     for (int s = 0; s < aM; ++s)
                                         acc = acc + Y.deriv[static_cast<std::size_t>(s) * d2 + r] *
                                                         T[static_cast<std::size_t>(s) * d1 + c];
                                     rhs.push_back(acc);
                                 }
                                 std::vector<Jet2> col = detail::jet_solve(A, rhs);
                                 for (int r = 0; r < d2; ++r)
                                     out[static_cast<std::size_t>(r) * d1 + c] = col[static_cast<std::size_t>(r)];
                             }
                             return out;
                         }};
                rep.g = detail::fd_complete(rep.g);
            }
            S.reps.push_back(std::move(rep));
        }
    }
    return S;
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

struct ConnectionCheck {
    bool ok = true;
    double worst_lip = 0.0;     // largest estimated Lip norm across reps
    double worst_compat = 0.0;  // largest overlap conjugation mismatch
    std::string witness;
};

namespace detail {

// sampled product coordinates (u, w) over member points of the two charts
inline std::vector<Vec> product_coords(const Atlas& N, const Atlas& M, int ci, int cj,
                                       std::size_t cap) {
    const auto& mn = atlas_members(N);
    const auto& mm = atlas_members(M);
    std::vector<Vec> un, wm;
    for (std::size_t s = 0; s < N.samples.size(); ++s)
        if (mn.in[static_cast<std::size_t>(ci)][s]) un.push_back(mn.coords[static_cast<std::size_t>(ci)][s]);
    for (std::size_t s = 0; s < M.samples.size(); ++s)
        if (mm.in[static_cast<std::size_t>(cj)][s]) wm.push_back(mm.coords[static_cast<std::size_t>(cj)][s]);
    un = subsample(un, cap);
    wm = subsample(wm, cap);
    std::vector<Vec> out;
    for (std::size_t a = 0; a < un.size(); ++a) {
        Vec z(un[a]);
        const Vec& w = wm[(a * 7 + 3) % std::max<std::size_t>(1, wm.size())];
        z.insert(z.end(), w.begin(), w.end());
        out.push_back(std::move(z));
    }
    return out;
}

}  // namespace detail

// largest sampled coefficient entry across representations (the value-level
// size of g, as opposed to its Lip norm)
inline double connection_value_norm(const ConnectionSpec& S, std::size_t cap = 6) {
    double best = 0.0;
    for (const auto& r : S.reps) {
        for (const auto& z : detail::product_coords(*S.N, *S.M, r.chartN, r.chartM, cap)) {
            const Vec v = r.g.value(z);
            for (double e : v) best = std::max(best, std::abs(e));
        }
    }
    return best;
}

inline ConnectionCheck validate_connection(const ConnectionSpec& S, double compat_tol = 1e-8) {
    ConnectionCheck rep;
    const Atlas& N = *S.N;
    const Atlas& M = *S.M;
    const int d1 = N.dim, d2 = M.dim;
    // Lip-gamma estimate per representation on sampled coordinates
    for (const auto& r : S.reps) {
        std::vector<Vec> dom = detail::product_coords(N, M, r.chartN, r.chartM, 12);
        if (dom.size() < 2) continue;
        LipJet lj{r.g, S.gamma, dom, 0, S.C};
        const double n = lip_norm_estimate(lj).norm;
        if (n > rep.worst_lip) {
            rep.worst_lip = n;
            if (n > S.C) {
                rep.ok = false;
                rep.witness = "lip bound exceeded on chart pair (" + std::to_string(r.chartN) +
                              ", " + std::to_string(r.chartM) + ")";
            }
        }
    }
    // overlap compatibility: the same point seen from two chart pairs
    const auto& mn = atlas_members(N);
    const auto& mm = atlas_members(M);
    std::size_t tested = 0;
    for (std::size_t a = 0; a < S.reps.size() && tested < 400; ++a) {
        for (std::size_t b = a + 1; b < S.reps.size() && tested < 400; ++b) {
            const auto& ra = S.reps[a];
            const auto& rb = S.reps[b];
            for (std::size_t sn = 0; sn < N.samples.size() && tested < 400; sn += 37) {
                if (!mn.in[static_cast<std::size_t>(ra.chartN)][sn] ||
                    !mn.in[static_cast<std::size_t>(rb.chartN)][sn])
                    continue;
                for (std::size_t sm = 0; sm < M.samples.size(); sm += 53) {
                    if (!mm.in[static_cast<std::size_t>(ra.chartM)][sm] ||
                        !mm.in[static_cast<std::size_t>(rb.chartM)][sm])
                        continue;
                    const Vec& ua = mn.coords[static_cast<std::size_t>(ra.chartN)][sn];
                    const Vec& ub = mn.coords[static_cast<std::size_t>(rb.chartN)][sn];
                    const Vec& wa = mm.coords[static_cast<std::size_t>(ra.chartM)][sm];
                    const Vec& wb = mm.coords[static_cast<std::size_t>(rb.chartM)][sm];
                    Vec za(ua);
                    za.insert(za.end(), wa.begin(), wa.end());
                    Vec zb(ub);
                    zb.insert(zb.end(), wb.begin(), wb.end());
                    const Vec A = ra.g.value(za);
                    const Vec B = rb.g.value(zb);
                    // conjugate A into chart pair b
                    const Vec TM = jet_compose(M.charts[static_cast<std::size_t>(rb.chartM)].phi,
                                               M.charts[static_cast<std::size_t>(ra.chartM)].inv)
                                       .deriv(wa, 1);  // d2 x d2
                    const Vec TN = jet_compose(N.charts[static_cast<std::size_t>(ra.chartN)].phi,
                                               N.charts[static_cast<std::size_t>(rb.chartN)].inv)
                                       .deriv(ub, 1);  // d1 x d1
                    double err = 0.0;
                    for (int r = 0; r < d2; ++r)
                        for (int c = 0; c < d1; ++c) {
                            double v = 0.0;
                            for (int s = 0; s < d2; ++s)
                                for (int t = 0; t < d1; ++t)
                                    v += TM[static_cast<std::size_t>(r) * d2 + s] *
                                         A[static_cast<std::size_t>(s) * d1 + t] *
                                         TN[static_cast<std::size_t>(t) * d1 + c];
                            err = std::max(err, std::abs(v - B[static_cast<std::size_t>(r) * d1 + c]));
                        }
                    if (err > rep.worst_compat) {
                        rep.worst_compat = err;
                        if (err > compat_tol) {
                            rep.ok = false;
                            rep.witness = "overlap conjugation mismatch between pairs (" +
                                          std::to_string(ra.chartN) + "," + std::to_string(ra.chartM) +
                                          ") and (" + std::to_string(rb.chartN) + "," +
                                          std::to_string(rb.chartM) + ")";
                        }
                    }
                    ++tested;
                    break;
                }
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// one-form substitution: alpha -> alpha composed with the horizontal lift
// ---------------------------------------------------------------------------

// product-atlas chart index of the pair (chartN, chartM)
inline int product_chart_index(const ConnectionSpec& S, int ci, int cj) {
    return ci * static_cast<int>(S.M->charts.size()) + cj;
}

// substitute the horizontal lift into a product-manifold one-form: the result
// sends (v, w) to alpha(v, g v) and annihilates the response block
inline ManifoldOneForm alpha_gamma(const ManifoldOneForm& alpha, const ConnectionSpec& S,
                                   bool validate = false) {
    const int d1 = S.N->dim, d2 = S.M->dim;
    const int D = d1 + d2;
    const std::size_t nN = S.N->charts.size(), nM = S.M->charts.size();
    if (alpha.charts.size() != nN * nM)
        throw shape_error("alpha_gamma: form not indexed by the product atlas");
    ManifoldOneForm out;
    out.dim_out = alpha.dim_out;
    out.gamma = std::min(alpha.gamma, S.gamma - 1.0);
    const int e = alpha.dim_out;
    for (std::size_t i = 0; i < nN; ++i) {
        for (std::size_t j = 0; j < nM; ++j) {
            const std::size_t pc = i * nM + j;
            const ConnectionRep* r = S.find(static_cast<int>(i), static_cast<int>(j));
            if (!r) {
                out.charts.push_back(OneFormJet::from_map(
                    D, e,
                    [](const std::vector<Jet2>&) -> std::vector<Jet2> {
                        throw domain_error("alpha_gamma: chart pair without representation");
                    },
                    out.gamma));
                continue;
            }
            auto af = alpha.charts[pc].jet.fn.f;
            auto gf = r->g.f;
            MapFn m = [af, gf, d1, d2, D, e](const std::vector<Jet2>& z) {
                std::vector<Jet2> a = af(z);   // e x D
                std::vector<Jet2> g = gf(z);   // d2 x d1
                std::vector<Jet2> res(static_cast<std::size_t>(e) * D,
                                      Jet2::constant(0.0, z[0].n, z[0].ord));
                for (int o = 0; o < e; ++o)
                    for (int c = 0; c < d1; ++c) {
                        Jet2 acc = a[static_cast<std::size_t>(o) * D + c];
                        for (int rr = 0; rr < d2; ++rr)
                            acc = acc + a[static_cast<std::size_t>(o) * D + d1 + rr] *
                                            g[static_cast<std::size_t>(rr) * d1 + c];
                        res[static_cast<std::size_t>(o) * D + c] = acc;
                    }
                return res;
            };
            OneFormJet f = OneFormJet::from_map(D, e, std::move(m), out.gamma);
            if (validate) {
                LipJet lj = f.jet;
                lj.domain = detail::product_coords(*S.N, *S.M, static_cast<int>(i),
                                                   static_cast<int>(j), 8);
                if (lj.domain.size() >= 2) lip_norm_estimate(lj);  // throws on jet failure
            }
            out.charts.push_back(std::move(f));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// pushforward connection
// ---------------------------------------------------------------------------

// coordinate representation of the connection pushed through an invertible
// pair xi = (xi1, xi2); output matrix entries carry exact values, with
// derivative data taken at the value level of the frame changes
inline JetFn pushforward_connection(const ConnectionSpec& S, int ci, int cj, const JetFn& xi1,
                                    const JetFn& xi1_inv, const JetFn& xi2,
                                    const JetFn& xi2_inv) {
    const ConnectionRep& rep = S.require(ci, cj);
    const int d1 = S.N->dim, d2 = S.M->dim;
    if (xi1.dim_in != d1 || xi1.dim_out != d1 || xi2.dim_in != d2 || xi2.dim_out != d2)
        throw shape_error("pushforward_connection: frame dimensions mismatch");
    auto gf = rep.g.f;
    JetFn i1 = xi1_inv, i2 = xi2_inv, f2 = xi2;
    JetFn x1 = xi1;
    return {d1 + d2, d2 * d1, [gf, i1, i2, f2, x1, d1, d2](const std::vector<Jet2>& zeta) {
                // invert the frames (jets in zeta)
                std::vector<Jet2> zu(zeta.begin(), zeta.begin() + d1);
                std::vector<Jet2> zw(zeta.begin() + d1, zeta.end());
                std::vector<Jet2> u = i1.f(zu);
                std::vector<Jet2> w = i2.f(zw);
                std::vector<Jet2> z(u);
                z.insert(z.end(), w.begin(), w.end());
                std::vector<Jet2> G = gf(z);
                // value-level frame differentials
                Vec uval(static_cast<std::size_t>(d1)), zval(static_cast<std::size_t>(d1));
                for (int k = 0; k < d1; ++k) {
                    uval[static_cast<std::size_t>(k)] = u[static_cast<std::size_t>(k)].v;
                    zval[static_cast<std::size_t>(k)] = zu[static_cast<std::size_t>(k)].v;
                }
                Vec wval(static_cast<std::size_t>(d2));
                for (int k = 0; k < d2; ++k) wval[static_cast<std::size_t>(k)] = w[static_cast<std::size_t>(k)].v;
                const Vec D2 = f2.deriv(wval, 1);   // d2 x d2, at xi2^{-1}(zeta_w)
                const Vec D1i = i1.deriv(zval, 1);  // d1 x d1, at zeta_u
                std::vector<Jet2> out(static_cast<std::size_t>(d2) * d1,
                                      Jet2::constant(0.0, zeta[0].n, zeta[0].ord));
                for (int r = 0; r < d2; ++r)
                    for (int c = 0; c < d1; ++c) {
                        Jet2 acc = Jet2::constant(0.0, zeta[0].n, zeta[0].ord);
                        for (int s = 0; s < d2; ++s)
                            for (int t = 0; t < d1; ++t)
                                acc = acc + D2[static_cast<std::size_t>(r) * d2 + s] *
                                                G[static_cast<std::size_t>(s) * d1 + t] *
                                                D1i[static_cast<std::size_t>(t) * d1 + c];
                        out[static_cast<std::size_t>(r) * d1 + c] = acc;
                    }
                return out;
            }};
}

// ---------------------------------------------------------------------------
// the chart-hopping solver
// ---------------------------------------------------------------------------

struct MrdeOptions {
    RdeOptions rde;            // per-subinterval solver options
    SewOptions sew{1e-10, 20, 0};  // signal coordinate extraction
    double safety = 0.9;       // fraction of delta used as displacement budget
    int max_halvings = 8;
};

struct ManifoldRdeSolution {
    ManifoldRoughPath Z;  // on the product atlas of N x M
    Vec x0, y0;           // ambient initial points
    double t0 = 0.0;      // subinterval step actually used at the start
    std::size_t halvings = 0;
    RdeReport rde;
};

namespace detail {

// accumulated control of a manifold path over [s, t] (per-segment coordinate
// controls, subadditively summed across chart hops)
inline double manifold_control(const ManifoldRoughPath& X, double s, double t) {
    double acc = 0.0;
    for (const auto& seg : X.segments) {
        const double a = std::max(s, seg.t0), b = std::min(t, seg.t1);
        if (b > a + 1e-15) acc += seg.Z.control(a, b);
    }
    return acc;
}

// largest chart differential row sum along the trace of a manifold path
inline double path_dphi_norm(const ManifoldRoughPath& X) {
    const Atlas& A = *X.atlas;
    double best = 1.0;
    const std::size_t stride = std::max<std::size_t>(1, X.segments.size() / 200);
    for (std::size_t k = 0; k < X.segments.size(); k += stride) {
        const MSegment& s = X.segments[k];
        const Chart& c = A.charts[static_cast<std::size_t>(s.chart)];
        const Vec amb = c.inv.value(s.z0);
        const Vec D = c.phi.deriv(amb, 1);
        for (int r = 0; r < A.dim; ++r) {
            double row = 0.0;
            for (int cc = 0; cc < A.ambient; ++cc)
                row += std::abs(D[static_cast<std::size_t>(r) * A.ambient + cc]);
            best = std::max(best, row);
        }
    }
    return best;
}

}  // namespace detail

inline ManifoldRdeSolution solve_manifold_rde(const ConnectionSpec& S,
                                              const ManifoldRoughPath& X, const Vec& y0,
                                              const MrdeOptions& opt = {}) {
    const Atlas& N = *S.N;
    const Atlas& M = *S.M;
    if (X.atlas->charts.size() != N.charts.size() || X.atlas->ambient != N.ambient)
        throw shape_error("solve_manifold_rde: signal path not on the connection's signal atlas");
    if (static_cast<int>(y0.size()) != M.ambient)
        throw shape_error("solve_manifold_rde: initial point dimension mismatch");
    const int d1 = N.dim, d2 = M.dim;
    auto P = std::make_shared<Atlas>(product_atlas(N, M));
    const double delta = P->delta;

    ManifoldRdeSolution sol;
    sol.x0 = X.start;
    sol.y0 = y0;
    sol.Z.atlas = P;
    sol.Z.p = X.p;
    sol.Z.gamma = std::min(X.gamma, S.gamma);
    sol.Z.start = X.start;
    sol.Z.start.insert(sol.Z.start.end(), y0.begin(), y0.end());

    // displacement-budget step: signal and response coordinate excursions per
    // subinterval stay below safety * delta so supports fit in B(z_n, delta)
    const double T0 = X.t_begin(), T1 = X.t_end();
    const double T = T1 - T0;
    // the manifold control already lives in chart coordinates, so no chart
    // differential factor enters the displacement bound
    const double gnorm = std::max(connection_value_norm(S), 1.0);
    const double denom = beta_const(X.p) * gamma_fact(1.0 / X.p);
    auto bound = [&](double t) {
        return (1.0 + gnorm) *
               std::pow(detail::manifold_control(X, T0, T0 + t), 1.0 / X.p) / denom;
    };
    const double rhs = opt.safety * delta;
    double t0 = T;
    if (bound(T) > rhs) {
        double lo = 0.0, hi = T;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (bound(mid) <= rhs ? lo : hi) = mid;
        }
        t0 = lo;
    }
    if (t0 <= 0.0) throw domain_error("solve_manifold_rde: step underflow");
    sol.t0 = t0;

    // subinterval boundaries snap to the signal grid so that evaluations of
    // the solution and the signal compare on a common refinement
    std::vector<double> grid;
    for (const auto& seg : X.segments)
        for (double tt : seg.Z.times) grid.push_back(tt);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    auto snap = [&grid](double t, double b) {
        auto it = std::upper_bound(grid.begin(), grid.end(), b + 1e-15);
        if (it != grid.begin() && *(it - 1) > t + 1e-15) return *(it - 1);
        auto up = std::upper_bound(grid.begin(), grid.end(), t + 1e-15);
        return up != grid.end() ? *up : b;
    };

    Vec x_cur = X.start, y_cur = y0;
    double t = T0;
    while (t < T1 - 1e-12 * std::max(1.0, T)) {
        double step = t0;
        bool placed = false;
        for (int retry = 0; retry <= opt.max_halvings && !placed; ++retry) {
            const double b = snap(t, std::min(t + step, T1));
            const int ci = N.find_chart(x_cur, N.delta);
            const int cj = M.find_chart(y_cur, M.delta);
            if (ci < 0 || cj < 0)
                throw domain_error("solve_manifold_rde: point not deep inside any chart");
            const ConnectionRep& rep = S.require(ci, cj);
            ClassicalRoughPath U = pushforward(restrict_manifold(X, t, b),
                                               N.charts[static_cast<std::size_t>(ci)].phi, opt.sew);
            Vec u_n = U.start;
            Vec w_n = M.charts[static_cast<std::size_t>(cj)].phi.value(y_cur);
            Vec z_n(u_n);
            z_n.insert(z_n.end(), w_n.begin(), w_n.end());
            // extend the coefficients off the working box so the classical
            // solver sees a globally defined field
            Box box{Vec(z_n), Vec(z_n)};
            for (auto& v : box.lo) v -= delta;
            for (auto& v : box.hi) v += delta;
            LipJet blended = lip_extend_blend(LipJet{rep.g, S.gamma, {}, 0, S.C}, {box}, delta / 2.0);
            FieldJet f{d1 + d2, d1, d2, blended.fn.f, S.gamma, {}};
            ClassicalRoughPath Y;
            try {
                Y = solve_rde_signal_dep(U, f, w_n, opt.rde, &sol.rde);
            } catch (const numeric_error&) {
                step *= 0.5;
                continue;
            }
            // support must stay in the delta-box around the entry point
            bool inside = true;
            for (double tt : Y.times) {
                const Vec pos = Y.position(tt);
                for (std::size_t k = 0; k < pos.size() && inside; ++k)
                    if (std::abs(pos[k] - z_n[k]) > delta) inside = false;
                if (!inside) break;
            }
            if (!inside) {
                step *= 0.5;
                continue;
            }
            MSegment seg;
            seg.t0 = t;
            seg.t1 = b;
            seg.chart = product_chart_index(S, ci, cj);
            seg.z0 = z_n;
            seg.Z = Y;
            sol.Z.segments.push_back(std::move(seg));
            const Vec z_end = sol.Z.segments.back().Z.end_position();
            x_cur = N.charts[static_cast<std::size_t>(ci)].inv.value(
                Vec(z_end.begin(), z_end.begin() + d1));
            y_cur = M.charts[static_cast<std::size_t>(cj)].inv.value(
                Vec(z_end.begin() + d1, z_end.end()));
            t = b;
            placed = true;
            if (retry > 0) sol.halvings += static_cast<std::size_t>(retry);
        }
        if (!placed)
            throw numeric_error("solve_manifold_rde: support keeps escaping after retries");
    }
    return sol;
}

// ---------------------------------------------------------------------------
// verification
// ---------------------------------------------------------------------------

struct MrdeVerify {
    bool ok = true;
    double start_err = 0.0;
    double signal_resid = 0.0;  // worst probe residual of the recovered signal
    double fixed_resid = 0.0;   // worst probe residual of the substitution law
    std::string witness;
};

namespace detail {

// bumped ambient coordinate one-forms: for each ambient coordinate k, the
// rows chi(x) dx_k and chi(x) x_k dx_k with chi a box cutoff that equals 1 on
// a region covering the trace; pulled back per chart, these are globally
// consistent manifold one-forms
inline std::vector<OneFormJet> ambient_probe_forms(int amb, double r_in, double r_out,
                                                   double gamma, std::size_t max_probes) {
    std::vector<OneFormJet> probes;
    JetFn bump = jet_box_cutoff(Vec(static_cast<std::size_t>(amb), 0.0), r_in, r_out);
    for (int c = 0; c < amb && probes.size() < max_probes; ++c) {
        for (int variant = 0; variant < 2 && probes.size() < max_probes; ++variant) {
            auto bf = bump.f;
            probes.push_back(OneFormJet::from_map(
                amb, 1,
                [bf, c, amb, variant](const std::vector<Jet2>& x) {
                    std::vector<Jet2> row(static_cast<std::size_t>(amb),
                                          Jet2::constant(0.0, x[0].n, x[0].ord));
                    Jet2 w = bf(x)[0];
                    if (variant == 1) w = w * x[static_cast<std::size_t>(c)];
                    row[static_cast<std::size_t>(c)] = w;
                    return row;
                },
                gamma));
        }
    }
    return probes;
}

}  // namespace detail

inline MrdeVerify verify_solution(const ManifoldRdeSolution& sol, const ConnectionSpec& S,
                                  const ManifoldRoughPath& X, double tol_signal = 1e-7,
                                  double tol_fixed = 1e-6, std::size_t max_probes = 64,
                                  SewOptions probe_sew = SewOptions{1e-11, 22, 0}) {
    MrdeVerify rep;
    const Atlas& P = *sol.Z.atlas;
    const int aN = S.N->ambient;

    for (std::size_t k = 0; k < sol.x0.size(); ++k)
        rep.start_err = std::max(rep.start_err, std::abs(sol.Z.start[k] - sol.x0[k]));
    for (std::size_t k = 0; k < sol.y0.size(); ++k)
        rep.start_err = std::max(rep.start_err,
                                 std::abs(sol.Z.start[sol.x0.size() + k] - sol.y0[k]));
    if (rep.start_err > 1e-12) {
        rep.ok = false;
        rep.witness = "initial point mismatch";
    }

    // bump radius covering the trace
    double rmax = 1.0;
    for (const auto& m : support(sol.Z))
        for (double v : m) rmax = std::max(rmax, std::abs(v));
    const double gprobe = std::min(X.gamma, S.gamma) - 1.0;
    const SewOptions tight = probe_sew;

    // signal recovery: probes depending only on the signal ambient block
    for (const auto& q :
         detail::ambient_probe_forms(aN, rmax + 0.5, rmax + 1.0, gprobe, max_probes)) {
        ManifoldOneForm beta;
        beta.dim_out = 1;
        beta.gamma = gprobe;
        beta.charts = pullback_one_form(*S.N, jet_identity(aN), q);
        auto qf = q.jet.fn.f;
        OneFormJet lift_amb = OneFormJet::from_map(
            P.ambient, 1,
            [qf, aN, amb = P.ambient](const std::vector<Jet2>& x) {
                std::vector<Jet2> xu(x.begin(), x.begin() + aN);
                std::vector<Jet2> row = qf(xu);
                row.resize(static_cast<std::size_t>(amb),
                           Jet2::constant(0.0, x[0].n, x[0].ord));
                return row;
            },
            gprobe);
        ManifoldOneForm lifted;
        lifted.dim_out = 1;
        lifted.gamma = gprobe;
        lifted.charts = pullback_one_form(P, jet_identity(P.ambient), lift_amb);
        ClassicalRoughPath EX = evaluate(X, beta, tight);
        ClassicalRoughPath EZ = evaluate(sol.Z, lifted, tight);
        EX.start = EZ.start;
        const double r = d_p(EX, EZ);
        if (r > rep.signal_resid) {
            rep.signal_resid = r;
            if (r > tol_signal) {
                rep.ok = false;
                rep.witness = "signal probe residual";
            }
        }
    }

    // fixed point: evaluation agrees before and after substitution
    for (const auto& q : detail::ambient_probe_forms(P.ambient, rmax + 0.5, rmax + 1.0, gprobe,
                                                     max_probes)) {
        ManifoldOneForm alpha;
        alpha.dim_out = 1;
        alpha.gamma = gprobe;
        alpha.charts = pullback_one_form(P, jet_identity(P.ambient), q);
        ManifoldOneForm ag = alpha_gamma(alpha, S);
        ClassicalRoughPath E1 = evaluate(sol.Z, alpha, tight);
        ClassicalRoughPath E2 = evaluate(sol.Z, ag, tight);
        const double r = d_p(E1, E2);
        if (r > rep.fixed_resid) {
            rep.fixed_resid = r;
            if (r > tol_fixed) {
                rep.ok = false;
                rep.witness = "substitution probe residual";
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json connection_to_json(const ConnectionSpec& S) {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& r : S.reps) {
        if (r.exprs.empty())
            throw domain_error("connection_to_json: representation has no expression form");
        reps.push_back({{"chartN", S.N->charts[static_cast<std::size_t>(r.chartN)].id},
                        {"chartM", S.M->charts[static_cast<std::size_t>(r.chartM)].id},
                        {"expr", r.exprs}});
    }
    return {{"N", atlas_to_json(*S.N)},
            {"M", atlas_to_json(*S.M)},
            {"gamma", S.gamma},
            {"C", S.C},
            {"reps", reps}};
}

inline ConnectionSpec connection_from_json(const nlohmann::json& j) {
    ConnectionSpec S;
    S.N = std::make_shared<Atlas>(atlas_from_json(j.at("N")));
    S.M = std::make_shared<Atlas>(atlas_from_json(j.at("M")));
    S.gamma = j.at("gamma").get<double>();
    S.C = j.at("C").get<double>();
    auto chart_index = [](const Atlas& A, const std::string& id) {
        for (std::size_t k = 0; k < A.charts.size(); ++k)
            if (A.charts[k].id == id) return static_cast<int>(k);
        throw domain_error("connection_from_json: unknown chart id " + id);
    };
    const int d1 = S.N->dim, d2 = S.M->dim;
    for (const auto& r : j.at("reps")) {
        ConnectionRep rep;
        rep.chartN = chart_index(*S.N, r.at("chartN").get<std::string>());
        rep.chartM = chart_index(*S.M, r.at("chartM").get<std::string>());
        rep.exprs = r.at("expr").get<std::vector<std::string>>();
        if (static_cast<int>(rep.exprs.size()) != d2 * d1)
            throw shape_error("connection_from_json: expected " + std::to_string(d2 * d1) +
                              " matrix entries");
        rep.g = compile_exprs(rep.exprs, d1 + d2);
        S.reps.push_back(std::move(rep));
    }
    return S;
}

}  // namespace rp

#endif
