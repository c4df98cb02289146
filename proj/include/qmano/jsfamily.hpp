#pragma once

// The Jimbo-Sakai local data (rho_1, rho_2; sigma_1, sigma_2; x_1..x_4) with
// the validity conditions (FR), (NR), per-pair (NS) and Hyp8/Hyp48; the space
// F_{R,S,x} of monodromy matrices M (2x2 of V_{2,rho_i/sigma_j} elements with
// det M vanishing on the x-spirals); the diagonal gauge action M -> G M D^-1;
// the projective invariants Pi_{i,j} (columns) and Pi'_{i,j} (rows);
// reducibility and the sixteen special lines; and an independent generator of
// family members through the quadric-intersection construction.

#include <array>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qmano/projective.hpp"
#include "qmano/qspaces.hpp"
#include "qmano/random.hpp"
#include "qmano/smallmat.hpp"

namespace qmano {

// ---------------------------------------------------------------------------
// Pairs of singularity indices (1-based, i < j).

struct PairIdx {
    int i = 1, j = 2;
    bool operator==(const PairIdx&) const = default;
};

inline constexpr std::array<PairIdx, 6> kAllPairs = {
    {{1, 2}, {1, 3}, {1, 4}, {2, 3}, {2, 4}, {3, 4}}};

inline int pair_index(PairIdx p) {
    for (int t = 0; t < 6; ++t)
        if (kAllPairs[t].i == p.i && kAllPairs[t].j == p.j) return t;
    throw DomainError("pair_index: need 1 <= i < j <= 4");
}

inline PairIdx complement_pair(PairIdx p) {
    std::array<bool, 5> used{};
    used[p.i] = used[p.j] = true;
    PairIdx c{0, 0};
    for (int t = 1; t <= 4; ++t) {
        if (used[t]) continue;
        if (c.i == 0) c.i = t;
        else c.j = t;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Local data.

struct LocalData {
    QParam qp;
    std::array<cplx, 2> rho;
    std::array<cplx, 2> sigma;
    std::array<cplx, 4> xs;

    LocalData(QParam qp_, std::array<cplx, 2> rho_, std::array<cplx, 2> sigma_,
              std::array<cplx, 4> xs_)
        : qp(qp_), rho(rho_), sigma(sigma_), xs(xs_) {
        for (auto v : rho)
            if (v == cplx(0.0, 0.0)) throw DomainError("LocalData: rho entry is zero");
        for (auto v : sigma)
            if (v == cplx(0.0, 0.0)) throw DomainError("LocalData: sigma entry is zero");
        for (auto v : xs)
            if (v == cplx(0.0, 0.0)) throw DomainError("LocalData: x entry is zero");
    }

    cplx x(int i) const { return xs[i - 1]; }          // 1-based
    cplx rho_at(int h) const { return rho[h - 1]; }    // 1-based
    cplx sigma_at(int h) const { return sigma[h - 1]; }

    cplx x_product() const { return xs[0] * xs[1] * xs[2] * xs[3]; }
    cplx rho_sigma_ratio() const { return rho[0] * rho[1] / (sigma[0] * sigma[1]); }

    // class a = rho_1 rho_2 / (x_i x_j) attached to a pair (det class of C)
    cplx det_class(PairIdx p) const { return rho[0] * rho[1] / (x(p.i) * x(p.j)); }
};

// x_i x_j == rho_m / sigma_n (mod q^Z); by (FR) the complementary congruence
// follows automatically.
struct Splitting {
    PairIdx pair;
    int m = 1, n = 1;
};

struct ValidityReport {
    bool fr = false;
    long fr_shift = 0;  // x1 x2 x3 x4 * q^fr_shift = rho1 rho2 / (sigma1 sigma2)
    bool nr = false;
    std::vector<std::string> nr_failures;
    std::array<bool, 6> ns{};    // per pair, kAllPairs order
    std::array<bool, 6> hyp8{};  // per pair
    bool hyp48 = false;
    bool has_splitting = false;
    std::vector<Splitting> splittings;

    bool ok() const { return fr && nr; }
    bool pair_ok(PairIdx p) const {
        int t = pair_index(p);
        return ok() && ns[t] && hyp8[t];
    }
};

// Xi' = { R(-rho_h / x_m) : m in pair }, Xi'' = { R(-sigma_h x_m) : m in
// complement }; Hyp8 asks that all eight classes be pairwise distinct.
inline std::array<cplx, 4> xi_prime_values(const LocalData& d, PairIdx p) {
    return {annulus_rep(d.qp, -d.rho[0] / d.x(p.i)).value,
            annulus_rep(d.qp, -d.rho[0] / d.x(p.j)).value,
            annulus_rep(d.qp, -d.rho[1] / d.x(p.i)).value,
            annulus_rep(d.qp, -d.rho[1] / d.x(p.j)).value};
}

inline std::array<cplx, 4> xi_second_values(const LocalData& d, PairIdx p) {
    PairIdx c = complement_pair(p);
    return {annulus_rep(d.qp, -d.sigma[0] * d.x(c.i)).value,
            annulus_rep(d.qp, -d.sigma[0] * d.x(c.j)).value,
            annulus_rep(d.qp, -d.sigma[1] * d.x(c.i)).value,
            annulus_rep(d.qp, -d.sigma[1] * d.x(c.j)).value};
}

inline ValidityReport validate(const LocalData& d) {
    ValidityReport r;
    const QParam& qp = d.qp;

    auto fr = congruent(qp, d.rho_sigma_ratio(), d.x_product());
    r.fr = fr.has_value();
    r.fr_shift = fr.value_or(0);

    r.nr = true;
    auto fail = [&](const std::string& what) {
        r.nr = false;
        r.nr_failures.push_back(what);
    };
    if (congruent(qp, d.rho[0], d.rho[1])) fail("rho1/rho2 in q^Z");
    if (congruent(qp, d.sigma[0], d.sigma[1])) fail("sigma1/sigma2 in q^Z");
    for (int k = 1; k <= 4; ++k)
        for (int l = k + 1; l <= 4; ++l)
            if (congruent(qp, d.x(k), d.x(l))) {
                std::ostringstream os;
                os << "x" << k << "/x" << l << " in q^Z";
                fail(os.str());
            }

    // splittings over the three partitions and all four (m,n)
    for (int t = 0; t < 3; ++t) {
        PairIdx p = kAllPairs[t];  // (1,2),(1,3),(1,4) cover all partitions
        for (int m = 1; m <= 2; ++m)
            for (int n = 1; n <= 2; ++n)
                if (congruent(qp, d.x(p.i) * d.x(p.j), d.rho_at(m) / d.sigma_at(n)))
                    r.splittings.push_back({p, m, n});
    }
    r.has_splitting = !r.splittings.empty();

    for (int t = 0; t < 6; ++t) {
        PairIdx p = kAllPairs[t];
        bool ns = true;
        for (int m = 1; m <= 2; ++m)
            for (int n = 1; n <= 2; ++n)
                if (congruent(qp, d.x(p.i) * d.x(p.j), d.rho_at(m) / d.sigma_at(n)))
                    ns = false;
        r.ns[t] = ns;

        auto xp = xi_prime_values(d, p);
        auto xs2 = xi_second_values(d, p);
        std::array<cplx, 8> xi = {xp[0], xp[1], xp[2], xp[3], xs2[0], xs2[1], xs2[2], xs2[3]};
        bool distinct = true;
        for (int u = 0; u < 8 && distinct; ++u)
            for (int v = u + 1; v < 8; ++v)
                if (congruent(qp, xi[u], xi[v])) {
                    distinct = false;
                    break;
                }
        r.hyp8[t] = distinct;
    }
    r.hyp48 = true;
    for (bool h : r.hyp8) r.hyp48 = r.hyp48 && h;
    return r;
}

// ---------------------------------------------------------------------------
// Monodromy matrices.

struct MonodromyMatrix {
    LocalData local;
    std::vector<VElement> entries;  // row-major m11 m12 m21 m22

    MonodromyMatrix(LocalData local_, VElement m11, VElement m12, VElement m21,
                    VElement m22)
        : local(std::move(local_)), entries{std::move(m11), std::move(m12),
                                            std::move(m21), std::move(m22)} {
        for (int i = 1; i <= 2; ++i)
            for (int j = 1; j <= 2; ++j) {
                const VElement& e = m(i, j);
                if (e.k != 2) throw SpaceMismatchError("MonodromyMatrix: entries have k=2");
                if (!e.is_zero()) {
                    cplx want = local.rho[i - 1] / local.sigma[j - 1];
                    if (std::abs(e.exact_char() - want) > 1e-8 * std::abs(want))
                        throw SpaceMismatchError(
                            "MonodromyMatrix: entry character differs from rho_i/sigma_j");
                }
            }
    }

    const VElement& m(int i, int j) const { return entries[2 * (i - 1) + (j - 1)]; }
    VElement& m(int i, int j) { return entries[2 * (i - 1) + (j - 1)]; }

    Mat2 eval(cplx x) const {
        return {v_eval(m(1, 1), x), v_eval(m(1, 2), x), v_eval(m(2, 1), x),
                v_eval(m(2, 2), x)};
    }

    // det M = m11 m22 - m12 m21 as an element of W = V_{4, rho1 rho2/(sigma1 sigma2)}.
    VSum det_sum() const {
        cplx c = local.rho_sigma_ratio();
        VSum s(local.qp, 4, c);
        if (!m(1, 1).is_zero() && !m(2, 2).is_zero()) s.add(product_map(m(1, 1), m(2, 2)));
        if (!m(1, 2).is_zero() && !m(2, 1).is_zero()) {
            VElement t = product_map(m(1, 2), m(2, 1));
            t.scale = -t.scale;
            s.add(t);
        }
        return s;
    }

    double entry_scale() const {
        double s = 0.0;
        for (const auto& e : entries) s = std::max(s, std::abs(e.scale));
        return s;
    }
};

struct GaugePair {
    std::array<cplx, 2> gamma;
    std::array<cplx, 2> delta;

    GaugePair(std::array<cplx, 2> g, std::array<cplx, 2> d) : gamma(g), delta(d) {
        for (auto v : gamma)
            if (v == cplx(0.0, 0.0)) throw DomainError("GaugePair: zero gamma entry");
        for (auto v : delta)
            if (v == cplx(0.0, 0.0)) throw DomainError("GaugePair: zero delta entry");
    }
};

// Left action M -> Gamma M Delta^{-1}: lambda_ij <- (gamma_i/delta_j) lambda_ij.
inline MonodromyMatrix gauge_apply(const MonodromyMatrix& M, const GaugePair& g) {
    MonodromyMatrix out = M;
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j)
            out.m(i, j).scale *= g.gamma[i - 1] / g.delta[j - 1];
    return out;
}

// ---------------------------------------------------------------------------
// det profile: det M = C x^m prod_i theta(-x/x_i), m the (FR) shift.

struct DetProfile {
    cplx C{};
    double max_residual = 0.0;
    long fr_shift = 0;
};

// The comparison element x^m prod theta(-x/x_i) evaluated at x.
inline cplx det_reference(const LocalData& d, long fr_shift, cplx x) {
    cplx u = ipow(x, fr_shift);
    for (int i = 1; i <= 4; ++i) u *= theta(d.qp, -x / d.x(i));
    return u;
}

// det M is evaluated through the entries, so it carries cancellation noise of
// order eps * |m11 m22|. The probe points are therefore ranked by the size of
// the reference u(x) against that noise, and the 16 best of 48 candidates are
// kept; constants |C| below the resulting noise floor (~1e-12 relative to the
// entry scale) are indistinguishable from a degenerate determinant.
inline DetProfile det_profile(const MonodromyMatrix& M, double tol = 1e-7) {
    const LocalData& d = M.local;
    auto fr = congruent(d.qp, d.rho_sigma_ratio(), d.x_product());
    if (!fr) throw DomainError("det_profile: local data violates (FR)");
    DetProfile out;
    out.fr_shift = *fr;

    std::vector<cplx> avoid;
    for (int i = 1; i <= 4; ++i) avoid.push_back(d.x(i));  // zero classes of u
    std::vector<cplx> candidates = probe_points(d.qp, 24, 0.29, avoid, 0.04);
    for (auto x : probe_points(d.qp, 24, 0.71, avoid, 0.04)) candidates.push_back(x);

    VSum det = M.det_sum();
    struct Sample {
        cplx ratio;
        double quality;
        double dv_abs;
        double part;
    };
    std::vector<Sample> samples;
    samples.reserve(candidates.size());
    for (const auto& x : candidates) {
        cplx dv = det.eval(x).f;
        double part = 0.0;
        for (const auto& t : det.terms) part = std::max(part, std::abs(v_eval(t, x)));
        cplx u = det_reference(d, out.fr_shift, x);
        samples.push_back({dv / u, std::abs(u) / (part + 1e-300), std::abs(dv), part});
    }
    std::sort(samples.begin(), samples.end(),
              [](const Sample& a, const Sample& b) { return a.quality > b.quality; });
    samples.resize(16);

    double det_rel = 0.0;
    for (const auto& s : samples) det_rel = std::max(det_rel, s.dv_abs / (s.part + 1e-300));
    if (det_rel <= 1e-12)
        throw DomainError("det_profile: det M is (numerically) identically zero");

    cplx mean(0.0, 0.0);
    for (const auto& s : samples) mean += s.ratio;
    mean /= static_cast<double>(samples.size());
    out.C = mean;
    for (const auto& s : samples)
        out.max_residual =
            std::max(out.max_residual, std::abs(s.ratio - mean) / std::abs(mean));
    if (out.max_residual > tol) {
        std::ostringstream os;
        os << "det_profile: det M is not proportional to x^m prod theta(-x/x_i); "
           << "max relative residual " << out.max_residual;
        throw DecompositionError(os.str());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rank-1 values at the singularities; columns, rows, projective invariants.

// Nonzero column of M(x_i): the larger-norm column (ties -> column 1), or a
// forced column index (1/2) for testing selection independence.
inline std::array<cplx, 2> nonzero_column(const MonodromyMatrix& M, int i,
                                          int force_col = 0) {
    Mat2 v = M.eval(M.local.x(i));
    double nf = v.frobenius();
    if (nf <= 1e-14 * M.entry_scale())
        throw DecompositionError("nonzero_column: M(x_i) = 0 contradicts a simple zero");
    if (std::abs(v.det()) > 1e-8 * nf * nf)
        throw DecompositionError("nonzero_column: M(x_i) is not rank one");
    double n1 = std::sqrt(std::norm(v.m11) + std::norm(v.m21));
    double n2 = std::sqrt(std::norm(v.m12) + std::norm(v.m22));
    int sel;
    if (force_col == 1 || force_col == 2) sel = force_col;
    else sel = (n2 > n1 * (1.0 + 1e-12)) ? 2 : 1;
    auto col = v.col(sel - 1);
    double nsel = std::sqrt(std::norm(col[0]) + std::norm(col[1]));
    if (nsel <= 1e-12 * nf)
        throw DecompositionError("nonzero_column: selected column vanishes");
    // the other column must be proportional (rank 1)
    auto other = v.col(2 - sel);
    cplx cross = col[0] * other[1] - col[1] * other[0];
    if (std::abs(cross) > 1e-8 * nf * nf)
        throw DecompositionError("nonzero_column: columns not proportional");
    return col;
}

inline std::array<cplx, 2> nonzero_row(const MonodromyMatrix& M, int i, int force_row = 0) {
    Mat2 v = M.eval(M.local.x(i));
    double nf = v.frobenius();
    if (nf <= 1e-14 * M.entry_scale())
        throw DecompositionError("nonzero_row: M(x_i) = 0 contradicts a simple zero");
    if (std::abs(v.det()) > 1e-8 * nf * nf)
        throw DecompositionError("nonzero_row: M(x_i) is not rank one");
    double n1 = std::sqrt(std::norm(v.m11) + std::norm(v.m12));
    double n2 = std::sqrt(std::norm(v.m21) + std::norm(v.m22));
    int sel;
    if (force_row == 1 || force_row == 2) sel = force_row;
    else sel = (n2 > n1 * (1.0 + 1e-12)) ? 2 : 1;
    auto row = v.row(sel - 1);
    double nsel = std::sqrt(std::norm(row[0]) + std::norm(row[1]));
    if (nsel <= 1e-12 * nf)
        throw DecompositionError("nonzero_row: selected row vanishes");
    return row;
}

// Pi_{i,j}(M) = (f_i g_j : f_j g_i) from nonzero columns of M(x_i), M(x_j).
inline ProjectivePoint pi_invariant(const MonodromyMatrix& M, int i, int j,
                                    int force_col_i = 0, int force_col_j = 0) {
    if (i == j) throw DomainError("pi_invariant: need i != j");
    auto ci = nonzero_column(M, i, force_col_i);
    auto cj = nonzero_column(M, j, force_col_j);
    cplx num = ci[0] * cj[1];
    cplx den = cj[0] * ci[1];
    double scale = std::sqrt((std::norm(ci[0]) + std::norm(ci[1])) *
                             (std::norm(cj[0]) + std::norm(cj[1])));
    if (std::abs(num) <= 1e-13 * scale && std::abs(den) <= 1e-13 * scale)
        throw ProjectiveAmbiguityError("pi_invariant: both products below tolerance");
    return ProjectivePoint::make(num, den);
}

// Pi'_{i,j}(M) = (u_i v_j : u_j v_i) from nonzero rows.
inline ProjectivePoint pi_prime(const MonodromyMatrix& M, int i, int j,
                                int force_row_i = 0, int force_row_j = 0) {
    if (i == j) throw DomainError("pi_prime: need i != j");
    auto ri = nonzero_row(M, i, force_row_i);
    auto rj = nonzero_row(M, j, force_row_j);
    cplx num = ri[0] * rj[1];
    cplx den = rj[0] * ri[1];
    double scale = std::sqrt((std::norm(ri[0]) + std::norm(ri[1])) *
                             (std::norm(rj[0]) + std::norm(rj[1])));
    if (std::abs(num) <= 1e-13 * scale && std::abs(den) <= 1e-13 * scale)
        throw ProjectiveAmbiguityError("pi_prime: both products below tolerance");
    return ProjectivePoint::make(num, den);
}

// The transpose lives in the family with local data (1/sigma, 1/rho, x);
// its Pi equals Pi' of the original.
inline MonodromyMatrix transpose_dual(const MonodromyMatrix& M) {
    const LocalData& d = M.local;
    LocalData dual(d.qp, {cplx(1.0, 0.0) / d.sigma[0], cplx(1.0, 0.0) / d.sigma[1]},
                   {cplx(1.0, 0.0) / d.rho[0], cplx(1.0, 0.0) / d.rho[1]}, d.xs);
    return MonodromyMatrix(dual, M.m(1, 1), M.m(2, 1), M.m(1, 2), M.m(2, 2));
}

// ---------------------------------------------------------------------------
// Reducibility and line membership.

struct ReducibilityReport {
    bool reducible = false;
    std::vector<std::pair<int, int>> zero_entries;  // (i,j), 1-based
};

inline ReducibilityReport reducible(const MonodromyMatrix& M) {
    ReducibilityReport r;
    double s = M.entry_scale();
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j)
            if (M.m(i, j).is_zero() || std::abs(M.m(i, j).scale) <= 1e-12 * s) {
                r.reducible = true;
                r.zero_entries.push_back({i, j});
            }
    return r;
}

enum class LineKind { Rho, Sigma };

// L_{rho_h, x_i}: row h of M(x_i) is null. L_{sigma_h, x_i}: column h is null.
inline bool line_membership(const MonodromyMatrix& M, LineKind kind, int h, int i,
                            double tol = 1e-7) {
    Mat2 v = M.eval(M.local.x(i));
    double nf = v.frobenius();
    auto vec = (kind == LineKind::Rho) ? v.row(h - 1) : v.col(h - 1);
    double n = std::sqrt(std::norm(vec[0]) + std::norm(vec[1]));
    return n <= tol * nf;
}

// ---------------------------------------------------------------------------
// Independent generator: pick f1 = m11 m22 in Sigma_1, intersect the
// punctured affine line f1 + lambda u with the quadric Sigma_2, factor both.

struct GenerateQuadricResult {
    std::optional<MonodromyMatrix> matrix;
    bool tangent = false;       // the two intersection points coincide
    int attempts = 0;
    std::string note;
};

namespace detail {

// coordinates of h on the rank-1 product basis of V_{2,a} x V_{2,b}
inline std::vector<cplx> quadric_coordinates(const QParam& qp, cplx a, cplx b,
                                             const AnalyticFn& fn) {
    cplx alpha = std::sqrt(a), beta = std::sqrt(b);
    VElement u1(qp, 2, a, cplx(1.0, 0.0), {alpha, a / alpha});
    VElement u2(qp, 2, a, cplx(1.0, 0.0), {-alpha, -a / alpha});
    VElement v1(qp, 2, b, cplx(1.0, 0.0), {beta, b / beta});
    VElement v2(qp, 2, b, cplx(1.0, 0.0), {-beta, -b / beta});
    std::vector<VElement> basis = {product_map(u1, v1), product_map(u1, v2),
                                   product_map(u2, v1), product_map(u2, v2)};
    auto probes = probe_points(qp, 4, 0.43, {alpha, -alpha, beta, -beta}, 0.02);
    std::vector<cplx> A(16), rhs(4);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) A[i * 4 + j] = v_eval(basis[j], probes[i]);
        rhs[i] = fn(probes[i]).f;
    }
    return solve_dense(std::move(A), std::move(rhs));
}

inline VElement random_space_element(Rng& rng, const QParam& qp, cplx a_exact) {
    cplx r1 = rng.annulus_point(qp);
    return VElement(qp, 2, a_exact, rng.generic_scale(), {r1, a_exact / r1});
}

}  // namespace detail

inline GenerateQuadricResult generate_quadric(const LocalData& d, std::uint64_t seed) {
    auto rep = validate(d);
    if (!rep.ok()) throw DomainError("generate_quadric: local data fails (FR)/(NR)");
    const QParam& qp = d.qp;
    cplx a1 = d.rho[0] / d.sigma[0], b1 = d.rho[1] / d.sigma[1];
    cplx a2 = d.rho[0] / d.sigma[1], b2 = d.rho[1] / d.sigma[0];
    cplx c = d.rho_sigma_ratio();

    Rng rng(seed);
    GenerateQuadricResult out;
    for (int attempt = 0; attempt < 24; ++attempt) {
        out.attempts = attempt + 1;
        VElement m11 = detail::random_space_element(rng, qp, a1);
        VElement m22 = detail::random_space_element(rng, qp, b1);
        VElement f1 = product_map(m11, m22);

        // u = x^m prod theta(-x/x_i) brought to exact character c by a q-shift
        // on the last root (same zero spirals).
        std::vector<cplx> ur = {-d.x(1), -d.x(2), -d.x(3), -d.x(4)};
        cplx uprod = ur[0] * ur[1] * ur[2] * ur[3];
        ur[3] *= ipow(qp.q, rep.fr_shift);
        ur[3] *= c / (uprod * ipow(qp.q, rep.fr_shift));
        VElement u(qp, 4, c, cplx(1.0, 0.0), ur);

        // quadric equation along f1 - lambda u: quadratic in lambda
        auto coords = [&](cplx lam) {
            VSum s(f1);
            VElement lu = u;
            lu.scale = -lam;
            s.add(lu);
            return detail::quadric_coordinates(qp, a2, b2, s.as_fn());
        };
        auto qform = [](const std::vector<cplx>& v) { return v[0] * v[3] - v[1] * v[2]; };
        cplx F0 = qform(coords(cplx(0.0, 0.0)));
        cplx Fp = qform(coords(cplx(1.0, 0.0)));
        cplx Fm = qform(coords(cplx(-1.0, 0.0)));
        cplx A = 0.5 * (Fp + Fm) - F0;
        cplx B = 0.5 * (Fp - Fm);
        cplx C0 = F0;

        std::vector<cplx> lambdas;
        double scale = std::max({std::abs(A), std::abs(B), std::abs(C0)});
        if (scale == 0.0) continue;
        if (std::abs(A) <= 1e-12 * scale) {
            if (std::abs(B) <= 1e-12 * scale) continue;
            lambdas.push_back(-C0 / B);
        } else {
            cplx disc = B * B - 4.0 * A * C0;
            out.tangent = std::abs(disc) <= 1e-10 * scale * scale;
            cplx sq = std::sqrt(disc);
            lambdas.push_back((-B + sq) / (2.0 * A));
            lambdas.push_back((-B - sq) / (2.0 * A));
        }

        for (cplx lam : lambdas) {
            if (std::abs(lam) <= 1e-10) continue;  // the line is punctured at f1
            try {
                VSum s(f1);
                VElement lu = u;
                lu.scale = -lam;
                s.add(lu);
                VElement f2 = refactor(as_sampled(s));
                auto split = quadric_factor(f2, a2, b2, a2);
                if (!split) continue;
                MonodromyMatrix M(d, m11, split->first, split->second, m22);
                det_profile(M);  // final membership verification
                out.matrix = std::move(M);
                return out;
            } catch (const Error&) {
                continue;
            }
        }
        out.note = "no admissible intersection for this seed draw";
    }
    return out;
}

}  // namespace qmano
