#pragma once

// Finite-dimensional solution spaces V_{k,a} = { f holomorphic on C* :
// sigma_q f = a x^{-k} f }. Elements are kept in factored theta form
// lambda * prod_i theta(x/alpha_i); the exact character prod_i alpha_i is
// the eigenvalue of the functional equation and is tracked exactly so that
// long pipelines do not drift across q-shifts. Coefficient form against the
// canonical basis theta(x/alpha)^k is computed on demand.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "qmano/errors.hpp"
#include "qmano/qcore.hpp"
#include "qmano/smallmat.hpp"
#include "qmano/zeros.hpp"

namespace qmano {

struct VElement {
    QParam qp;
    int k = 1;
    cplx a{1.0, 0.0};          // nominal character (exact char = a * q^shift)
    cplx scale{0.0, 0.0};      // lambda; scale == 0 is the zero element
    std::vector<cplx> roots;   // theta arguments alpha_1..alpha_k
    std::optional<std::vector<cplx>> coeffs;  // on the canonical basis, on demand

    VElement(QParam qp_, int k_, cplx a_, cplx scale_, std::vector<cplx> roots_)
        : qp(qp_), k(k_), a(a_), scale(scale_), roots(std::move(roots_)) {
        if (k <= 0) throw DomainError("VElement: k must be positive");
        if (static_cast<int>(roots.size()) != k)
            throw DomainError("VElement: need exactly k roots");
        for (const auto& r : roots)
            if (r == cplx(0.0, 0.0)) throw DomainError("VElement: zero root");
        if (scale != cplx(0.0, 0.0)) {
            if (!congruent(qp, exact_char(), a))
                throw SpaceMismatchError("VElement: prod(roots) not congruent to a");
        }
    }

    static VElement zero(const QParam& qp_, int k_, cplx a_) {
        std::vector<cplx> rts(k_, cplx(1.0, 0.0));
        VElement e(qp_, k_, a_, cplx(0.0, 0.0), std::move(rts));
        return e;
    }

    bool is_zero() const { return scale == cplx(0.0, 0.0); }

    cplx exact_char() const {
        cplx p(1.0, 0.0);
        for (const auto& r : roots) p *= r;
        return p;
    }

    // Integer m with prod(roots) = a q^m.
    long shift() const {
        if (is_zero()) return 0;
        auto m = congruent(qp, exact_char(), a);
        if (!m) throw SpaceMismatchError("VElement: character drifted off a q^Z");
        return *m;
    }

    // Zero classes in C_q (the divisor): R(-alpha_i), multiplicity by repetition.
    std::vector<AnnulusPoint> divisor() const {
        std::vector<AnnulusPoint> d;
        d.reserve(roots.size());
        for (const auto& r : roots) d.push_back(annulus_rep(qp, -r));
        return d;
    }
};

inline cplx v_eval(const VElement& f, cplx x) {
    if (x == cplx(0.0, 0.0)) throw DomainError("v_eval: x = 0");
    if (f.is_zero()) return cplx(0.0, 0.0);
    cplx p = f.scale;
    for (const auto& r : f.roots) p *= theta(f.qp, x / r);
    return p;
}

inline FnEval v_eval_with_deriv(const VElement& f, cplx x) {
    if (f.is_zero()) return {cplx(0.0, 0.0), cplx(0.0, 0.0)};
    const int k = f.k;
    cplx vals[8], ders[8];
    for (int i = 0; i < k; ++i) {
        theta_with_deriv(f.qp, x / f.roots[i], vals[i], ders[i]);
        ders[i] /= f.roots[i];  // d/dx theta(x/alpha)
    }
    cplx value = f.scale;
    for (int i = 0; i < k; ++i) value *= vals[i];
    cplx deriv(0.0, 0.0);
    for (int i = 0; i < k; ++i) {
        cplx t = f.scale * ders[i];
        for (int j = 0; j < k; ++j)
            if (j != i) t *= vals[j];
        deriv += t;
    }
    return {value, deriv};
}

// A finite linear combination of factored elements of the same V_{k,c}.
struct VSum {
    QParam qp;
    int k;
    cplx exact_char;
    std::vector<VElement> terms;

    explicit VSum(const VElement& f) : qp(f.qp), k(f.k), exact_char(f.exact_char()) {
        terms.push_back(f);
    }
    VSum(QParam qp_, int k_, cplx exact_char_) : qp(qp_), k(k_), exact_char(exact_char_) {}

    void add(const VElement& f) {
        if (f.is_zero()) return;
        if (f.k != k) throw SpaceMismatchError("VSum: mixed degrees");
        if (std::abs(f.exact_char() - exact_char) > 1e-8 * std::abs(exact_char))
            throw SpaceMismatchError("VSum: mixed exact characters");
        terms.push_back(f);
    }

    FnEval eval(cplx x) const {
        FnEval s{cplx(0.0, 0.0), cplx(0.0, 0.0)};
        for (const auto& t : terms) {
            FnEval e = v_eval_with_deriv(t, x);
            s.f += e.f;
            s.df += e.df;
        }
        return s;
    }

    AnalyticFn as_fn() const {
        return [copy = *this](cplx x) { return copy.eval(x); };
    }
};

// A holomorphic function known by evaluation, declared to lie in V_{k,exact_char}.
struct SampledV {
    QParam qp;
    int k;
    cplx exact_char;
    AnalyticFn fn;
};

inline SampledV as_sampled(const VSum& s) { return {s.qp, s.k, s.exact_char, s.as_fn()}; }
inline SampledV as_sampled(const VElement& f) {
    return {f.qp, f.k, f.exact_char(), [f](cplx x) { return v_eval_with_deriv(f, x); }};
}

namespace detail {

// Relative distance from x to the q-spiral of s, measured in log scale.
inline double spiral_log_distance(const QParam& qp, cplx x, cplx s) {
    cplx t = annulus_rep(qp, x / s).value;
    double d1 = std::abs(std::log(t));
    double d2 = std::abs(std::log(t / qp.q));
    return std::min(d1, d2);
}

}  // namespace detail

// n deterministic points on |x| = |q|^radius_frac, staying at least min_dist
// (log scale) away from the q-spirals of every point in `avoid`.
inline std::vector<cplx> probe_points(const QParam& qp, int n, double radius_frac,
                                      const std::vector<cplx>& avoid = {},
                                      double min_dist = 0.05) {
    std::vector<cplx> pts;
    double r = std::pow(qp.abs_q(), radius_frac);
    for (int p = 0; p < n; ++p) {
        double phi = 2.0 * M_PI * (p + 0.5) / n + 0.2341;
        cplx x;
        bool ok = false;
        for (int tries = 0; tries < 400 && !ok; ++tries) {
            x = cplx(r * std::cos(phi), r * std::sin(phi));
            ok = true;
            for (const auto& s : avoid)
                if (detail::spiral_log_distance(qp, x, s) < min_dist) {
                    ok = false;
                    phi += 0.0137;
                    break;
                }
        }
        if (!ok) throw ConvergenceError("probe_points: could not dodge the avoid set");
        pts.push_back(x);
    }
    return pts;
}

// All zeros in C_q (with multiplicity, canonical order); checks the degree
// and the product congruence prod(zeros) == (-1)^k a q^Z.
inline std::vector<LocatedZero> find_zeros(const SampledV& f) {
    auto rep = find_zeros_annulus(f.qp, f.fn, f.k);
    cplx prod(1.0, 0.0);
    for (const auto& z : rep.zeros) prod *= z.point.value;
    cplx target = (f.k % 2 == 0 ? f.exact_char : -f.exact_char);
    QParam relaxed = f.qp;
    relaxed.tol_cong = std::max(f.qp.tol_cong, 1e-7);
    if (!congruent(relaxed, prod, target)) {
        std::ostringstream os;
        os << "find_zeros: zero product " << prod << " is not congruent to (-1)^k a = "
           << target;
        throw ConvergenceError(os.str());
    }
    return rep.zeros;
}

inline std::vector<LocatedZero> find_zeros(const VElement& f) {
    if (f.is_zero()) throw DomainError("find_zeros: identically zero element");
    return find_zeros(as_sampled(f));
}

// Rebuild the factored form of a sampled element: locate the k zeros, pick
// theta arguments with the exact character product, fit the scale at one
// probe and verify at eight others.
inline VElement refactor(const SampledV& f) {
    auto zeros = find_zeros(f);
    std::vector<cplx> roots;
    roots.reserve(zeros.size());
    for (const auto& z : zeros) roots.push_back(-z.point.value);
    cplx prod(1.0, 0.0);
    for (const auto& r : roots) prod *= r;
    QParam relaxed = f.qp;
    relaxed.tol_cong = std::max(f.qp.tol_cong, 1e-7);
    auto m = congruent(relaxed, f.exact_char, prod);
    if (!m) throw DecompositionError("refactor: zero product incompatible with character");
    roots[0] *= ipow(f.qp.q, *m);
    // absorb residual floating drift so the functional equation is exact
    prod = cplx(1.0, 0.0);
    for (const auto& r : roots) prod *= r;
    roots[0] *= f.exact_char / prod;

    std::vector<cplx> avoid;
    for (const auto& r : roots) avoid.push_back(-r);
    auto probes = probe_points(f.qp, 9, 0.37, avoid, 0.03);
    VElement out(f.qp, f.k, f.exact_char, cplx(1.0, 0.0), roots);
    cplx lambda = f.fn(probes[0]).f / v_eval(out, probes[0]);
    out.scale = lambda;

    double fscale = 0.0;
    for (const auto& p : probes) fscale = std::max(fscale, std::abs(f.fn(p).f));
    std::ostringstream resid;
    double worst = 0.0;
    for (std::size_t i = 1; i < probes.size(); ++i) {
        double r = std::abs(f.fn(probes[i]).f - v_eval(out, probes[i])) / fscale;
        worst = std::max(worst, r);
        resid << " p" << i << "=" << r;
    }
    if (worst > 1e-7)
        throw DecompositionError("refactor: residuals exceed 1e-7:" + resid.str());
    return out;
}

// Canonical basis theta(x/alpha_j)^k, alpha_j the k-th roots of the exact
// character; interpolation data at k probe angles on |x| = sqrt(|q|).
struct VBasis {
    QParam qp;
    int k;
    cplx a;  // exact character of every basis element
    std::vector<VElement> elements;
    std::vector<cplx> probes;
    double cond = 0.0;  // rough condition estimate of the interpolation matrix
};

inline VBasis make_vbasis(const QParam& qp, int k, cplx a_exact) {
    VBasis b{qp, k, a_exact, {}, {}, 0.0};
    cplx alpha0 = std::exp(std::log(a_exact) / static_cast<double>(k));
    std::vector<cplx> avoid;
    for (int j = 0; j < k; ++j) {
        cplx alpha = alpha0 * std::exp(cplx(0.0, 2.0 * M_PI * j / k));
        std::vector<cplx> roots(k, alpha);
        // enforce the exact product
        cplx prod(1.0, 0.0);
        for (auto& r : roots) prod *= r;
        roots[0] *= a_exact / prod;
        b.elements.emplace_back(qp, k, a_exact, cplx(1.0, 0.0), roots);
        avoid.push_back(-alpha);
    }
    b.probes = probe_points(qp, k, 0.5, avoid, 0.04);
    return b;
}

// Coefficients of the sampled element on the basis (k x k interpolation solve).
inline std::vector<cplx> coefficients_on(const VBasis& basis, const AnalyticFn& fn,
                                         double* cond_out = nullptr) {
    const int k = basis.k;
    std::vector<cplx> A(static_cast<std::size_t>(k) * k);
    std::vector<cplx> rhs(k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) A[i * k + j] = v_eval(basis.elements[j], basis.probes[i]);
        rhs[i] = fn(basis.probes[i]).f;
    }
    double cond = 0.0;
    auto x = solve_dense(std::move(A), std::move(rhs), &cond);
    if (cond_out) *cond_out = cond;
    return x;
}

// Sum of two elements of the same space, returned with both coefficient and
// refactored theta form (the two representations are cross-checked).
inline VElement v_add(const VElement& f, const VElement& g) {
    if (f.k != g.k) throw SpaceMismatchError("v_add: mixed degrees");
    if (f.is_zero()) return g;
    if (g.is_zero()) return f;
    cplx cf = f.exact_char(), cg = g.exact_char();
    if (std::abs(cf - cg) > 1e-8 * std::abs(cf))
        throw SpaceMismatchError(
            "v_add: operands have different exact characters (q-shift mismatch)");

    VSum sum(f);
    sum.add(g);
    auto fn = sum.as_fn();

    // identically-zero detection before invoking the zero finder
    auto samples = probe_points(f.qp, 8, 0.41);
    double sum_mag = 0.0, part_mag = 0.0;
    for (const auto& p : samples) {
        sum_mag = std::max(sum_mag, std::abs(fn(p).f));
        part_mag = std::max(part_mag, std::abs(v_eval(f, p)) + std::abs(v_eval(g, p)));
    }
    if (sum_mag <= 1e-12 * part_mag) {
        auto z = VElement::zero(f.qp, f.k, f.a);
        z.coeffs = std::vector<cplx>(f.k, cplx(0.0, 0.0));
        return z;
    }

    VElement out = refactor(as_sampled(sum));
    out.a = f.a;
    VBasis basis = make_vbasis(f.qp, f.k, cf);
    out.coeffs = coefficients_on(basis, fn);
    // cross-check: factored form reproduces the coefficient form
    for (const auto& p : basis.probes) {
        cplx via_coeffs(0.0, 0.0);
        for (int j = 0; j < f.k; ++j)
            via_coeffs += (*out.coeffs)[j] * v_eval(basis.elements[j], p);
        if (std::abs(via_coeffs - v_eval(out, p)) > 1e-8 * std::max(1.0, std::abs(via_coeffs)))
            throw DecompositionError("v_add: coefficient and factored forms disagree");
    }
    return out;
}

// Pointwise product V_{2,a} x V_{2,b} -> V_{4,ab} (roots concatenate).
inline VElement product_map(const VElement& f, const VElement& g) {
    if (f.is_zero() || g.is_zero())
        return VElement::zero(f.qp, f.k + g.k, f.a * g.a);
    std::vector<cplx> roots = f.roots;
    roots.insert(roots.end(), g.roots.begin(), g.roots.end());
    return VElement(f.qp, f.k + g.k, f.a * g.a, f.scale * g.scale, std::move(roots));
}

inline cplx hyperplane_eval(cplx x0, const VElement& f) { return v_eval(f, x0); }

// Splits a degree-4 element into a V_{2,a} x V_{2,b} pair when its divisor
// splits accordingly; nullopt when no pairing matches, AmbiguousSplitError
// when two distinct pairings match. When exact_a is given the left factor's
// root product is normalized to exactly that value.
inline std::optional<std::pair<VElement, VElement>> quadric_factor(
    const VElement& h, cplx a, cplx b, std::optional<cplx> exact_a = std::nullopt) {
    if (h.is_zero()) throw DomainError("quadric_factor: h = 0");
    if (h.k != 4) throw DomainError("quadric_factor: need degree 4");
    QParam relaxed = h.qp;
    relaxed.tol_cong = std::max(h.qp.tol_cong, 1e-7);
    if (!congruent(relaxed, a * b, h.exact_char()))
        throw SpaceMismatchError("quadric_factor: ab not congruent to the character of h");

    static const int kPairings[3][4] = {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2}};
    std::vector<int> matches;
    for (int pi = 0; pi < 3; ++pi) {
        cplx pa = h.roots[kPairings[pi][0]] * h.roots[kPairings[pi][1]];
        cplx pb = h.roots[kPairings[pi][2]] * h.roots[kPairings[pi][3]];
        if (congruent(relaxed, pa, a) && congruent(relaxed, pb, b)) matches.push_back(pi);
        else if (congruent(relaxed, pb, a) && congruent(relaxed, pa, b))
            matches.push_back(pi + 3);  // same partition, swapped orientation
    }
    if (matches.empty()) return std::nullopt;
    if (matches.size() > 1) {
        // distinct partitions matching is a genuine ambiguity
        bool distinct = (matches[0] % 3) != (matches[1] % 3);
        if (distinct || matches.size() > 2) {
            std::ostringstream os;
            os << "quadric_factor: ambiguous split, candidate pairings:";
            for (int m : matches) os << " #" << (m % 3) << (m >= 3 ? "(swapped)" : "");
            throw AmbiguousSplitError(os.str());
        }
    }
    int sel = matches[0];
    const int* P = kPairings[sel % 3];
    int ia = P[0], ja = P[1], ib = P[2], jb = P[3];
    if (sel >= 3) {
        std::swap(ia, ib);
        std::swap(ja, jb);
    }

    std::vector<cplx> fr = {h.roots[ia], h.roots[ja]};
    std::vector<cplx> gr = {h.roots[ib], h.roots[jb]};
    if (exact_a) {
        cplx prod = fr[0] * fr[1];
        auto m = congruent(relaxed, *exact_a, prod);
        if (!m) throw SpaceMismatchError("quadric_factor: exact_a not congruent to pair");
        fr[0] *= ipow(h.qp.q, *m);
        gr[0] *= ipow(h.qp.q, -*m);
        fr[0] *= *exact_a / (fr[0] * fr[1]);
    }
    VElement f(h.qp, 2, a, cplx(1.0, 0.0), fr);
    VElement g(h.qp, 2, b, cplx(1.0, 0.0), gr);
    // fix g's scale so that f*g == h, then verify
    std::vector<cplx> avoid;
    for (const auto& r : h.roots) avoid.push_back(-r);
    auto probes = probe_points(h.qp, 4, 0.37, avoid, 0.03);
    g.scale = v_eval(h, probes[0]) / (v_eval(f, probes[0]) * v_eval(g, probes[0]));
    for (const auto& p : probes) {
        cplx lhs = v_eval(f, p) * v_eval(g, p);
        cplx rhs = v_eval(h, p);
        if (std::abs(lhs - rhs) > 1e-7 * std::abs(rhs))
            throw DecompositionError("quadric_factor: factor verification failed");
    }
    return std::make_pair(std::move(f), std::move(g));
}

// Coordinates of h in the rank-1 basis (u1 v1, u1 v2, u2 v1, u2 v2) of
// V_{2,a} x V_{2,b} products, plus the quadric residual |XT - YZ| normalized
// by the squared coordinate scale. Membership of h in Im(p_{a,b}) is residual
// below tolerance.
inline double quadric_residual(const VElement& h, cplx a, cplx b) {
    const QParam& qp = h.qp;
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
        rhs[i] = v_eval(h, probes[i]);
    }
    auto c = solve_dense(std::move(A), std::move(rhs));
    double scale2 = 0.0;
    for (const auto& z : c) scale2 = std::max(scale2, std::norm(z));
    return std::abs(c[0] * c[3] - c[1] * c[2]) / std::max(scale2, 1e-300);
}

}  // namespace qmano
