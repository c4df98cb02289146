#pragma once

// Mano decomposition machinery for the selected pair (x_i, x_j): the elliptic
// function Phi whose fibers carry the exponents of the central factor, the
// special value sets Xi'/Xi''/Upsilon, normal forms for C (generic and
// logarithmic), factor construction from coefficient matrices, the q-pants
// parameterization M(xi, eta) = P Diag(1,eta) Q, the decomposition algorithm
// covering every case of the existence theorem, composition, chart recovery,
// and the q-local monodromy invariants e_q^{h;i,j;k}.

#include <array>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "qmano/jsfamily.hpp"

namespace qmano {

// ---------------------------------------------------------------------------
// The elliptic function Phi_{i,j}.

// Phi(xi) = theta(x_i xi/rho_1) theta(x_j xi/rho_2)
//         / (theta(x_i xi/rho_2) theta(x_j xi/rho_1)).
inline ProjectivePoint phi(const LocalData& d, PairIdx p, cplx xi) {
    if (xi == cplx(0.0, 0.0)) throw DomainError("phi: xi = 0");
    const QParam& qp = d.qp;
    cplx num = theta(qp, d.x(p.i) * xi / d.rho[0]) * theta(qp, d.x(p.j) * xi / d.rho[1]);
    cplx den = theta(qp, d.x(p.i) * xi / d.rho[1]) * theta(qp, d.x(p.j) * xi / d.rho[0]);
    double scale = std::abs(theta(qp, cplx(1.0, 0.0)));
    scale = scale * scale;
    if (std::abs(num) <= 1e-13 * scale && std::abs(den) <= 1e-13 * scale)
        throw ProjectiveAmbiguityError("phi: 0/0 (zeros coincide, excluded by (NR))");
    return ProjectivePoint::make(num, den);
}

struct PhiFiber {
    AnnulusPoint xi1, xi2;  // canonical (arg, |.|) order; equal when critical
    bool critical = false;
};

// Relative log-scale distance from xi to the class of s.
inline double class_distance(const QParam& qp, cplx xi, cplx s) {
    cplx t = annulus_rep(qp, xi / s).value;
    return std::min(std::abs(std::log(t)), std::abs(std::log(t / qp.q)));
}

// Solve Phi(xi) = v: the two annulus solutions, found through the certified
// zero counter applied to den*N - num*D in V_{2, rho1 rho2/(x_i x_j)}.
inline PhiFiber phi_fiber(const LocalData& d, PairIdx p, const ProjectivePoint& v) {
    const QParam& qp = d.qp;
    PhiFiber out;
    if (v.is_zero(1e-13)) {
        out.xi1 = annulus_rep(qp, -d.rho[0] / d.x(p.i));
        out.xi2 = annulus_rep(qp, -d.rho[1] / d.x(p.j));
    } else if (v.is_infinity(1e-13)) {
        out.xi1 = annulus_rep(qp, -d.rho[0] / d.x(p.j));
        out.xi2 = annulus_rep(qp, -d.rho[1] / d.x(p.i));
    } else {
        cplx c = d.det_class(p);
        VElement N(qp, 2, c, v.den, {d.rho[0] / d.x(p.i), d.rho[1] / d.x(p.j)});
        VElement D(qp, 2, c, -v.num, {d.rho[1] / d.x(p.i), d.rho[0] / d.x(p.j)});
        VSum h(N);
        h.add(D);
        auto zs = find_zeros(as_sampled(h));
        out.xi1 = zs[0].point;
        out.xi2 = zs[1].point;
        out.critical = zs[0].multiplicity == 2;
    }
    if (std::abs(out.xi1.value - out.xi2.value) <= 1e-6 * std::abs(out.xi1.value))
        out.critical = true;
    if (std::arg(out.xi2.value) < std::arg(out.xi1.value) - 1e-13) std::swap(out.xi1, out.xi2);
    // verification: product class and fiber property
    QParam relaxed = qp;
    relaxed.tol_cong = 1e-6;
    if (!congruent(relaxed, out.xi1.value * out.xi2.value, d.det_class(p)))
        throw DecompositionError("phi_fiber: product of fiber points off the det class");
    for (cplx xi : {out.xi1.value, out.xi2.value})
        if (ProjectivePoint::chordal(phi(d, p, xi), v) > 1e-8)
            throw DecompositionError("phi_fiber: Phi(xi) != v after root finding");
    return out;
}

// ---------------------------------------------------------------------------
// Special values.

struct SpecialValues {
    std::array<AnnulusPoint, 4> xi_prime;     // R(-rho_h/x_m), m in the pair
    std::array<AnnulusPoint, 4> xi_dblprime;  // R(-sigma_h x_m), m in the complement
    std::array<AnnulusPoint, 4> upsilon;      // square roots of the det class
    std::array<ProjectivePoint, 4> crit_values;  // {0, inf, e^1, e^2}
    std::array<ProjectivePoint, 4> log_values;   // Phi on Upsilon
    bool hyp8 = false;
};

// e_q^{h;i,j;k} = Phi_{i,j}(-sigma_h x_k), k outside the pair.
inline cplx q_invariant(const LocalData& d, int h, PairIdx p, int k) {
    if (k == p.i || k == p.j) throw DomainError("q_invariant: k must avoid the pair");
    ProjectivePoint v = phi(d, p, -d.sigma_at(h) * d.x(k));
    return v.value();
}

inline SpecialValues special_values(const LocalData& d, PairIdx p) {
    const QParam& qp = d.qp;
    SpecialValues sv;
    auto xp = xi_prime_values(d, p);
    auto xs2 = xi_second_values(d, p);
    for (int t = 0; t < 4; ++t) {
        sv.xi_prime[t] = annulus_rep(qp, xp[t]);
        sv.xi_dblprime[t] = annulus_rep(qp, xs2[t]);
    }
    cplx a_rep = annulus_rep(qp, d.det_class(p)).value;
    cplx r0 = std::sqrt(a_rep);
    cplx r1 = std::sqrt(a_rep * qp.q);
    sv.upsilon = {annulus_rep(qp, r0), annulus_rep(qp, -r0), annulus_rep(qp, r1),
                  annulus_rep(qp, -r1)};
    PairIdx c = complement_pair(p);
    sv.crit_values = {ProjectivePoint::zero(), ProjectivePoint::infinity(),
                      phi(d, p, -d.sigma[0] * d.x(c.i)), phi(d, p, -d.sigma[1] * d.x(c.i))};
    for (int t = 0; t < 4; ++t) sv.log_values[t] = phi(d, p, sv.upsilon[t].value);

    std::array<cplx, 8> xi = {xp[0], xp[1], xp[2], xp[3], xs2[0], xs2[1], xs2[2], xs2[3]};
    sv.hyp8 = true;
    for (int u = 0; u < 8 && sv.hyp8; ++u)
        for (int v2 = u + 1; v2 < 8; ++v2)
            if (congruent(qp, xi[u], xi[v2])) {
                sv.hyp8 = false;
                break;
            }
    return sv;
}

// ---------------------------------------------------------------------------
// Central factor and Mano factors.

enum class CentralForm { Generic, Logarithmic, Trivial };

struct CentralFactor {
    CentralForm form = CentralForm::Generic;
    AnnulusPoint xi1, xi2;  // Logarithmic/Trivial use xi1 (xi2 = xi1)

    Mat2 matrix() const {
        switch (form) {
            case CentralForm::Generic:
                return Mat2::diag(xi1.value, xi2.value);
            case CentralForm::Trivial:
                return Mat2::diag(xi1.value, xi1.value);
            case CentralForm::Logarithmic:
                return {xi1.value, xi1.value, cplx(0.0, 0.0), xi1.value};
        }
        return {};
    }
};

// M = P Q with sigma_q P = R P (Cx)^{-1}, sigma_q Q = C Q (Sx)^{-1};
// P and Q are encoded by their coefficient matrices against the theta
// (generic) or theta/log (logarithmic and trivial) normal forms.
struct ManoFactors {
    LocalData local;
    PairIdx pair;
    CentralFactor C;
    Mat2 alpha;  // left factor coefficients
    Mat2 beta;   // right factor coefficients

    // P(x), and optionally dP/dx.
    Mat2 eval_P(cplx x, Mat2* deriv = nullptr) const {
        const QParam& qp = local.qp;
        Mat2 P, dP;
        if (C.form == CentralForm::Generic || C.form == CentralForm::Trivial) {
            cplx xi[2] = {C.xi1.value, C.form == CentralForm::Trivial ? C.xi1.value
                                                                      : C.xi2.value};
            const cplx al[2][2] = {{alpha.m11, alpha.m12}, {alpha.m21, alpha.m22}};
            cplx vals[2][2], ders[2][2];
            for (int i = 0; i < 2; ++i)
                for (int h = 0; h < 2; ++h) {
                    theta_with_deriv(qp, xi[h] * x / local.rho[i], vals[i][h], ders[i][h]);
                    ders[i][h] *= xi[h] / local.rho[i];
                }
            P = {al[0][0] * vals[0][0], al[0][1] * vals[0][1], al[1][0] * vals[1][0],
                 al[1][1] * vals[1][1]};
            dP = {al[0][0] * ders[0][0], al[0][1] * ders[0][1], al[1][0] * ders[1][0],
                  al[1][1] * ders[1][1]};
        } else {
            // p_{i1} = a_{i1} phi_i, p_{i2} = a_{i1} psi_i + a_{i2} phi_i,
            // phi_i = theta(xi x / rho_i), psi_i = x phi_i'.
            cplx xi = C.xi1.value;
            const cplx al[2][2] = {{alpha.m11, alpha.m12}, {alpha.m21, alpha.m22}};
            cplx col[2][2], dcol[2][2];
            for (int i = 0; i < 2; ++i) {
                cplx u = xi / local.rho[i];
                cplx f, d1, d2;
                theta_with_deriv2(qp, u * x, f, d1, d2);
                cplx phi_v = f, phi_d = d1 * u;
                cplx psi_v = x * phi_d;
                cplx psi_d = phi_d + x * d2 * u * u;
                col[i][0] = al[i][0] * phi_v;
                col[i][1] = al[i][0] * psi_v + al[i][1] * phi_v;
                dcol[i][0] = al[i][0] * phi_d;
                dcol[i][1] = al[i][0] * psi_d + al[i][1] * phi_d;
            }
            P = {col[0][0], col[0][1], col[1][0], col[1][1]};
            dP = {dcol[0][0], dcol[0][1], dcol[1][0], dcol[1][1]};
        }
        if (deriv) *deriv = dP;
        return P;
    }

    // Q(x), and optionally dQ/dx.
    Mat2 eval_Q(cplx x, Mat2* deriv = nullptr) const {
        const QParam& qp = local.qp;
        Mat2 Q, dQ;
        if (C.form == CentralForm::Generic || C.form == CentralForm::Trivial) {
            cplx xi[2] = {C.xi1.value, C.form == CentralForm::Trivial ? C.xi1.value
                                                                      : C.xi2.value};
            const cplx be[2][2] = {{beta.m11, beta.m12}, {beta.m21, beta.m22}};
            cplx vals[2][2], ders[2][2];
            for (int h = 0; h < 2; ++h)
                for (int j = 0; j < 2; ++j) {
                    theta_with_deriv(qp, local.sigma[j] * x / xi[h], vals[h][j], ders[h][j]);
                    ders[h][j] *= local.sigma[j] / xi[h];
                }
            Q = {be[0][0] * vals[0][0], be[0][1] * vals[0][1], be[1][0] * vals[1][0],
                 be[1][1] * vals[1][1]};
            dQ = {be[0][0] * ders[0][0], be[0][1] * ders[0][1], be[1][0] * ders[1][0],
                  be[1][1] * ders[1][1]};
        } else {
            // q_{1j} = b_{1j} phibar_j - b_{2j} psibar_j, q_{2j} = b_{2j} phibar_j,
            // phibar_j = theta(sigma_j x / xi), psibar_j = x phibar_j'.
            cplx xi = C.xi1.value;
            const cplx be[2][2] = {{beta.m11, beta.m12}, {beta.m21, beta.m22}};
            cplx row[2][2], drow[2][2];
            for (int j = 0; j < 2; ++j) {
                cplx u = local.sigma[j] / xi;
                cplx f, d1, d2;
                theta_with_deriv2(qp, u * x, f, d1, d2);
                cplx phib_v = f, phib_d = d1 * u;
                cplx psib_v = x * phib_d;
                cplx psib_d = phib_d + x * d2 * u * u;
                row[0][j] = be[0][j] * phib_v - be[1][j] * psib_v;
                row[1][j] = be[1][j] * phib_v;
                drow[0][j] = be[0][j] * phib_d - be[1][j] * psib_d;
                drow[1][j] = be[1][j] * phib_d;
            }
            Q = {row[0][0], row[0][1], row[1][0], row[1][1]};
            dQ = {drow[0][0], drow[0][1], drow[1][0], drow[1][1]};
        }
        if (deriv) *deriv = dQ;
        return Q;
    }

    Mat2 eval_M(cplx x) const { return eval_P(x) * eval_Q(x); }

    FnEval entry_with_deriv(int i, int j, cplx x) const {
        Mat2 dP, dQ;
        Mat2 P = eval_P(x, &dP);
        Mat2 Q = eval_Q(x, &dQ);
        Mat2 M = P * Q;
        Mat2 dM1 = dP * Q;
        Mat2 dM2 = P * dQ;
        auto pick = [&](const Mat2& m) {
            return (i == 1) ? (j == 1 ? m.m11 : m.m12) : (j == 1 ? m.m21 : m.m22);
        };
        return {pick(M), pick(dM1) + pick(dM2)};
    }
};

// Max relative residual of the factor functional equations
// sigma_q P - R P (Cx)^{-1} and sigma_q Q - C Q (Sx)^{-1} at 16 probe points.
struct FactorResiduals {
    double P = 0.0;
    double Q = 0.0;
};

inline FactorResiduals factor_residuals(const ManoFactors& F) {
    const QParam& qp = F.local.qp;
    Mat2 R = Mat2::diag(F.local.rho[0], F.local.rho[1]);
    Mat2 S = Mat2::diag(F.local.sigma[0], F.local.sigma[1]);
    Mat2 C = F.C.matrix();
    FactorResiduals out;
    auto probes = probe_points(qp, 16, 0.31);
    for (const auto& x : probes) {
        Mat2 P = F.eval_P(x), Pq = F.eval_P(qp.q * x);
        Mat2 Q = F.eval_Q(x), Qq = F.eval_Q(qp.q * x);
        Mat2 Cx = C;
        Cx.m11 *= x;
        Cx.m12 *= x;
        Cx.m21 *= x;
        Cx.m22 *= x;
        Mat2 rhsP = R * (P * Cx.inverse());
        Mat2 Sx = Mat2::diag(S.m11 * x, S.m22 * x);
        Mat2 rhsQ = C * (Q * Sx.inverse());
        auto relres = [](const Mat2& a, const Mat2& b) {
            double n = std::max(a.frobenius(), b.frobenius());
            Mat2 dm{a.m11 - b.m11, a.m12 - b.m12, a.m21 - b.m21, a.m22 - b.m22};
            return n > 0.0 ? dm.frobenius() / n : 0.0;
        };
        out.P = std::max(out.P, relres(Pq, rhsP));
        out.Q = std::max(out.Q, relres(Qq, rhsQ));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Composition: sample P (D_eta) Q and refit every entry into V_{2,rho_i/sigma_j}.

inline MonodromyMatrix compose(const ManoFactors& F,
                               std::optional<cplx> eta_inserted = std::nullopt) {
    ManoFactors G = F;
    if (eta_inserted) {
        if (F.C.form != CentralForm::Generic && F.C.form != CentralForm::Trivial)
            throw DomainError("compose: eta insertion requires a diagonal factor");
        G.beta.m21 *= *eta_inserted;  // Diag(1, eta) Q scales the second row
        G.beta.m22 *= *eta_inserted;
    }
    const LocalData& d = G.local;
    std::vector<VElement> entries;
    auto probes = probe_points(d.qp, 6, 0.29);
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j) {
            AnalyticFn fn = [G, i, j](cplx x) { return G.entry_with_deriv(i, j, x); };
            double mag = 0.0, pqmag = 0.0;
            for (const auto& p : probes) {
                mag = std::max(mag, std::abs(fn(p).f));
                pqmag = std::max(pqmag, G.eval_P(p).frobenius() * G.eval_Q(p).frobenius());
            }
            cplx want = d.rho[i - 1] / d.sigma[j - 1];
            if (mag <= 1e-13 * pqmag) {
                entries.push_back(VElement::zero(d.qp, 2, want));
                continue;
            }
            entries.push_back(refactor(SampledV{d.qp, 2, want, fn}));
        }
    MonodromyMatrix M(d, entries[0], entries[1], entries[2], entries[3]);
    det_profile(M);
    return M;
}

// ---------------------------------------------------------------------------
// q-pants parameterization.

struct PantsPoint {
    PairIdx pair;
    cplx xi;
    cplx eta;          // log chart: the affine coordinate of the fiber
    int branch = 0;    // special fibers carry two lines; 0/1 selects one
    bool log_chart = false;
    bool flagged = false;  // xi inside Xi union Upsilon (not the general chart)
};

namespace detail {

// s = T_2(x_i)/T_1(x_i) with T_1 = theta(xi1 x/rho1) theta(xi2 x/rho2),
// T_2 = theta(xi2 x/rho1) theta(xi1 x/rho2); (A0)'s corner entry.
inline cplx pants_s(const LocalData& d, PairIdx p, cplx xi1, cplx xi2) {
    const QParam& qp = d.qp;
    cplx xi_ = d.x(p.i);
    cplx T1 = theta(qp, xi1 * xi_ / d.rho[0]) * theta(qp, xi2 * xi_ / d.rho[1]);
    cplx T2 = theta(qp, xi2 * xi_ / d.rho[0]) * theta(qp, xi1 * xi_ / d.rho[1]);
    return T2 / T1;
}

// t = 1/Phi''_C(x_k), k the first complement index.
inline cplx pants_t(const LocalData& d, PairIdx p, cplx xi1, cplx xi2) {
    const QParam& qp = d.qp;
    PairIdx c = complement_pair(p);
    cplx xk = d.x(c.i);
    cplx num = theta(qp, d.sigma[1] * xk / xi1) * theta(qp, d.sigma[0] * xk / xi2);
    cplx den = theta(qp, d.sigma[0] * xk / xi1) * theta(qp, d.sigma[1] * xk / xi2);
    return num / den;
}

// u = x_i (phi_1'/phi_1 - phi_2'/phi_2)(x_i) for the logarithmic chart.
inline cplx log_u(const LocalData& d, PairIdx p, cplx xi) {
    const QParam& qp = d.qp;
    cplx x = d.x(p.i);
    cplx f1, d1, f2, d2;
    theta_with_deriv(qp, xi * x / d.rho[0], f1, d1);
    theta_with_deriv(qp, xi * x / d.rho[1], f2, d2);
    // phi_h'(x) = (xi/rho_h) theta'(xi x/rho_h)
    return x * (d1 * xi / d.rho[0] / f1 - d2 * xi / d.rho[1] / f2);
}

// v = x_k (phibar_1'/phibar_1 - phibar_2'/phibar_2)(x_k).
inline cplx log_v(const LocalData& d, PairIdx p, cplx xi) {
    const QParam& qp = d.qp;
    PairIdx c = complement_pair(p);
    cplx x = d.x(c.i);
    cplx f1, d1, f2, d2;
    theta_with_deriv(qp, d.sigma[0] * x / xi, f1, d1);
    theta_with_deriv(qp, d.sigma[1] * x / xi, f2, d2);
    return x * (d1 * d.sigma[0] / xi / f1 - d2 * d.sigma[1] / xi / f2);
}

}  // namespace detail

struct PantsResult {
    MonodromyMatrix matrix;
    ManoFactors factors;
    PantsPoint point;  // as dispatched (flags filled in)
};

// Build the Mano factors for a pants point without composing; when
// `dispatched` is given it receives the chart flags actually used.
inline ManoFactors pants_factors(const LocalData& d, const PantsPoint& pt_in,
                                 PantsPoint* dispatched = nullptr) {
    PantsPoint pt = pt_in;
    const QParam& qp = d.qp;
    PairIdx p = pt.pair;
    SpecialValues sv = special_values(d, p);
    if (!sv.hyp8)
        throw DomainError("pants_factors: Hyp8 fails for this pair");
    cplx xi1 = annulus_rep(qp, pt.xi).value;
    cplx a_exact = d.det_class(p);

    // chart dispatch
    int near_upsilon = -1, near_prime = -1, near_second = -1;
    for (int t = 0; t < 4; ++t) {
        if (class_distance(qp, xi1, sv.upsilon[t].value) < 1e-6) near_upsilon = t;
        if (class_distance(qp, xi1, sv.xi_prime[t].value) < 1e-9) near_prime = t;
        if (class_distance(qp, xi1, sv.xi_dblprime[t].value) < 1e-9) near_second = t;
    }

    ManoFactors F{d, p, {}, {}, {}};
    if (near_upsilon >= 0) {
        // logarithmic chart: snap to the exact square root
        cplx xi = sv.upsilon[near_upsilon].value;
        cplx u = detail::log_u(d, p, xi);
        cplx v = detail::log_v(d, p, xi);
        F.C = {CentralForm::Logarithmic, annulus_rep(qp, xi), annulus_rep(qp, xi)};
        F.alpha = {cplx(1.0, 0.0), cplx(0.0, 0.0), cplx(1.0, 0.0), u};
        F.beta = {cplx(1.0, 0.0), cplx(1.0, 0.0), pt.eta, pt.eta + v};
        pt.log_chart = true;
        pt.flagged = true;
        if (dispatched) *dispatched = pt;
        return F;
    }

    cplx xi2 = annulus_rep(qp, a_exact / xi1).value;
    F.C = {CentralForm::Generic, annulus_rep(qp, xi1), annulus_rep(qp, xi2)};

    Mat2 A, B;
    if (near_prime >= 0) {
        // rho-side special fiber: s is 0 or infinity; the two lines are the
        // alpha_{12} = 0 (kills at the xi1-matched x) and alpha_{21} = 0 branches.
        int h = (near_prime < 2) ? 1 : 2;  // xi_prime order: rho1 at x_i,x_j then rho2
        cplx t = detail::pants_t(d, p, xi1, xi2);
        if (pt.branch == 0) {
            A = (h == 1) ? Mat2{cplx(1), cplx(0), cplx(1), cplx(1)}
                         : Mat2{cplx(1), cplx(1), cplx(1), cplx(0)};
        } else {
            A = (h == 1) ? Mat2{cplx(1), cplx(1), cplx(0), cplx(1)}
                         : Mat2{cplx(0), cplx(1), cplx(1), cplx(1)};
        }
        B = {cplx(1), cplx(1), pt.eta, pt.eta * t};
        pt.flagged = true;
    } else if (near_second >= 0) {
        // sigma-side special fiber: t is 0 or infinity; beta carries the lines.
        int h = (near_second < 2) ? 1 : 2;
        cplx s = detail::pants_s(d, p, xi1, xi2);
        A = {cplx(1), cplx(1), cplx(1), s};
        if (pt.branch == 0) {
            B = (h == 1) ? Mat2{cplx(1), cplx(1), cplx(0), pt.eta}
                         : Mat2{cplx(1), cplx(1), pt.eta, cplx(0)};
        } else {
            B = (h == 1) ? Mat2{cplx(1), cplx(0), pt.eta, cplx(1)}
                         : Mat2{cplx(0), cplx(1), cplx(1), pt.eta};
        }
        pt.flagged = true;
    } else {
        cplx s = detail::pants_s(d, p, xi1, xi2);
        cplx t = detail::pants_t(d, p, xi1, xi2);
        A = {cplx(1), cplx(1), cplx(1), s};
        B = {cplx(1), cplx(1), pt.eta, pt.eta * t};  // Diag(1,eta) B0 folded in
    }
    F.alpha = A;
    F.beta = B;
    if (dispatched) *dispatched = pt;
    return F;
}

// M(xi, eta) = P Diag(1,eta) Q, returned with its factors.
inline PantsResult pants_matrix(const LocalData& d, const PantsPoint& pt) {
    PantsPoint dispatched = pt;
    ManoFactors F = pants_factors(d, pt, &dispatched);
    MonodromyMatrix M = compose(F);
    return {std::move(M), std::move(F), dispatched};
}

// ---------------------------------------------------------------------------
// Decomposition (the existence theorem, constructive).

namespace detail {

// Probe points for the Q-coefficient extraction: away from x-spirals (poles
// of P^{-1} live on the pair's spirals) by 0.05 in log distance.
inline std::vector<cplx> q_probes(const LocalData& d) {
    std::vector<cplx> avoid;
    for (int i = 1; i <= 4; ++i) avoid.push_back(d.x(i));
    for (int i = 1; i <= 4; ++i) avoid.push_back(-d.x(i));
    return probe_points(d.qp, 8, 0.25, avoid, 0.05);
}

inline Mat2 extract_beta(const ManoFactors& partialF, const MonodromyMatrix& M,
                         std::ostringstream& resid, double& worst) {
    const LocalData& d = partialF.local;
    const QParam& qp = d.qp;
    auto probes = q_probes(d);
    // Q values at probes
    std::vector<Mat2> Qv(probes.size());
    for (std::size_t t = 0; t < probes.size(); ++t) {
        Mat2 P = partialF.eval_P(probes[t]);
        Qv[t] = P.inverse() * M.eval(probes[t]);
    }
    Mat2 beta;
    if (partialF.C.form == CentralForm::Generic || partialF.C.form == CentralForm::Trivial) {
        cplx xi[2] = {partialF.C.xi1.value, partialF.C.form == CentralForm::Trivial
                                                ? partialF.C.xi1.value
                                                : partialF.C.xi2.value};
        cplx b[2][2];
        for (int h = 0; h < 2; ++h)
            for (int j = 0; j < 2; ++j)
                b[h][j] = Qv[0].row(h)[j] / theta(qp, d.sigma[j] * probes[0] / xi[h]);
        beta = {b[0][0], b[0][1], b[1][0], b[1][1]};
    } else {
        cplx xi = partialF.C.xi1.value;
        cplx b[2][2];
        for (int j = 0; j < 2; ++j) {
            cplx f, d1;
            theta_with_deriv(qp, d.sigma[j] * probes[0] / xi, f, d1);
            cplx phib = f;
            cplx psib = probes[0] * d1 * d.sigma[j] / xi;
            b[1][j] = Qv[0].row(1)[j] / phib;
            b[0][j] = (Qv[0].row(0)[j] + b[1][j] * psib) / phib;
        }
        beta = {b[0][0], b[0][1], b[1][0], b[1][1]};
    }
    // verify the structured form at the remaining probes
    ManoFactors full = partialF;
    full.beta = beta;
    worst = 0.0;
    for (std::size_t t = 1; t < probes.size(); ++t) {
        Mat2 want = Qv[t];
        Mat2 got = full.eval_Q(probes[t]);
        double n = std::max(want.frobenius(), got.frobenius());
        Mat2 dm{want.m11 - got.m11, want.m12 - got.m12, want.m21 - got.m21,
                want.m22 - got.m22};
        double r = n > 0.0 ? dm.frobenius() / n : 0.0;
        worst = std::max(worst, r);
        resid << " q" << t << "=" << r;
    }
    return beta;
}

}  // namespace detail

// Mano decomposition of M with respect to the pair (x_i, x_j). Requires
// validated local data with Hyp8 for the pair (which excludes the trivial
// case); dispatches on the fiber of Phi at Pi_{i,j}(M).
inline ManoFactors decompose(const MonodromyMatrix& M, PairIdx p) {
    const LocalData& d = M.local;
    const QParam& qp = d.qp;
    det_profile(M);

    auto ci = nonzero_column(M, p.i);
    auto cj = nonzero_column(M, p.j);
    double si = std::sqrt(std::norm(ci[0]) + std::norm(ci[1]));
    double sj = std::sqrt(std::norm(cj[0]) + std::norm(cj[1]));
    cplx fi = ci[0], gi = ci[1], fj = cj[0], gj = cj[1];
    bool fi0 = std::abs(fi) <= 1e-8 * si, gi0 = std::abs(gi) <= 1e-8 * si;
    bool fj0 = std::abs(fj) <= 1e-8 * sj, gj0 = std::abs(gj) <= 1e-8 * sj;

    ProjectivePoint v = pi_invariant(M, p.i, p.j);
    ManoFactors F{d, p, {}, {}, {}};

    if (fi0 || gj0 || fj0 || gi0) {
        // Case II: Pi(M) is 0 or infinity. Under Hyp8 these are not critical
        // values, so the factor is generic (case IIa); the IIb logarithmic and
        // trivial branches are kept for data outside Hyp8.
        bool at_zero = fi0 || gj0;
        PhiFiber fib = phi_fiber(d, p, at_zero ? ProjectivePoint::zero()
                                               : ProjectivePoint::infinity());
        if (!fib.critical) {
            // ordered so theta(xi1 x/rho1) kills at the rho1-marked point
            cplx xi1, xi2;
            if (at_zero) {
                xi1 = annulus_rep(qp, -d.rho[0] / d.x(p.i)).value;
                xi2 = annulus_rep(qp, -d.rho[1] / d.x(p.j)).value;
            } else {
                xi1 = annulus_rep(qp, -d.rho[0] / d.x(p.j)).value;
                xi2 = annulus_rep(qp, -d.rho[1] / d.x(p.i)).value;
            }
            F.C = {CentralForm::Generic, annulus_rep(qp, xi1), annulus_rep(qp, xi2)};
            bool lower;  // lower-triangular alpha kills the f (row-1) side
            cplx alpha_c;
            if (at_zero ? fi0 : fj0) {
                lower = true;
                // proportionality at the other point of the pair
                cplx xo = at_zero ? d.x(p.j) : d.x(p.i);
                cplx fo = at_zero ? fj : fi, go = at_zero ? gj : gi;
                alpha_c = go * theta(qp, xi1 * xo / d.rho[0]) /
                          (fo * theta(qp, xi1 * xo / d.rho[1]));
            } else {
                lower = false;
                cplx xo = at_zero ? d.x(p.i) : d.x(p.j);
                cplx fo = at_zero ? fi : fj, go = at_zero ? gi : gj;
                alpha_c = fo * theta(qp, xi2 * xo / d.rho[1]) /
                          (go * theta(qp, xi2 * xo / d.rho[0]));
            }
            F.alpha = lower ? Mat2{cplx(1), cplx(0), alpha_c, cplx(1)}
                            : Mat2{cplx(1), alpha_c, cplx(0), cplx(1)};
        } else {
            // Case IIb (outside Hyp8): xi1 == xi2 == xi.
            cplx xi = fib.xi1.value;
            if ((fi0 && gj0) || (fj0 && gi0)) {
                F.C = {CentralForm::Trivial, fib.xi1, fib.xi1};
                F.alpha = {cplx(1), cplx(0), cplx(0), cplx(1)};
            } else {
                F.C = {CentralForm::Logarithmic, fib.xi1, fib.xi1};
                cplx f1v, d1v, f2v, d2v;
                if (at_zero ? fi0 : fj0) {
                    // IIb(ii): alpha_11 = 0, alpha_21 = 1; alpha_12 from
                    // colinearity of the right column at the other point.
                    cplx xo = at_zero ? d.x(p.j) : d.x(p.i);
                    cplx fo = at_zero ? fj : fi, go = at_zero ? gj : gi;
                    theta_with_deriv(qp, xi * xo / d.rho[0], f1v, d1v);
                    theta_with_deriv(qp, xi * xo / d.rho[1], f2v, d2v);
                    cplx psi2 = xo * d2v * xi / d.rho[1];
                    cplx a12 = psi2 * fo / (f1v * go);
                    F.alpha = {cplx(0), a12, cplx(1), cplx(0)};
                } else {
                    // IIb(iii), by row symmetry with IIb(ii).
                    cplx xo = at_zero ? d.x(p.i) : d.x(p.j);
                    cplx fo = at_zero ? fi : fj, go = at_zero ? gi : gj;
                    theta_with_deriv(qp, xi * xo / d.rho[0], f1v, d1v);
                    theta_with_deriv(qp, xi * xo / d.rho[1], f2v, d2v);
                    cplx psi1 = xo * d1v * xi / d.rho[0];
                    cplx a22 = psi1 * go / (f2v * fo);
                    F.alpha = {cplx(1), cplx(0), cplx(0), a22};
                }
            }
        }
    } else {
        PhiFiber fib = phi_fiber(d, p, v);
        if (!fib.critical) {
            // Case Ia: P0 with alpha_1 = T2(x_i), alpha_2 = T1(x_i), then the
            // diagonal Lambda from column proportionality at x_i and x_j.
            cplx xi1 = fib.xi1.value, xi2 = fib.xi2.value;
            F.C = {CentralForm::Generic, fib.xi1, fib.xi2};
            cplx xi_ = d.x(p.i), xj_ = d.x(p.j);
            cplx T1i = theta(qp, xi1 * xi_ / d.rho[0]) * theta(qp, xi2 * xi_ / d.rho[1]);
            cplx T2i = theta(qp, xi2 * xi_ / d.rho[0]) * theta(qp, xi1 * xi_ / d.rho[1]);
            cplx a1 = T2i, a2 = T1i;
            // first column of P0 at the two points
            cplx p_i = theta(qp, xi1 * xi_ / d.rho[0]), q_i = theta(qp, xi1 * xi_ / d.rho[1]);
            cplx p_j = theta(qp, xi1 * xj_ / d.rho[0]), q_j = theta(qp, xi1 * xj_ / d.rho[1]);
            cplx lam = q_i * fi, mu = p_i * gi;
            // consistency at x_j (the fiber equation guarantees it)
            double cons = std::abs(lam * p_j * gj - mu * q_j * fj) /
                          std::max(std::abs(lam * p_j * gj), std::abs(mu * q_j * fj));
            if (cons > 1e-6)
                throw DecompositionError(
                    "decompose: column proportionality inconsistent between x_i and x_j");
            F.alpha = {lam, lam * a1, mu, mu * a2};
        } else {
            // Case Ib: logarithmic factor; P0 = [phi_i | psi_i + alpha_i phi_i]
            // with alpha_2 - alpha_1 = u, then the same Lambda step.
            int nearest = 0;
            SpecialValues sv = special_values(d, p);
            double best = 1e300;
            for (int t = 0; t < 4; ++t) {
                double dist = class_distance(qp, fib.xi1.value, sv.upsilon[t].value);
                if (dist < best) {
                    best = dist;
                    nearest = t;
                }
            }
            cplx xi = sv.upsilon[nearest].value;
            F.C = {CentralForm::Logarithmic, annulus_rep(qp, xi), annulus_rep(qp, xi)};
            cplx u = detail::log_u(d, p, xi);
            cplx xi_ = d.x(p.i), xj_ = d.x(p.j);
            cplx p_i = theta(qp, xi * xi_ / d.rho[0]), q_i = theta(qp, xi * xi_ / d.rho[1]);
            cplx p_j = theta(qp, xi * xj_ / d.rho[0]), q_j = theta(qp, xi * xj_ / d.rho[1]);
            cplx lam = q_i * fi, mu = p_i * gi;
            double cons = std::abs(lam * p_j * gj - mu * q_j * fj) /
                          std::max(std::abs(lam * p_j * gj), std::abs(mu * q_j * fj));
            if (cons > 1e-5)
                throw DecompositionError(
                    "decompose: logarithmic column proportionality inconsistent");
            F.alpha = {lam, cplx(0.0, 0.0), mu, mu * u};
        }
    }

    // det P must vanish at both pair points (diagnostic guard).
    for (cplx xx : {d.x(p.i), d.x(p.j)}) {
        Mat2 P = F.eval_P(xx);
        if (std::abs(P.det()) > 1e-6 * P.frobenius() * P.frobenius())
            throw DecompositionError("decompose: det P does not vanish at the pair");
    }

    std::ostringstream resid;
    double worst = 0.0;
    F.beta = detail::extract_beta(F, M, resid, worst);
    if (worst > 1e-7)
        throw DecompositionError("decompose: Q verification residuals exceed 1e-7:" +
                                 resid.str());

    // full verification: P Q reproduces M entrywise at the probes
    auto probes = probe_points(qp, 8, 0.33);
    double mscale = 0.0;
    for (const auto& x : probes) mscale = std::max(mscale, M.eval(x).frobenius());
    for (const auto& x : probes) {
        Mat2 got = F.eval_M(x);
        Mat2 want = M.eval(x);
        Mat2 dm{want.m11 - got.m11, want.m12 - got.m12, want.m21 - got.m21,
                want.m22 - got.m22};
        if (dm.frobenius() > 1e-7 * mscale)
            throw DecompositionError("decompose: P Q fails to reproduce M at probes");
    }
    return F;
}

// ---------------------------------------------------------------------------
// Chart recovery.

struct LineId {
    LineKind kind;
    int h = 1;  // rho/sigma index
    int i = 1;  // singularity index
};

struct RecoverResult {
    enum class Kind { General, Logarithmic, SpecialLine };
    Kind kind = Kind::General;
    PantsPoint point;              // general or logarithmic chart coordinates
    std::vector<LineId> lines;     // special fibers: the lines containing M
    ManoFactors factors;
};

// Canonical chart coordinates from a decomposition: xi is the fiber element
// with lexicographically smaller (arg, |.|); eta = (a12 b21)/(a11 b11) in the
// general chart; the affine coordinate b21/(b11 + (a12/a11) b21) in the
// logarithmic chart. Special fibers return the lines instead.
inline RecoverResult recover_pants(const MonodromyMatrix& M, PairIdx p) {
    RecoverResult out{RecoverResult::Kind::General, {}, {}, decompose(M, p)};
    ManoFactors& F = out.factors;
    const Mat2& A = F.alpha;
    const Mat2& B = F.beta;

    if (F.C.form == CentralForm::Logarithmic) {
        out.kind = RecoverResult::Kind::Logarithmic;
        cplx x = B.m21 / (B.m11 + (A.m12 / A.m11) * B.m21);
        out.point = {p, F.C.xi1.value, x, 0, true, true};
        return out;
    }

    double ascale = std::max({std::abs(A.m11), std::abs(A.m12), std::abs(A.m21),
                              std::abs(A.m22)});
    double bscale = std::max({std::abs(B.m11), std::abs(B.m12), std::abs(B.m21),
                              std::abs(B.m22)});
    bool special = std::abs(A.m11) <= 1e-8 * ascale || std::abs(A.m12) <= 1e-8 * ascale ||
                   std::abs(A.m21) <= 1e-8 * ascale || std::abs(A.m22) <= 1e-8 * ascale ||
                   std::abs(B.m11) <= 1e-8 * bscale || std::abs(B.m12) <= 1e-8 * bscale ||
                   std::abs(B.m21) <= 1e-8 * bscale || std::abs(B.m22) <= 1e-8 * bscale;
    if (special) {
        out.kind = RecoverResult::Kind::SpecialLine;
        for (int h = 1; h <= 2; ++h)
            for (int i = 1; i <= 4; ++i) {
                if (line_membership(M, LineKind::Rho, h, i))
                    out.lines.push_back({LineKind::Rho, h, i});
                if (line_membership(M, LineKind::Sigma, h, i))
                    out.lines.push_back({LineKind::Sigma, h, i});
            }
        if (out.lines.empty())
            throw DecompositionError(
                "recover_pants: degenerate coefficients but no line membership");
        return out;
    }

    cplx x1 = F.C.xi1.value, x2 = F.C.xi2.value;
    bool swap = false;
    double a1 = std::arg(x1), a2 = std::arg(x2);
    if (std::abs(a1 - a2) > 1e-13) swap = a2 < a1;
    else swap = std::abs(x2) < std::abs(x1);
    Mat2 Aa = A, Bb = B;
    if (swap) {
        std::swap(F.C.xi1, F.C.xi2);
        Aa = {A.m12, A.m11, A.m22, A.m21};  // A J: swap columns
        Bb = {B.m21, B.m22, B.m11, B.m12};  // J B: swap rows
        F.alpha = Aa;
        F.beta = Bb;
    }
    cplx eta = (Aa.m12 * Bb.m21) / (Aa.m11 * Bb.m11);
    out.point = {p, F.C.xi1.value, eta, 0, false, false};
    return out;
}

// ---------------------------------------------------------------------------
// Representatives of the sixteen lines (valid under Hyp48 data).

// A matrix of the line L_{rho_h, x_i} or L_{sigma_h, x_i}; param sweeps the line.
inline MonodromyMatrix line_representative(const LocalData& d, const LineId& L,
                                           cplx param) {
    PantsPoint pt;
    if (L.kind == LineKind::Rho) {
        int j = (L.i == 1) ? 2 : 1;
        pt.pair = {std::min(L.i, j), std::max(L.i, j)};
        pt.xi = annulus_rep(d.qp, -d.rho_at(L.h) / d.x(L.i)).value;
        pt.branch = 0;
        pt.eta = param;
        // branch 0 was defined against xi matched at the pair's rho_h row; the
        // construction in pants_factors kills row h at the xi-congruent point,
        // which is exactly x_i here.
    } else {
        PairIdx p{0, 0};
        for (const auto& cand : kAllPairs)
            if (cand.i != L.i && cand.j != L.i) {
                p = cand;
                break;
            }
        pt.pair = p;
        pt.xi = annulus_rep(d.qp, -d.sigma_at(L.h) * d.x(L.i)).value;
        pt.branch = 0;
        pt.eta = param;
    }
    return pants_matrix(d, pt).matrix;
}

// The crossing point of L_{rho_1,x_i} and L_{rho_2,x_j} (i != j), or of
// L_{sigma_1,x_i} and L_{sigma_2,x_j}.
inline MonodromyMatrix line_crossing(const LocalData& d, LineKind kind, int i, int j) {
    if (i == j) throw DomainError("line_crossing: need i != j");
    const QParam& qp = d.qp;
    if (kind == LineKind::Rho) {
        PairIdx p{std::min(i, j), std::max(i, j)};
        cplx xi1 = annulus_rep(qp, -d.rho[0] / d.x(i)).value;
        cplx xi2 = annulus_rep(qp, d.det_class(p) / xi1).value;
        ManoFactors F{d, p,
                      {CentralForm::Generic, annulus_rep(qp, xi1), annulus_rep(qp, xi2)},
                      Mat2{cplx(1), cplx(0), cplx(0), cplx(1)},
                      Mat2{cplx(1), cplx(1), cplx(1), detail::pants_t(d, p, xi1, xi2)}};
        return compose(F);
    }
    PairIdx pc{std::min(i, j), std::max(i, j)};
    PairIdx p = complement_pair(pc);
    cplx xi1 = annulus_rep(qp, -d.sigma[0] * d.x(i)).value;
    cplx xi2 = annulus_rep(qp, d.det_class(p) / xi1).value;
    ManoFactors F{d, p,
                  {CentralForm::Generic, annulus_rep(qp, xi1), annulus_rep(qp, xi2)},
                  Mat2{cplx(1), cplx(1), cplx(1), detail::pants_s(d, p, xi1, xi2)},
                  Mat2{cplx(1), cplx(0), cplx(0), cplx(1)}};
    return compose(F);
}


}  // namespace qmano
