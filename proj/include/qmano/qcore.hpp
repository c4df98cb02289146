#pragma once

// Complex q-special functions on the fundamental annulus C_q = { |q| < |z| <= 1 }:
// the theta function theta_q(x) = sum q^{n(n-1)/2} x^n and its derivative,
// q-Pochhammer symbols, elementary characters e_{q,c}, the q-logarithm
// l_q = x theta'/theta, annulus representatives and q^Z-congruence.

#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>

#include "qmano/errors.hpp"

namespace qmano {

using cplx = std::complex<double>;

inline constexpr double kDefaultTolEq = 1e-10;
inline constexpr double kDefaultTolCong = 1e-9;

// z^n for integer n by binary powering (better conditioned than exp(n log z)).
inline cplx ipow(cplx z, long n) {
    if (n == 0) return cplx(1.0, 0.0);
    bool inv = n < 0;
    unsigned long m = inv ? static_cast<unsigned long>(-(n + 1)) + 1ul
                          : static_cast<unsigned long>(n);
    cplx acc(1.0, 0.0);
    cplx base = z;
    while (m) {
        if (m & 1ul) acc *= base;
        base *= base;
        m >>= 1;
    }
    return inv ? cplx(1.0, 0.0) / acc : acc;
}

// Base q with 0 < |q| < 1 plus the tolerances used throughout.
struct QParam {
    cplx q;
    double tol_eq = kDefaultTolEq;      // numerical equality tolerance
    double tol_cong = kDefaultTolCong;  // congruence-match tolerance

    QParam(cplx q_, double tol_eq_ = kDefaultTolEq, double tol_cong_ = kDefaultTolCong)
        : q(q_), tol_eq(tol_eq_), tol_cong(tol_cong_) {
        double a = std::abs(q);
        if (!(a > 0.0) || !(a < 1.0) || !std::isfinite(a))
            throw DomainError("QParam: need 0 < |q| < 1, got |q| = " + std::to_string(a));
        if (!(tol_eq > 0.0) || !std::isfinite(tol_eq) || !(tol_cong > 0.0) ||
            !std::isfinite(tol_cong))
            throw DomainError("QParam: tolerances must be finite and positive");
    }

    double abs_q() const { return std::abs(q); }
    double log_abs_q() const { return std::log(std::abs(q)); }
};

// Representative of x in C_q: x = value * q^shift,  |q| < |value| <= 1.
// The boundary convention keeps |value| = 1 and excludes |value| = |q|;
// points within ~1e-9 of the boundary carry a near_boundary flag.
struct AnnulusPoint {
    cplx value{};
    long shift = 0;
    bool near_boundary = false;
};

inline AnnulusPoint annulus_rep(const QParam& qp, cplx x) {
    if (x == cplx(0.0, 0.0)) throw DomainError("annulus_rep: x = 0");
    double lq = qp.log_abs_q();
    double r = std::log(std::abs(x)) / lq;  // |x| = |q|^r
    // Need 0 <= r - k < 1, i.e. k = floor(r); snap exact-boundary values to |value| = 1.
    double k0 = std::floor(r + 1e-12);
    AnnulusPoint rep;
    rep.shift = static_cast<long>(k0);
    rep.value = x * ipow(qp.q, -rep.shift);
    double frac = r - k0;
    rep.near_boundary = (frac < 1e-9) || (frac > 1.0 - 1e-9);
    return rep;
}

// k with |a - b q^k| <= tol_cong * |a|, if any (a == b mod q^Z).
inline std::optional<long> congruent(const QParam& qp, cplx a, cplx b) {
    if (a == cplx(0.0, 0.0) || b == cplx(0.0, 0.0))
        throw DomainError("congruent: needs nonzero arguments");
    AnnulusPoint ra = annulus_rep(qp, a);
    AnnulusPoint rb = annulus_rep(qp, b);
    // Reps straddling the annulus boundary land one q-step apart, hence delta.
    for (long delta : {0L, -1L, 1L}) {
        cplx probe = rb.value * ipow(qp.q, delta);
        if (std::abs(ra.value - probe) <= qp.tol_cong * std::abs(ra.value))
            return ra.shift + delta - rb.shift;
    }
    return std::nullopt;
}

namespace detail {

// Truncation order: |q|^{N(N-1)/2} < 1e-18 guarantees the tail is below
// double rounding relative to the leading terms.
inline int theta_series_order(const QParam& qp) {
    double L = -qp.log_abs_q();
    double target = 2.0 * 41.5 / L;  // N(N-1) > 2 ln(1e-18)/ln|q|
    double n = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * target));
    int N = static_cast<int>(std::ceil(n)) + 2;
    if (N > 480) {
        std::ostringstream os;
        os << "theta: |q| = " << qp.abs_q() << " needs series order " << N
           << " > 480 (budget exceeded)";
        throw ConvergenceError(os.str());
    }
    return N < 4 ? 4 : N;
}

struct ThetaPair {
    cplx value;
    cplx deriv;   // d/dv of the series at the reduced argument
    cplx deriv2;  // d^2/dv^2
};

// Bilateral series at v in the fundamental annulus; terms are accumulated
// smallest-first on each side.
inline ThetaPair theta_series(const QParam& qp, cplx v, bool want_deriv,
                              bool want_deriv2 = false) {
    int N = theta_series_order(qp);
    // Positive side: t_n = q^{n(n-1)/2} v^n, t_{n+1} = t_n * q^n * v.
    // Negative side: s_n = q^{n(n+1)/2} v^{-n} (term of index -n),
    //                s_{n+1} = s_n * q^{n+1} / v.
    cplx terms_pos[512], terms_neg[512];
    cplx dpos[512], dneg[512];
    cplx d2pos[512], d2neg[512];
    cplx t(1.0, 0.0);
    cplx qpow(1.0, 0.0);  // q^n
    for (int n = 0; n <= N; ++n) {
        terms_pos[n] = t;
        if (want_deriv) dpos[n] = static_cast<double>(n) * t;
        if (want_deriv2) d2pos[n] = static_cast<double>(n) * static_cast<double>(n - 1) * t;
        t *= qpow * v;
        qpow *= qp.q;
    }
    cplx s(1.0, 0.0);
    qpow = qp.q;
    cplx vinv = cplx(1.0, 0.0) / v;
    for (int n = 0; n <= N; ++n) {
        terms_neg[n] = s;
        if (want_deriv) dneg[n] = static_cast<double>(-n) * s;
        if (want_deriv2)
            d2neg[n] = static_cast<double>(-n) * static_cast<double>(-n - 1) * s;
        s *= qpow * vinv;
        qpow *= qp.q;
    }
    ThetaPair out{cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0)};
    for (int n = N; n >= 1; --n) out.value += terms_pos[n] + terms_neg[n];
    out.value += terms_pos[0];  // n = 0 counted once
    if (want_deriv) {
        for (int n = N; n >= 1; --n) out.deriv += dpos[n] + dneg[n];
        out.deriv *= vinv;  // sum n t_n / v = d/dv
    }
    if (want_deriv2) {
        for (int n = N; n >= 1; --n) out.deriv2 += d2pos[n] + d2neg[n];
        out.deriv2 *= vinv * vinv;  // sum n(n-1) t_n / v^2
    }
    return out;
}

}  // namespace detail

// theta_q(x) = sum_{n in Z} q^{n(n-1)/2} x^n, evaluated after reducing x to C_q
// through theta(q^k v) = q^{-k(k-1)/2} v^{-k} theta(v).
inline cplx theta(const QParam& qp, cplx x) {
    if (x == cplx(0.0, 0.0)) throw DomainError("theta: x = 0");
    AnnulusPoint rep = annulus_rep(qp, x);
    long k = rep.shift;
    cplx factor = ipow(qp.q, -(k * (k - 1)) / 2) * ipow(rep.value, -k);
    return factor * detail::theta_series(qp, rep.value, false).value;
}

// theta_q'(x) (termwise derivative), via the same argument reduction.
inline cplx theta_deriv(const QParam& qp, cplx x) {
    if (x == cplx(0.0, 0.0)) throw DomainError("theta_deriv: x = 0");
    AnnulusPoint rep = annulus_rep(qp, x);
    long k = rep.shift;
    cplx v = rep.value;
    auto tp = detail::theta_series(qp, v, true);
    cplx factor = ipow(qp.q, -(k * (k - 1)) / 2) * ipow(v, -k) * ipow(qp.q, -k);
    return factor * (tp.deriv - static_cast<double>(k) / v * tp.value);
}

// Both together (shared reduction); used by the zero-finder hot path.
inline void theta_with_deriv(const QParam& qp, cplx x, cplx& val, cplx& der) {
    if (x == cplx(0.0, 0.0)) throw DomainError("theta: x = 0");
    AnnulusPoint rep = annulus_rep(qp, x);
    long k = rep.shift;
    cplx v = rep.value;
    auto tp = detail::theta_series(qp, v, true);
    cplx f0 = ipow(qp.q, -(k * (k - 1)) / 2) * ipow(v, -k);
    val = f0 * tp.value;
    der = f0 * ipow(qp.q, -k) * (tp.deriv - static_cast<double>(k) / v * tp.value);
}

// Value with first and second derivative, through the same reduction.
inline void theta_with_deriv2(const QParam& qp, cplx x, cplx& val, cplx& der, cplx& der2) {
    if (x == cplx(0.0, 0.0)) throw DomainError("theta: x = 0");
    AnnulusPoint rep = annulus_rep(qp, x);
    long k = rep.shift;
    double kd = static_cast<double>(k);
    cplx v = rep.value;
    auto tp = detail::theta_series(qp, v, true, true);
    cplx f0 = ipow(qp.q, -(k * (k - 1)) / 2) * ipow(v, -k);
    cplx qk = ipow(qp.q, -k);
    val = f0 * tp.value;
    der = f0 * qk * (tp.deriv - kd / v * tp.value);
    der2 = f0 * qk * qk *
           (tp.deriv2 - 2.0 * kd / v * tp.deriv + kd * (kd + 1.0) / (v * v) * tp.value);
}

// (a;q)_n, with n = npoch_infinity for the infinite product; the infinite
// product truncates once |a q^i| < 1e-17.
inline constexpr long npoch_infinity = -1;

inline cplx pochhammer(const QParam& qp, cplx a, long n = npoch_infinity) {
    cplx prod(1.0, 0.0);
    if (n == npoch_infinity) {
        cplx term = a;
        for (long i = 0; i < 100000; ++i) {
            if (std::abs(term) < 1e-17) break;
            prod *= (cplx(1.0, 0.0) - term);
            term *= qp.q;
        }
        return prod;
    }
    cplx term = a;
    for (long i = 0; i < n; ++i) {
        prod *= (cplx(1.0, 0.0) - term);
        term *= qp.q;
    }
    return prod;
}

// True when x lies on the zero spiral [-1;q] of theta (within tol_cong).
inline bool on_theta_zero_spiral(const QParam& qp, cplx x) {
    return congruent(qp, x, cplx(-1.0, 0.0)).has_value();
}

// e_{q,c}(x) = theta(x/c)/theta(x): meromorphic solution of sigma_q f = c f.
inline cplx e_char(const QParam& qp, cplx c, cplx x) {
    if (c == cplx(0.0, 0.0)) throw DomainError("e_char: c = 0");
    if (x == cplx(0.0, 0.0)) throw DomainError("e_char: x = 0");
    if (on_theta_zero_spiral(qp, x))
        throw PoleError("e_char: x on the pole spiral [-1;q]");
    return theta(qp, x / c) / theta(qp, x);
}

// l_q(x) = x theta'(x)/theta(x); satisfies sigma_q l_q - l_q = -1,
// simple poles over [-1;q].
inline cplx q_log(const QParam& qp, cplx x) {
    if (x == cplx(0.0, 0.0)) throw DomainError("q_log: x = 0");
    if (on_theta_zero_spiral(qp, x))
        throw PoleError("q_log: x on the pole spiral [-1;q]");
    cplx val, der;
    theta_with_deriv(qp, x, val, der);
    return x * der / val;
}

}  // namespace qmano
