#pragma once

// Points of P^1(C) as normalized homogeneous pairs, with the chordal metric.
// Infinity is the point (1:0).

#include <cmath>
#include <complex>

#include "qmano/errors.hpp"
#include "qmano/qcore.hpp"

namespace qmano {

struct ProjectivePoint {
    cplx num{0.0, 0.0};
    cplx den{1.0, 0.0};

    // Normalized so that max(|num|, |den|) = 1.
    static ProjectivePoint make(cplx n, cplx d) {
        double m = std::max(std::abs(n), std::abs(d));
        if (m == 0.0)
            throw ProjectiveAmbiguityError("ProjectivePoint: (0 : 0) is undefined");
        return ProjectivePoint{n / m, d / m};
    }

    static ProjectivePoint zero() { return {cplx(0.0, 0.0), cplx(1.0, 0.0)}; }
    static ProjectivePoint infinity() { return {cplx(1.0, 0.0), cplx(0.0, 0.0)}; }

    static ProjectivePoint of(cplx v) { return make(v, cplx(1.0, 0.0)); }

    bool is_zero(double tol = 1e-7) const { return chordal(*this, zero()) <= tol; }
    bool is_infinity(double tol = 1e-7) const { return chordal(*this, infinity()) <= tol; }
    bool is_finite(double tol = 1e-12) const { return std::abs(den) > tol; }

    cplx value() const {
        if (!is_finite()) throw DomainError("ProjectivePoint::value: point at infinity");
        return num / den;
    }

    static double chordal(const ProjectivePoint& a, const ProjectivePoint& b) {
        double na = std::sqrt(std::norm(a.num) + std::norm(a.den));
        double nb = std::sqrt(std::norm(b.num) + std::norm(b.den));
        return std::abs(a.num * b.den - b.num * a.den) / (na * nb);
    }
};

inline bool projectively_equal(const ProjectivePoint& a, const ProjectivePoint& b,
                               double tol = 1e-7) {
    return ProjectivePoint::chordal(a, b) <= tol;
}

}  // namespace qmano
