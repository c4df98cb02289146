#pragma once

// Small dense complex linear algebra: 2x2 matrices and an LU solve for the
// interpolation systems (n <= 8) used by basis fitting.

#include <array>
#include <cmath>
#include <vector>

#include "qmano/errors.hpp"
#include "qmano/qcore.hpp"

namespace qmano {

struct Mat2 {
    cplx m11{}, m12{}, m21{}, m22{};

    cplx det() const { return m11 * m22 - m12 * m21; }
    double frobenius() const {
        return std::sqrt(std::norm(m11) + std::norm(m12) + std::norm(m21) + std::norm(m22));
    }
    Mat2 operator*(const Mat2& o) const {
        return {m11 * o.m11 + m12 * o.m21, m11 * o.m12 + m12 * o.m22,
                m21 * o.m11 + m22 * o.m21, m21 * o.m12 + m22 * o.m22};
    }
    std::array<cplx, 2> col(int j) const {
        return j == 0 ? std::array<cplx, 2>{m11, m21} : std::array<cplx, 2>{m12, m22};
    }
    std::array<cplx, 2> row(int i) const {
        return i == 0 ? std::array<cplx, 2>{m11, m12} : std::array<cplx, 2>{m21, m22};
    }
    static Mat2 diag(cplx a, cplx b) { return {a, cplx(0), cplx(0), b}; }
    Mat2 inverse() const {
        cplx d = det();
        if (std::abs(d) == 0.0) throw DomainError("Mat2::inverse: singular");
        return {m22 / d, -m12 / d, -m21 / d, m11 / d};
    }
};

inline double inf_cond() { return 1e300; }

// In-place partial-pivot LU solve of A x = b; A is row-major n x n.
// Returns the solution; |pivot| below `singular_tol * max|A|` throws.
inline std::vector<cplx> solve_dense(std::vector<cplx> A, std::vector<cplx> b,
                                     double* cond_estimate = nullptr) {
    const std::size_t n = b.size();
    double amax = 0.0;
    for (const auto& v : A) amax = std::max(amax, std::abs(v));
    double pivot_min = amax;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::abs(A[col * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            double m = std::abs(A[r * n + col]);
            if (m > best) {
                best = m;
                piv = r;
            }
        }
        if (best <= 1e-14 * amax)
            throw DomainError("solve_dense: singular interpolation system");
        pivot_min = std::min(pivot_min, best);
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(A[col * n + c], A[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            cplx f = A[r * n + col] / A[col * n + col];
            A[r * n + col] = cplx(0);
            for (std::size_t c = col + 1; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<cplx> x(n);
    for (std::size_t ri = n; ri-- > 0;) {
        cplx s = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) s -= A[ri * n + c] * x[c];
        x[ri] = s / A[ri * n + ri];
    }
    if (cond_estimate) *cond_estimate = pivot_min > 0.0 ? amax / pivot_min : inf_cond();
    return x;
}

}  // namespace qmano
