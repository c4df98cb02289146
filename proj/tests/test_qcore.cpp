#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <random>

#include "qmano/qcore.hpp"
#include "qmano/random.hpp"

using namespace qmano;
using Catch::Approx;

namespace {

// Independent oracle: direct bilateral series with a fixed 60-term window,
// no argument reduction. Only valid for x already near the annulus.
cplx theta_oracle(cplx q, cplx x) {
    cplx s(0.0, 0.0);
    for (int n = -60; n <= 60; ++n) {
        s += std::pow(q, 0.5 * n * (n - 1.0)) * std::pow(x, n);
    }
    return s;
}

// Independent oracle: (a;q)_inf as a direct 60-factor product.
cplx poch_oracle(cplx q, cplx a) {
    cplx p(1.0, 0.0);
    cplx t = a;
    for (int i = 0; i < 60; ++i) {
        p *= (cplx(1.0, 0.0) - t);
        t *= q;
    }
    return p;
}

double rel_err(cplx got, cplx want) {
    return std::abs(got - want) / std::max(1e-300, std::abs(want));
}

}  // namespace

TEST_CASE("theta: frozen values and zeros") {
    QParam qp(cplx(0.5, 0.0));

    // theta(1) against the direct-series oracle value (frozen).
    cplx t1 = theta(qp, cplx(1.0, 0.0));
    CHECK(rel_err(t1, theta_oracle(qp.q, cplx(1.0, 0.0))) < 1e-13);
    CHECK(t1.real() == Approx(3.2832651213).epsilon(1e-9));
    CHECK(std::abs(t1.imag()) < 1e-14);

    // Simple zero at x = -1.
    cplx t_m1 = theta(qp, cplx(-1.0, 0.0));
    CHECK(std::abs(t_m1) < 1e-13 * std::abs(t1));
    CHECK(std::abs(theta_deriv(qp, cplx(-1.0, 0.0))) > 0.01);

    // Functional equation consistency theta(x) = theta(q x) * x at x = 1.
    CHECK(rel_err(theta(qp, qp.q) * cplx(1.0, 0.0), t1) < 1e-13);
}

TEST_CASE("theta: functional equations at random points") {
    Rng rng(20240901u);
    for (cplx q : {cplx(0.5, 0.0), cplx(0.3, 0.1), cplx(0.8, 0.0) * std::exp(cplx(0.0, 0.3))}) {
        QParam qp(q);
        for (int i = 0; i < 200; ++i) {
            cplx x = rng.annulus_point(qp);
            cplx ref = theta(qp, x) / x;
            CHECK(rel_err(theta(qp, qp.q * x), ref) < 1e-10);
            CHECK(rel_err(theta(qp, cplx(1.0, 0.0) / x), ref) < 1e-10);
        }
    }
}

TEST_CASE("theta: Jacobi triple product") {
    Rng rng(7130251u);
    for (cplx q : {cplx(0.5, 0.0), cplx(0.3, 0.1)}) {
        QParam qp(q);
        for (int i = 0; i < 200; ++i) {
            cplx x = rng.annulus_point(qp);
            cplx lhs = theta(qp, x);
            cplx rhs = pochhammer(qp, qp.q) * pochhammer(qp, -x) * pochhammer(qp, -qp.q / x);
            CHECK(rel_err(lhs, rhs) < 1e-10);
        }
    }
}

TEST_CASE("theta: zeros on -q^Z are simple") {
    QParam qp(cplx(0.5, 0.0));
    double scale = std::abs(theta(qp, cplx(1.0, 0.0)));
    for (int k = -3; k <= 3; ++k) {
        cplx z = cplx(-1.0, 0.0) * ipow(qp.q, k);
        cplx d = theta_deriv(qp, z);
        CHECK(std::abs(theta(qp, z)) < 1e-11 * scale * std::abs(d) / scale);
        CHECK(std::abs(d) > 1e-6);
    }
}

TEST_CASE("theta_deriv: finite differences and log-derivative equation") {
    QParam qp(cplx(0.5, 0.0));
    Rng rng(99017u);
    for (int i = 0; i < 50; ++i) {
        cplx x = rng.annulus_point(qp);
        if (on_theta_zero_spiral(qp, x)) continue;
        double h = 1e-6 * std::abs(x);
        cplx fd = (theta(qp, x + h) - theta(qp, x - h)) / (2.0 * h);
        CHECK(rel_err(theta_deriv(qp, x), fd) < 1e-5);

        // sigma_q l_q - l_q = -1
        cplx lq = q_log(qp, x);
        cplx lqq = q_log(qp, qp.q * x);
        CHECK(std::abs(lqq - lq + cplx(1.0, 0.0)) < 1e-9);
    }
}

TEST_CASE("q-De Rham: -c*l_q(x/a)+b solves sigma f - f = c") {
    QParam qp(cplx(0.5, 0.0));
    Rng rng(5150u);
    cplx c(0.7, 0.3), a(0.9, -0.2), b(1.0, 1.0);
    int checked = 0;
    for (int i = 0; i < 700 && checked < 500; ++i) {
        cplx x = rng.annulus_point(qp);
        if (on_theta_zero_spiral(qp, x / a) || on_theta_zero_spiral(qp, qp.q * x / a)) continue;
        auto f = [&](cplx z) { return -c * q_log(qp, z / a) + b; };
        CHECK(std::abs(f(qp.q * x) - f(x) - c) < 1e-8 * std::abs(c));
        ++checked;
    }
    CHECK(checked == 500);
}

TEST_CASE("pochhammer") {
    QParam qp(cplx(0.5, 0.0));
    CHECK(pochhammer(qp, cplx(0.37, 0.1), 0) == cplx(1.0, 0.0));
    // (0.5;0.5)_inf, frozen from the 60-factor oracle.
    cplx p = pochhammer(qp, cplx(0.5, 0.0));
    CHECK(rel_err(p, poch_oracle(qp.q, cplx(0.5, 0.0))) < 1e-14);
    CHECK(p.real() == Approx(0.2887880951).epsilon(1e-9));
    // (1;q)_n = 0 for n >= 1.
    CHECK(pochhammer(qp, cplx(1.0, 0.0), 3) == cplx(0.0, 0.0));
}

TEST_CASE("e_char: character equation, identity, zero") {
    QParam qp(cplx(0.5, 0.0));
    Rng rng(31337u);
    cplx c(1.3, 0.4);
    for (int i = 0; i < 100; ++i) {
        cplx x = rng.annulus_point(qp);
        if (on_theta_zero_spiral(qp, x) || on_theta_zero_spiral(qp, qp.q * x)) continue;
        CHECK(rel_err(e_char(qp, c, qp.q * x) / e_char(qp, c, x), c) < 1e-10);
        CHECK(rel_err(e_char(qp, cplx(1.0, 0.0), x), cplx(1.0, 0.0)) < 1e-12);
    }
    // Zero at x = -c (class of -c in E_q).
    CHECK(std::abs(e_char(qp, c, -c)) < 1e-12);
    // Pole on [-1;q].
    CHECK_THROWS_AS(e_char(qp, c, cplx(-0.5, 0.0)), PoleError);
}

TEST_CASE("annulus_rep: reduction, idempotence, frozen cases") {
    QParam qp(cplx(0.5, 0.0));

    auto r0 = annulus_rep(qp, cplx(0.7, 0.3));
    CHECK(r0.shift == 0);
    CHECK(r0.value == cplx(0.7, 0.3));

    auto r1 = annulus_rep(qp, cplx(1.7857142857, 0.0));
    CHECK(r1.shift == -1);
    CHECK(r1.value.real() == Approx(0.89285714285).epsilon(1e-10));

    auto r2 = annulus_rep(qp, cplx(-5.0, 0.0));
    CHECK(r2.shift == -3);
    CHECK(r2.value.real() == Approx(-0.625).epsilon(1e-12));

    // Idempotence and exact reconstruction.
    Rng rng(424242u);
    for (int i = 0; i < 200; ++i) {
        cplx x = rng.annulus_point(qp) * ipow(qp.q, (i % 11) - 5);
        auto r = annulus_rep(qp, x);
        CHECK(std::abs(r.value) <= 1.0 + 1e-12);
        CHECK(std::abs(r.value) > qp.abs_q() * (1.0 - 1e-12));
        CHECK(std::abs(r.value * ipow(qp.q, r.shift) - x) <= 1e-12 * std::abs(x));
        auto rr = annulus_rep(qp, r.value);
        CHECK(rr.shift == 0);
        CHECK(rr.value == r.value);
    }
}

TEST_CASE("congruent: shifts, misses, brute-force oracle") {
    QParam qp(cplx(0.5, 0.0));
    cplx a(0.37, 0.11);
    auto self = congruent(qp, a, a);
    REQUIRE(self.has_value());
    CHECK(*self == 0);

    auto k = congruent(qp, cplx(0.25, 0.0), cplx(1.0, 0.0));
    REQUIRE(k.has_value());
    CHECK(*k == 2);

    CHECK_FALSE(congruent(qp, cplx(0.3, 0.0), cplx(1.0, 0.0)).has_value());

    // Brute-force oracle over |k| <= 40 agrees on random congruent pairs.
    Rng rng(8899u);
    for (int i = 0; i < 100; ++i) {
        cplx b = rng.annulus_point(qp);
        long kk = (i % 17) - 8;
        cplx aa = b * ipow(qp.q, kk);
        auto got = congruent(qp, aa, b);
        bool oracle = false;
        long oracle_k = 0;
        for (long j = -40; j <= 40; ++j) {
            if (std::abs(aa - b * ipow(qp.q, j)) <= qp.tol_cong * std::abs(aa)) {
                oracle = true;
                oracle_k = j;
                break;
            }
        }
        REQUIRE(got.has_value());
        REQUIRE(oracle);
        CHECK(*got == oracle_k);
        CHECK(*got == kk);
    }
}

TEST_CASE("QParam validation and theta budget") {
    CHECK_THROWS_AS(QParam(cplx(1.2, 0.0)), DomainError);
    CHECK_THROWS_AS(QParam(cplx(0.0, 0.0)), DomainError);
    CHECK_THROWS_AS(QParam(cplx(0.5, 0.0), -1.0), DomainError);
    CHECK_THROWS_AS(theta(QParam(cplx(0.5, 0.0)), cplx(0.0, 0.0)), DomainError);
    // |q| extremely close to 1 exceeds the series budget.
    CHECK_THROWS_AS(theta(QParam(cplx(0.99999, 0.0)), cplx(0.9, 0.0)), ConvergenceError);
}
