#include <catch2/catch_amalgamated.hpp>

#include <complex>

#include "qmano/qspaces.hpp"
#include "qmano/random.hpp"

using namespace qmano;

namespace {

const QParam kQ(cplx(0.5, 0.0));

double rel(cplx got, cplx want) {
    return std::abs(got - want) / std::max(1e-300, std::abs(want));
}

VElement random_element(Rng& rng, const QParam& qp, int k, cplx a) {
    std::vector<cplx> roots;
    cplx prod(1.0, 0.0);
    for (int i = 0; i + 1 < k; ++i) {
        cplx r = rng.annulus_point(qp);
        roots.push_back(r);
        prod *= r;
    }
    roots.push_back(a / prod);  // exact character a
    return VElement(qp, k, a, rng.generic_scale(), roots);
}

// Oracle for congruence of annulus values, brute force over shifts.
bool cong40(const QParam& qp, cplx x, cplx y, double tol = 1e-6) {
    for (long j = -40; j <= 40; ++j)
        if (std::abs(x - y * ipow(qp.q, j)) <= tol * std::abs(x)) return true;
    return false;
}

}  // namespace

TEST_CASE("v_eval: functional equation and zero element") {
    Rng rng(1001u);
    auto z = VElement::zero(kQ, 2, cplx(0.7, 0.0));
    CHECK(v_eval(z, cplx(0.3, 0.2)) == cplx(0.0, 0.0));

    for (int t = 0; t < 20; ++t) {
        int k = 1 + (t % 4);
        cplx a = rng.generic_scale();
        VElement f = random_element(rng, kQ, k, a);
        cplx x = rng.annulus_point(kQ);
        cplx lhs = v_eval(f, kQ.q * x) * ipow(x, k);
        cplx rhs = f.exact_char() * v_eval(f, x);
        CHECK(rel(lhs, rhs) < 1e-11);
    }

    // k=1, a=1, root=1: f(-1) = theta(-1) = 0
    VElement f1(kQ, 1, cplx(1.0, 0.0), cplx(1.0, 0.0), {cplx(1.0, 0.0)});
    CHECK(std::abs(v_eval(f1, cplx(-1.0, 0.0))) < 1e-13);
}

TEST_CASE("v_eval_with_deriv matches finite differences") {
    Rng rng(2002u);
    VElement f = random_element(rng, kQ, 3, cplx(0.9, 0.4));
    for (int t = 0; t < 10; ++t) {
        cplx x = rng.annulus_point(kQ);
        double h = 1e-6 * std::abs(x);
        cplx fd = (v_eval(f, x + h) - v_eval(f, x - h)) / (2.0 * h);
        auto e = v_eval_with_deriv(f, x);
        CHECK(rel(e.f, v_eval(f, x)) < 1e-12);
        CHECK(std::abs(e.df - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("find_zeros: factored elements, product congruence, double zero") {
    Rng rng(3003u);

    // zeros of theta(x/alpha) theta(x/beta) are the classes of -alpha, -beta
    cplx alpha = rng.annulus_point(kQ), beta = rng.annulus_point(kQ);
    VElement f(kQ, 2, alpha * beta, cplx(1.0, 0.0), {alpha, beta});
    auto zs = find_zeros(f);
    REQUIRE(zs.size() == 2);
    std::vector<cplx> want = {annulus_rep(kQ, -alpha).value, annulus_rep(kQ, -beta).value};
    std::sort(want.begin(), want.end(), [](cplx a, cplx b) { return std::arg(a) < std::arg(b); });
    CHECK(std::abs(zs[0].point.value - want[0]) < 1e-9);
    CHECK(std::abs(zs[1].point.value - want[1]) < 1e-9);

    // product congruence on random elements
    for (int t = 0; t < 25; ++t) {
        int k = 1 + (t % 4);
        VElement g = random_element(rng, kQ, k, rng.generic_scale());
        auto z = find_zeros(g);
        REQUIRE(static_cast<int>(z.size()) == k);
        cplx prod(1.0, 0.0);
        for (const auto& zz : z) prod *= zz.point.value;
        cplx target = (k % 2 == 0 ? g.exact_char() : -g.exact_char());
        CHECK(cong40(kQ, prod, target));
    }

    // double zero with multiplicity flag
    VElement d(kQ, 2, alpha * alpha, cplx(1.0, 0.0), {alpha, alpha});
    auto dz = find_zeros(d);
    REQUIRE(dz.size() == 2);
    CHECK(dz[0].multiplicity == 2);
    CHECK(std::abs(dz[0].point.value - annulus_rep(kQ, -alpha).value) < 1e-6);
}

TEST_CASE("v_add: identities and refactoring") {
    Rng rng(4004u);
    cplx a(0.8, 0.3);
    VElement f = random_element(rng, kQ, 2, a);

    // f + (-f) = 0
    VElement mf = f;
    mf.scale = -mf.scale;
    CHECK(v_add(f, mf).is_zero());

    // f + 0 = f
    auto s = v_add(f, VElement::zero(kQ, 2, a));
    CHECK(rel(v_eval(s, cplx(0.6, 0.1)), v_eval(f, cplx(0.6, 0.1))) < 1e-12);

    // theta(x/alpha)^2 + theta(-x/alpha) theta(x/alpha): both roots recovered.
    // Oracle: evaluate the sum on a grid and compare against the refactored form.
    cplx alpha = rng.annulus_point(kQ);
    VElement t2(kQ, 2, alpha * alpha, cplx(1.0, 0.0), {alpha, alpha});
    // same class but shifted exact character q alpha^2: not addable to t2
    VElement tt(kQ, 2, alpha * alpha, cplx(1.0, 0.0), {kQ.q * alpha, alpha});
    VElement mm(kQ, 2, alpha * alpha, cplx(1.0, 0.0), {-alpha, -alpha});
    VElement sum = v_add(t2, mm);
    REQUIRE(!sum.is_zero());
    for (int i = 0; i < 64; ++i) {
        double phi = 2.0 * M_PI * i / 64.0;
        cplx x = std::sqrt(kQ.abs_q()) * cplx(std::cos(phi), std::sin(phi));
        cplx direct = v_eval(t2, x) + v_eval(mm, x);
        CHECK(std::abs(v_eval(sum, x) - direct) <= 1e-7 * std::max(1.0, std::abs(direct)));
    }

    // mismatched exact characters must throw
    CHECK_THROWS_AS(v_add(t2, tt), SpaceMismatchError);

    // associativity / commutativity at probe points
    VElement g = random_element(rng, kQ, 2, a);
    VElement h = random_element(rng, kQ, 2, a);
    VElement lhs = v_add(v_add(f, g), h);
    VElement rhs = v_add(f, v_add(g, h));
    for (const auto& p : probe_points(kQ, 5, 0.45)) {
        CHECK(std::abs(v_eval(lhs, p) - v_eval(rhs, p)) <
              1e-9 * std::max(1.0, std::abs(v_eval(lhs, p))));
        CHECK(std::abs(v_eval(v_add(f, g), p) - v_eval(v_add(g, f), p)) <
              1e-9 * std::max(1.0, std::abs(v_eval(lhs, p))));
    }
}

TEST_CASE("VBasis: independence and interpolation") {
    Rng rng(5005u);
    for (int k = 1; k <= 4; ++k) {
        cplx a = rng.generic_scale();
        VBasis b = make_vbasis(kQ, k, a);
        REQUIRE(static_cast<int>(b.elements.size()) == k);
        // interpolation matrix is solvable (throws if singular)
        VElement f = random_element(rng, kQ, k, a);
        double cond = 0.0;
        auto c = coefficients_on(b, as_sampled(f).fn, &cond);
        REQUIRE(static_cast<int>(c.size()) == k);
        CHECK(std::isfinite(cond));
        // reconstruction agrees at a fresh point
        cplx x = rng.annulus_point(kQ);
        cplx via(0.0, 0.0);
        for (int j = 0; j < k; ++j) via += c[j] * v_eval(b.elements[j], x);
        CHECK(rel(via, v_eval(f, x)) < 1e-7);
    }
}

TEST_CASE("product_map: pointwise product and quadric membership") {
    Rng rng(6006u);
    cplx a(0.9, 0.2), b(0.4, -0.7);
    for (int t = 0; t < 10; ++t) {
        VElement f = random_element(rng, kQ, 2, a);
        VElement g = random_element(rng, kQ, 2, b);
        VElement h = product_map(f, g);
        cplx x = rng.annulus_point(kQ);
        CHECK(rel(v_eval(h, x), v_eval(f, x) * v_eval(g, x)) < 1e-11);
        CHECK(quadric_residual(h, a, b) < 1e-8);
    }
    // zero absorbs
    CHECK(product_map(VElement::zero(kQ, 2, a), random_element(rng, kQ, 2, b)).is_zero());
}

TEST_CASE("quadric_factor: round trip, no-split, swapped case") {
    Rng rng(7007u);
    cplx a(0.9, 0.2), b(0.4, -0.7);
    VElement f = random_element(rng, kQ, 2, a);
    VElement g = random_element(rng, kQ, 2, b);
    VElement h = product_map(f, g);

    auto split = quadric_factor(h, a, b, a);
    REQUIRE(split.has_value());
    auto [f2, g2] = *split;
    // recovered up to the lambda <-> lambda^{-1} torus action: products match pointwise
    for (const auto& p : probe_points(kQ, 5, 0.39)) {
        CHECK(rel(v_eval(f2, p) * v_eval(g2, p), v_eval(h, p)) < 1e-9);
        // and the left factor is proportional to f
        cplx r1 = v_eval(f2, p) / v_eval(f, p);
        cplx r2 = v_eval(f2, probe_points(kQ, 5, 0.39)[0]) /
                  v_eval(f, probe_points(kQ, 5, 0.39)[0]);
        CHECK(std::abs(r1 - r2) < 1e-7 * std::abs(r2));
    }

    // h in V_{4,ab} whose zeros violate both pair congruences -> nullopt.
    // Oracle: exhaustive brute-force check of the 3 pairings.
    std::vector<cplx> rts;
    for (int tries = 0; tries < 100; ++tries) {
        rts = {rng.annulus_point(kQ), rng.annulus_point(kQ), rng.annulus_point(kQ)};
        rts.push_back(a * b / (rts[0] * rts[1] * rts[2]));
        bool any_pairing = false;
        int idx[3][4] = {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2}};
        for (auto& P : idx) {
            if (cong40(kQ, rts[P[0]] * rts[P[1]], a, 1e-6) ||
                cong40(kQ, rts[P[0]] * rts[P[1]], b, 1e-6))
                any_pairing = true;
        }
        if (!any_pairing) break;
        rts.clear();
    }
    REQUIRE_FALSE(rts.empty());
    VElement hbad(kQ, 4, a * b, cplx(1.0, 0.0), rts);
    CHECK_FALSE(quadric_factor(hbad, a, b).has_value());

    // congruent-character case a == b q^k: swapped preimage exists
    cplx b2 = a * kQ.q;
    VElement gg = random_element(rng, kQ, 2, b2);
    VElement hh = product_map(f, gg);
    auto s2 = quadric_factor(hh, a, b2);
    REQUIRE(s2.has_value());
}

TEST_CASE("planes in the quadric: f * V_{2,b} factors with left factor f") {
    Rng rng(8008u);
    cplx a(1.1, 0.1), b(0.5, 0.6);
    VElement f = random_element(rng, kQ, 2, a);
    for (int t = 0; t < 5; ++t) {
        VElement g = random_element(rng, kQ, 2, b);
        VElement h = product_map(f, g);
        auto split = quadric_factor(h, a, b, f.exact_char());
        REQUIRE(split.has_value());
        auto& [fs, gs] = *split;
        // left factor proportional to f
        auto probes = probe_points(kQ, 3, 0.42);
        cplx ratio = v_eval(fs, probes[0]) / v_eval(f, probes[0]);
        for (const auto& p : probes)
            CHECK(rel(v_eval(fs, p), ratio * v_eval(f, p)) < 1e-8);
    }
}

TEST_CASE("hyperplane H_x: membership and q-invariance") {
    Rng rng(9009u);
    cplx c = rng.generic_scale();
    // element vanishing at x0: root -x0 among the four
    cplx x0 = rng.annulus_point(kQ);
    std::vector<cplx> roots = {-x0, rng.annulus_point(kQ), rng.annulus_point(kQ)};
    cplx prod = roots[0] * roots[1] * roots[2];
    roots.push_back(c / prod);
    VElement f(kQ, 4, c, cplx(1.0, 0.0), roots);
    CHECK(std::abs(hyperplane_eval(x0, f)) < 1e-10);
    CHECK(std::abs(hyperplane_eval(kQ.q * x0, f)) < 1e-10);

    // H_{qx} = H_x for generic elements: small at x0 iff small at q x0
    VElement g = random_element(rng, kQ, 4, c);
    cplx gx = hyperplane_eval(x0, g);
    cplx gqx = hyperplane_eval(kQ.q * x0, g);
    // functional equation ties the two values exactly
    CHECK(rel(gqx * ipow(x0, 4), g.exact_char() * gx) < 1e-10);
}
