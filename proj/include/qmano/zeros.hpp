#pragma once

// Certified zero location on the fundamental annulus. The annulus is covered
// by rectangles in log coordinates w = log z; zeros per cell are counted by
// the argument principle (winding of f along the cell boundary, tracked by
// adaptive phase continuation) and polished by Newton, with the Schroeder
// multiplicity correction for multiple zeros. Cell boundaries are placed
// where |f| is comfortably large, so every zero stays in the strict interior
// of exactly one cell and polish results can be validated geometrically.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "qmano/errors.hpp"
#include "qmano/qcore.hpp"

namespace qmano {

struct FnEval {
    cplx f;
    cplx df;
};

using AnalyticFn = std::function<FnEval(cplx)>;

struct LocatedZero {
    AnnulusPoint point;
    int multiplicity = 1;
    bool clustered = false;  // polished at the subdivision floor (near-multiple pair)
};

namespace detail {

struct WindingFail {};

// Phase change of f along the straight w-segment [w0, w1] (z = e^w), by
// recursive bisection until each step is < 1 radian. Throws WindingFail when
// |f| falls under `floor` (contour too close to a zero).
class PhaseWalker {
  public:
    PhaseWalker(const AnalyticFn& fn, double floor_abs) : fn_(fn), floor_(floor_abs) {}

    double segment(cplx w0, cplx f0, cplx w1, cplx f1, int depth) {
        double d = std::arg(f1 / f0);
        if (std::abs(d) < 1.0) return d;
        if (depth > 48) throw WindingFail{};
        cplx wm = 0.5 * (w0 + w1);
        cplx fm = eval(wm);
        return segment(w0, f0, wm, fm, depth + 1) + segment(wm, fm, w1, f1, depth + 1);
    }

    cplx eval(cplx w) {
        cplx f = fn_(std::exp(w)).f;
        if (std::abs(f) < floor_) throw WindingFail{};
        return f;
    }

  private:
    const AnalyticFn& fn_;
    double floor_;
};

struct Cell {
    double u0, u1;  // log-modulus range
    double p0, p1;  // angle range
    double du() const { return u1 - u0; }
    double dp() const { return p1 - p0; }
};

// Winding number of f around the cell boundary, or throws WindingFail.
inline int cell_winding(const AnalyticFn& fn, const Cell& c, double floor_abs) {
    PhaseWalker walker(fn, floor_abs);
    const int kSamples = 12;
    const cplx corners[5] = {cplx(c.u0, c.p0), cplx(c.u1, c.p0), cplx(c.u1, c.p1),
                             cplx(c.u0, c.p1), cplx(c.u0, c.p0)};
    double total = 0.0;
    cplx wprev = corners[0];
    cplx fprev = walker.eval(wprev);
    for (int e = 0; e < 4; ++e) {
        cplx wa = corners[e], wb = corners[e + 1];
        for (int s = 1; s <= kSamples; ++s) {
            cplx w = wa + (wb - wa) * (static_cast<double>(s) / kSamples);
            cplx f = walker.eval(w);
            total += walker.segment(wprev, fprev, w, f, 0);
            wprev = w;
            fprev = f;
        }
    }
    double turns = total / (2.0 * M_PI);
    long n = std::lround(turns);
    if (std::abs(turns - n) > 0.2) throw WindingFail{};
    return static_cast<int>(n);
}

// Estimated distance (in w-space, i.e. relative in z) from the segment to
// the nearest zero: min over samples of the Newton step |f / (f' z)|. Used
// to place cell boundaries away from zeros.
inline double zero_clearance_on_segment(const AnalyticFn& fn, cplx w0, cplx w1,
                                        int n = 33) {
    double m = 1e300;
    for (int s = 0; s <= n; ++s) {
        cplx w = w0 + (w1 - w0) * (static_cast<double>(s) / n);
        cplx z = std::exp(w);
        FnEval e = fn(z);
        double af = std::abs(e.f), ad = std::abs(e.df) * std::abs(z);
        if (af == 0.0) return 0.0;
        if (ad > 0.0) m = std::min(m, af / ad);
    }
    return m;
}

// Strict interior test (angles modulo 2 pi).
inline bool cell_contains(const Cell& c, cplx z, double margin) {
    double u = std::log(std::abs(z));
    if (u < c.u0 - margin || u > c.u1 + margin) return false;
    double phi = std::arg(z);
    while (phi < c.p0 - margin) phi += 2.0 * M_PI;
    return phi <= c.p1 + margin;
}

// Newton (Schroeder-corrected for multiplicity m) from the cell center;
// accepts only convergence inside this cell.
inline bool polish_zero(const AnalyticFn& fn, const Cell& c, int m, cplx& z_out,
                        bool relaxed) {
    cplx w(0.5 * (c.u0 + c.u1), 0.5 * (c.p0 + c.p1));
    cplx z = std::exp(w);
    double last_step = 1.0;
    for (int it = 0; it < 120; ++it) {
        FnEval e = fn(z);
        if (std::abs(e.df) == 0.0) return false;
        cplx step = static_cast<double>(m) * e.f / e.df;
        z -= step;
        if (std::abs(z) == 0.0 || !std::isfinite(std::abs(z))) return false;
        last_step = std::abs(step) / std::abs(z);
        if (last_step < 1e-13) break;
    }
    if (last_step >= 1e-13 && !(relaxed && last_step < 1e-6)) return false;
    z_out = z;
    return cell_contains(c, z, 1e-10);
}

}  // namespace detail

struct ZeroFindReport {
    std::vector<LocatedZero> zeros;
    int boundary_retries = 0;
};

// Locate all `expected` zeros (with multiplicity) of fn in a fundamental
// annulus, returned as canonical C_q representatives sorted by
// (arg in (-pi,pi], |.|). fn must be holomorphic on C* with exactly
// `expected` zeros per q-orbit (i.e. an element of some V_{k,a}).
inline ZeroFindReport find_zeros_annulus(const QParam& qp, const AnalyticFn& fn,
                                         int expected) {
    using namespace detail;
    if (expected <= 0) throw DomainError("find_zeros_annulus: expected must be >= 1");
    const double L = -qp.log_abs_q();  // annulus width in log scale

    // Deterministic low-discrepancy offsets for the outer radius and the seam.
    static const double kFracs[] = {0.0,      0.381966, 0.763932, 0.145898,
                                    0.527864, 0.909830, 0.291796, 0.673762,
                                    0.055728, 0.437694, 0.819660, 0.201626};
    std::ostringstream failures;

    for (int attempt = 0; attempt < 12; ++attempt) {
        double u_hi = -kFracs[attempt] * L;
        double u_lo = u_hi - L;

        // Scale estimate over the band.
        double fmax = 0.0;
        bool bad = false;
        for (int s = 0; s < 48 && !bad; ++s) {
            double phi = 2.0 * M_PI * s / 48.0;
            for (double u : {u_lo, 0.5 * (u_lo + u_hi), u_hi}) {
                double m = std::abs(fn(std::exp(cplx(u, phi))).f);
                if (!std::isfinite(m)) bad = true;
                fmax = std::max(fmax, m);
            }
        }
        if (bad || fmax == 0.0) {
            failures << "[attempt " << attempt << ": non-finite or identically small] ";
            continue;
        }
        const double floor_abs = 1e-13 * fmax;  // phase-continuation noise floor
        const double clear_min = 2e-3;          // cell boundaries keep this w-distance

        // Outer/inner circles must stay clear of zeros.
        double clo = zero_clearance_on_segment(fn, cplx(u_lo, 0.0), cplx(u_lo, 2.0 * M_PI), 256);
        double chi = zero_clearance_on_segment(fn, cplx(u_hi, 0.0), cplx(u_hi, 2.0 * M_PI), 256);
        if (std::min(clo, chi) < clear_min) {
            failures << "[attempt " << attempt << ": zero near radial boundary] ";
            continue;
        }
        // Seam angle likewise.
        double p0 = 2.0 * M_PI * kFracs[(attempt * 5 + 3) % 12];
        bool seam_ok = false;
        for (int j = 0; j < 12 && !seam_ok; ++j) {
            double cand = p0 + 2.0 * M_PI * kFracs[j] / 7.0;
            if (zero_clearance_on_segment(fn, cplx(u_lo, cand), cplx(u_hi, cand)) >=
                clear_min) {
                p0 = cand;
                seam_ok = true;
            }
        }
        if (!seam_ok) {
            failures << "[attempt " << attempt << ": no clear seam] ";
            continue;
        }

        try {
            std::vector<std::pair<Cell, int>> work;
            {
                Cell whole{u_lo, u_hi, p0, p0 + 2.0 * M_PI};
                int total = cell_winding(fn, whole, floor_abs);
                if (total != expected) {
                    failures << "[attempt " << attempt << ": counted " << total
                             << " != " << expected << "] ";
                    continue;
                }
                if (total > 0) work.emplace_back(whole, total);
            }

            std::vector<LocatedZero> found;
            int guard = 0;
            while (!work.empty()) {
                if (++guard > 6000) throw WindingFail{};
                auto [c, w] = work.back();
                work.pop_back();
                double diam = c.du() + c.dp();
                bool at_floor = diam < 2e-6;
                // Multiplicity-w cells are polished directly once small: a true
                // w-fold zero converges under the Schroeder step, while w separate
                // zeros make Newton stall and we keep subdividing.
                if ((w == 1 && diam < 1.2) || (w > 1 && diam < 0.2) || at_floor) {
                    cplx z;
                    if (polish_zero(fn, c, w, z, at_floor)) {
                        LocatedZero lz;
                        lz.point = annulus_rep(qp, z);
                        lz.multiplicity = w;
                        lz.clustered = (w > 1 && at_floor);
                        found.push_back(lz);
                        continue;
                    }
                    if (at_floor) throw WindingFail{};
                }
                // Split along the longer axis; the cut must clear the floor and
                // conserve the winding count.
                bool split_u = c.du() > c.dp();
                static const double kCuts[] = {0.5,  0.45, 0.55, 0.4,  0.6,
                                               0.35, 0.65, 0.3,  0.7};
                bool done = false;
                for (double cut : kCuts) {
                    Cell a = c, b = c;
                    cplx s0, s1;
                    if (split_u) {
                        double m = c.u0 + cut * c.du();
                        a.u1 = m;
                        b.u0 = m;
                        s0 = cplx(m, c.p0);
                        s1 = cplx(m, c.p1);
                    } else {
                        double m = c.p0 + cut * c.dp();
                        a.p1 = m;
                        b.p0 = m;
                        s0 = cplx(c.u0, m);
                        s1 = cplx(c.u1, m);
                    }
                    double need = std::min(clear_min, 0.1 * diam);
                    if (diam > 1e-4 &&
                        zero_clearance_on_segment(fn, s0, s1) < need)
                        continue;
                    try {
                        int wa = cell_winding(fn, a, floor_abs);
                        int wb = cell_winding(fn, b, floor_abs);
                        if (wa + wb != w) continue;
                        if (wa > 0) work.emplace_back(a, wa);
                        if (wb > 0) work.emplace_back(b, wb);
                        done = true;
                        break;
                    } catch (WindingFail&) {
                        continue;
                    }
                }
                if (!done) throw WindingFail{};
            }

            int total_mult = 0;
            for (const auto& z : found) total_mult += z.multiplicity;
            if (total_mult != expected) {
                failures << "[attempt " << attempt << ": located " << total_mult
                         << " of " << expected << "] ";
                continue;
            }
            // No zero may be claimed twice (distinct cells, same point).
            bool dup = false;
            for (std::size_t i = 0; i < found.size() && !dup; ++i)
                for (std::size_t j = i + 1; j < found.size(); ++j)
                    if (std::abs(found[i].point.value - found[j].point.value) <
                        1e-9 * std::abs(found[i].point.value)) {
                        dup = true;
                        break;
                    }
            if (dup) {
                failures << "[attempt " << attempt << ": duplicate claim] ";
                continue;
            }

            std::sort(found.begin(), found.end(),
                      [](const LocatedZero& a, const LocatedZero& b) {
                          double aa = std::arg(a.point.value), ab = std::arg(b.point.value);
                          if (std::abs(aa - ab) > 1e-13) return aa < ab;
                          return std::abs(a.point.value) < std::abs(b.point.value);
                      });
            ZeroFindReport rep;
            rep.boundary_retries = attempt;
            for (const auto& z : found)
                for (int i = 0; i < z.multiplicity; ++i) rep.zeros.push_back(z);
            return rep;
        } catch (WindingFail&) {
            failures << "[attempt " << attempt << ": contour hit a zero] ";
            continue;
        }
    }
    throw ConvergenceError("find_zeros_annulus: argument-principle count failed; " +
                           failures.str());
}

}  // namespace qmano
