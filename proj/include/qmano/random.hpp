#pragma once

// Seeded, portable random sampling. Doubles are derived from raw mt19937_64
// output so the stream does not depend on the standard library's
// distribution implementations.

#include <cstdint>
#include <random>

#include "qmano/qcore.hpp"

namespace qmano {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t raw() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform on the fundamental annulus of qp (uniform in log-modulus and angle).
    cplx annulus_point(const QParam& qp) {
        double r = std::pow(qp.abs_q(), uniform());
        double phi = 2.0 * M_PI * uniform();
        return cplx(r * std::cos(phi), r * std::sin(phi));
    }

    // Nonzero complex number with modulus in [0.3, 3) and random phase.
    cplx generic_scale() {
        double r = std::exp(uniform(-1.2, 1.1));
        double phi = 2.0 * M_PI * uniform();
        return cplx(r * std::cos(phi), r * std::sin(phi));
    }

  private:
    std::mt19937_64 eng_;
};

}  // namespace qmano
