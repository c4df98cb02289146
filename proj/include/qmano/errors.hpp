#pragma once

#include <stdexcept>
#include <string>

namespace qmano {

// Base class for all qmano errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain (x = 0, |q| >= 1, zero gauge entry...).
struct DomainError : Error {
    using Error::Error;
};

// An iterative scheme exceeded its budget; the message carries diagnostics.
struct ConvergenceError : Error {
    using Error::Error;
};

// Evaluation at a pole; the message names the offending q-spiral.
struct PoleError : Error {
    using Error::Error;
};

// Operands live in incompatible solution spaces.
struct SpaceMismatchError : Error {
    using Error::Error;
};

// A zero-pair split matched more than one pairing within tolerance.
struct AmbiguousSplitError : Error {
    using Error::Error;
};

// Factorization verification failed; the message carries the residual table.
struct DecompositionError : Error {
    using Error::Error;
};

// Both homogeneous components of a projective point fell below tolerance.
struct ProjectiveAmbiguityError : Error {
    using Error::Error;
};

}  // namespace qmano
