#pragma once

#include <stdexcept>
#include <string>

namespace vsmd {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user-facing configuration (CLI exit code 2).
struct ConfigError : Error {
    using Error::Error;
};

// Schedule violates the positive-definiteness constraint.
struct FeasibilityError : Error {
    using Error::Error;
};

// H_t not invertible / Cholesky failed at a time node.
struct SingularKernelError : Error {
    using Error::Error;
};

// Sampler state blew past the divergence guard (CLI exit code 3).
struct DivergedError : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

}  // namespace vsmd
