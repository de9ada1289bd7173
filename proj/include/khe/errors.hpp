#pragma once

#include <stdexcept>
#include <string>

namespace khe {

/// Argument outside the mathematical domain of an operation (t <= 0, zeta <= 0, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Evaluation too close to a pole of the oscillator factor.
class SingularityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Kernel has no density (e.g. ||a|| = 0 makes the x-marginal a Dirac mass).
class DegenerateKernelError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// ||c'(y)|| at or below the configured threshold; q and pbar are undefined there.
class DegenerateGradientError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical blow-up detected in a time-stepping solver.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace khe
