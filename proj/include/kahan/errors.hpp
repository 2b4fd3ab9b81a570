#pragma once

#include <stdexcept>
#include <string>

namespace kahan {

// Thrown when a pivot of the step's linear system falls below
// 1e-13 * max-norm of the matrix: either h is too large or the
// birational map has a genuine singular fiber at this point.
class SingularStep : public std::runtime_error {
public:
    explicit SingularStep(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public std::invalid_argument {
public:
    explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

// A denominator of a modified integral or density vanished at the
// evaluation point. The map is not defined there for this h; callers
// report these rather than clipping to +/-inf.
class DivisionByZero : public std::runtime_error {
public:
    explicit DivisionByZero(const std::string& what) : std::runtime_error(what) {}
};

// Fixed-point solve of an implicit planar scheme failed to reach
// tolerance within the iteration cap.
class NoConvergence : public std::runtime_error {
public:
    explicit NoConvergence(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace kahan
