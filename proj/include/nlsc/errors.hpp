#pragma once

#include <stdexcept>
#include <string>

namespace nlsc {

// Bad input: parameter out of range, malformed config, rejected geometry.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An iterative solver (shooting, Newton, bisection) did not converge.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Linear solve asked to invert an operator on a rhs that lies mostly in its kernel.
class IllPosedSolve : public std::runtime_error {
public:
    IllPosedSolve(const std::string& what, double overlap)
        : std::runtime_error(what), overlap_(overlap) {}
    double overlap() const { return overlap_; }

private:
    double overlap_;
};

// The phase constant A is too large for the denominators to stay positive.
class SmallAViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BranchTrackingError : public std::runtime_error {
public:
    BranchTrackingError(const std::string& what, double alpha)
        : std::runtime_error(what), alpha_(alpha) {}
    double alpha() const { return alpha_; }

private:
    double alpha_;
};

// Odd part of the first-order residual is not orthogonal to the kernel.
class CurveNotCritical : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace nlsc
