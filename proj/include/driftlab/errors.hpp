#pragma once

#include <stdexcept>
#include <string>

namespace driftlab {

/// Input outside the domain of a geometric quantity (undefined bearing,
/// non-finite angle, zero speed).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Circle fit could not be computed (collinear window, r^2 <= 0, lambda = 0).
struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filter arithmetic broke down (innovation covariance not positive definite).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Measurements or predictions presented out of timestamp order.
struct OrderingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Closed-loop run aborted because the estimate left the truth by more than
/// the divergence bound.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace driftlab
