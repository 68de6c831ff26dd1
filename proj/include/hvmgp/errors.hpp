#ifndef HVMGP_ERRORS_HPP
#define HVMGP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace hvmgp {

/// Inputs that disagree on the number of circles, outputs or points.
class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A position coincides with a reference point, so no direction is defined.
class SingularityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Triangular factorization failed even at the largest admissible jitter.
class NotPositiveDefinite : public std::runtime_error {
public:
    NotPositiveDefinite(const std::string &kernel, double min_pivot)
        : std::runtime_error("kernel matrix for '" + kernel +
                             "' is not positive definite under the jitter policy (minimum pivot " +
                             std::to_string(min_pivot) + ")"),
          kernel_(kernel), min_pivot_(min_pivot) {}

    const std::string &kernel() const { return kernel_; }
    double min_pivot() const { return min_pivot_; }

private:
    std::string kernel_;
    double min_pivot_;
};

/// Predictive covariance too ill-conditioned to evaluate a density.
class SingularCovariance : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hvmgp

#endif
