#pragma once

#include <stdexcept>
#include <string>

namespace skewbfa {

/// Argument outside the mathematical domain of a function (x <= 0 for a
/// Bessel argument, a non-positive GIG parameter, ...).
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Non-conformable matrix or vector dimensions.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// A log-density diverges at the requested point (variance-gamma at X == M
/// with gamma <= np/2). Distinct from DomainError: the parameters are valid.
class DensitySingularity : public std::runtime_error {
public:
    explicit DensitySingularity(const std::string& what) : std::runtime_error(what) {}
};

/// The conditional law of W given X is not a proper GIG (a or b is zero).
class DegenerateConditional : public std::runtime_error {
public:
    explicit DegenerateConditional(const std::string& what) : std::runtime_error(what) {}
};

/// The stage-1 M-step denominator vanished: all latent weight mass sits at
/// a single point, so M and A are not separately identifiable.
class DegenerateWeights : public std::runtime_error {
public:
    explicit DegenerateWeights(const std::string& what) : std::runtime_error(what) {}
};

/// A single random start could not be completed (empty component, singular
/// moment sum, non-finite likelihood).
class StartFailure : public std::runtime_error {
public:
    explicit StartFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Every start of a fit failed.
class FitError : public std::runtime_error {
public:
    explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or unreadable input file.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace skewbfa
