#pragma once

#include <stdexcept>
#include <string>

namespace gmmf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension mismatch or otherwise malformed input.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A triangular factor has a diagonal entry below the singularity floor.
class SingularFactorError : public Error {
public:
    using Error::Error;
};

/// Weights are all zero, negative or otherwise impossible to normalize.
class DegenerateWeightsError : public Error {
public:
    using Error::Error;
};

/// A model supplied a nonfinite jacobian or function value.
class LinearizationError : public Error {
public:
    using Error::Error;
};

/// The covariance-form filter produced a matrix that is not positive definite.
class CovarianceBreakdownError : public Error {
public:
    using Error::Error;
};

/// Every mixture component assigns exactly zero density to a measurement.
class ModelMismatchError : public Error {
public:
    using Error::Error;
};

/// Errors raised inside a time recursion carry the 1-based step they occurred at.
class StepError : public Error {
public:
    StepError(int step, const std::string& what)
        : Error("step " + std::to_string(step) + ": " + what), step_(step) {}

    [[nodiscard]] int step() const noexcept { return step_; }

private:
    int step_;
};

/// Particle weights all vanished at some step.
class ParticleDegeneracyError : public StepError {
public:
    using StepError::StepError;
};

}  // namespace gmmf
