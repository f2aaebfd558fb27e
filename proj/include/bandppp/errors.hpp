#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bandppp {

// Bad caller input: dimensions, out-of-range tuning values, malformed files.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Operation applied to an object in the wrong state (e.g. post-processing twice).
class InvalidState : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public NumericError {
public:
    using NumericError::NumericError;
};

class ConvergenceError : public NumericError {
public:
    ConvergenceError(const std::string& what, double residual, std::size_t iterations);

    double residual() const noexcept { return residual_; }
    std::size_t iterations() const noexcept { return iterations_; }

private:
    double residual_;
    std::size_t iterations_;
};

// All importance-weighted predictive terms for one observation underflowed.
class DegeneracyError : public NumericError {
public:
    DegeneracyError(const std::string& what, std::size_t observation);
    std::size_t observation() const noexcept { return observation_; }

private:
    std::size_t observation_;
};

// A leave-one-out refit failed on one fold.
class FoldFailure : public NumericError {
public:
    FoldFailure(const std::string& what, std::size_t fold);
    std::size_t fold() const noexcept { return fold_; }

private:
    std::size_t fold_;
};

}  // namespace bandppp
