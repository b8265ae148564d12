#pragma once

#include <stdexcept>
#include <string>

namespace sirenlab {

// Base for every domain error raised by the library. The CLI maps these to
// exit code 1; anything else escaping main() is a bug.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad argument values (negative MSE, empty inputs, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Shapes that do not chain (weights vs. coordinates, feature dims, ...).
class StructuralError : public Error {
public:
    using Error::Error;
};

// Non-finite intermediate during a numerical computation.
class NumericError : public Error {
public:
    NumericError(const std::string& what, int layer = -1) : Error(what), layer_(layer) {}
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Requested value lies outside what the model or codec can produce.
class RangeError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

// A statistic that is undefined for the given data (zero-variance EV, ...).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

class ConditioningError : public Error {
public:
    using Error::Error;
};

class InfeasibleError : public Error {
public:
    using Error::Error;
};

// A dense allocation would exceed the configured memory budget.
class SizeError : public Error {
public:
    using Error::Error;
};

}  // namespace sirenlab
