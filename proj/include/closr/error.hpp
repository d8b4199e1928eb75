#pragma once

#include <stdexcept>
#include <string>

namespace closr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values, unknown keys, bad flag combinations.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Missing files, malformed CSV, label vocabulary problems.
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite losses or gradients, degenerate numerical inputs.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace closr
