#pragma once

#include <stdexcept>
#include <string>

namespace dbd {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration (bad field values, missing required settings).
struct ConfigError : Error {
    using Error::Error;
};

/// Tensor shape / dimension mismatch.
struct DimensionError : Error {
    using Error::Error;
};

/// Bad argument to a library call.
struct ArgumentError : Error {
    using Error::Error;
};

/// Failure reading an input artifact (dataset, checkpoint, image).
struct LoadError : Error {
    using Error::Error;
};

/// Failure writing an output artifact.
struct IoError : Error {
    using Error::Error;
};

/// Numeric breakdown at runtime (NaN loss, zero-norm feature).
struct NumericError : Error {
    using Error::Error;
};

} // namespace dbd
