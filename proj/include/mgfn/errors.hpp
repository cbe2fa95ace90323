// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mgfn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes or channel widths do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A caller-supplied argument is outside the operation's domain.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Invalid architecture or training configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Manifest, feature, or mask file could not be read or is inconsistent.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Dataset cannot satisfy a request (e.g. too few videos of a class).
class DataError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or a failed gradient check.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// AUC/AP requested on input where the metric is undefined.
class MetricError : public Error {
public:
    using Error::Error;
};

}  // namespace mgfn
