// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace quakecast {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor or layer shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Inconsistent user configuration (missing column, bad split, short window).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. backward() on a non-scalar.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Checkpoint does not match the model it is loaded into.
class VersionError : public Error {
public:
    using Error::Error;
};

/// Missing or unreadable files.
class IoError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during training (non-finite loss or gradient).
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace quakecast
