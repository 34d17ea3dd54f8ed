#pragma once

#include <stdexcept>
#include <string>

namespace sweepkit {

/// Precondition violation by the caller (bad dimensions, out-of-range parameters).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A policy, registry lookup or run configuration that cannot be resolved.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents (truncated records, bad magic, bad labels).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sweepkit
