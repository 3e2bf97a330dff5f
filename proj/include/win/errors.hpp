#pragma once

#include <stdexcept>
#include <string>

namespace win {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes or extents do not satisfy an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Feature-map geometry is incompatible with patching, merging or windowing.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Invalid model / training configuration (bad JSON, unknown key, bad value).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A forward pass produced a non-finite value, or training diverged.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed, truncated or unreadable checkpoint file.
class CheckpointError : public Error {
public:
    enum class Kind { io, bad_magic, truncated, duplicate_name, shape_overflow, bad_dtype, trailing_data, mismatch };

    CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

}  // namespace win
