#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pml {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user input: bad config values, mismatched dimensions, missing files.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An operation that needs at least one point received none.
class EmptyInputError : public Error {
public:
    using Error::Error;
};

/// Malformed on-disk data. `offset` is the byte position where parsing failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// A loss or gradient became non-finite during optimization.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace pml
