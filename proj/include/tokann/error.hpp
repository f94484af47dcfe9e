#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tokann {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters, configuration values, or misuse of an API contract.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (corpus lines, eval files, snapshots).
class DataError : public Error {
public:
    using Error::Error;
};

/// A snapshot section failed its checksum or is structurally damaged.
class IntegrityError : public DataError {
public:
    using DataError::DataError;
};

/// A snapshot was written by an unsupported format version.
class VersionError : public DataError {
public:
    using DataError::DataError;
};

/// Syntax error in the restriction query language. Carries the byte offset
/// of the offending token so callers can point at the input.
class ParseError : public Error {
public:
    ParseError(std::size_t byte_offset, const std::string& expected)
        : Error("syntax error at byte " + std::to_string(byte_offset) + ": " + expected),
          byte_offset_(byte_offset),
          expected_(expected) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t byte_offset_;
    std::string expected_;
};

}  // namespace tokann
