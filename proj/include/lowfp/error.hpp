#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lowfp {

/// Base for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI error report.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

/// Unknown format names, bad granularity settings, rejected config keys.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what, std::vector<std::string> keys = {})
        : Error(what), keys_(std::move(keys)) {}
    const char* kind() const noexcept override { return "config"; }
    const std::vector<std::string>& keys() const noexcept { return keys_; }

private:
    std::vector<std::string> keys_;
};

/// Shape mismatches, non-finite values, out-of-domain arguments.
class InputError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "input"; }
};

/// A value that must lie exactly on a format grid does not.
class PrecisionError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "precision"; }
};

/// Malformed tensor file. `offset()` is the byte position where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}
    const char* kind() const noexcept override { return "format"; }
    std::size_t offset() const noexcept { return offset_; }
    /// Message without the offset suffix.
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string detail_;
    std::size_t offset_;
};

}  // namespace lowfp
