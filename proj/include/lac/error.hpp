#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lac {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad dimensions, empty subsets, inconsistent knobs.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// API misuse: out-of-range indices, premature finalize, stale tapes.
class UsageError : public Error {
public:
    using Error::Error;
};

/// A policy asked for something the hard mask forbids (duplicate classifier).
class PolicyError : public UsageError {
public:
    using UsageError::UsageError;
};

/// Non-finite values in gradients, losses or parameters.
class NumericError : public Error {
public:
    using Error::Error;
};

enum class FormatErrorCode {
    bad_magic = 1,
    truncated = 2,
    row_sum = 3,
    count_mismatch = 4,
    out_of_range = 5,
    bad_manifest = 6,
    io = 7,
};

inline const char* to_string(FormatErrorCode code)
{
    switch (code) {
    case FormatErrorCode::bad_magic: return "bad_magic";
    case FormatErrorCode::truncated: return "truncated";
    case FormatErrorCode::row_sum: return "row_sum";
    case FormatErrorCode::count_mismatch: return "count_mismatch";
    case FormatErrorCode::out_of_range: return "out_of_range";
    case FormatErrorCode::bad_manifest: return "bad_manifest";
    case FormatErrorCode::io: return "io";
    }
    return "unknown";
}

/// Failure while reading or validating one of the on-disk formats.
class FormatError : public Error {
public:
    FormatError(FormatErrorCode code, std::size_t offset, const std::string& what)
        : Error(std::string(to_string(code)) + " at offset " + std::to_string(offset) + ": " + what)
        , code_(code)
        , offset_(offset)
    {
    }

    FormatErrorCode code() const noexcept { return code_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    FormatErrorCode code_;
    std::size_t offset_;
};

} // namespace lac
