#pragma once

#include <stdexcept>
#include <string>

namespace usfg {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument supplied by a caller (bad dimensions, bad fractions, ...).
struct ArgumentError : Error {
    using Error::Error;
};

// Malformed byte stream; message carries the byte offset where parsing stopped.
struct DecodeError : Error {
    DecodeError(const std::string& msg, size_t offset)
        : Error(msg + " (at byte offset " + std::to_string(offset) + ")"), offset(offset) {}
    size_t offset;
};

// Bad run configuration (missing paths, inconsistent shapes, empty manifest).
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem / OS level failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace usfg
