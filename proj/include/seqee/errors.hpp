#pragma once

#include <stdexcept>
#include <string>

namespace seqee {

// Error taxonomy used across the library. The CLI maps these to distinct
// process exit codes (see README).

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error("input error: " + msg) {}
};

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error("usage error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& file, long line, const std::string& msg)
        : std::runtime_error("parse error: " + file + ":" + std::to_string(line) + ": " + msg),
          line_number(line) {}
    long line_number;
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

}  // namespace seqee
