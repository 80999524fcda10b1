#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace unblur {

// Error taxonomy; the CLI maps each class to a distinct nonzero exit code.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};
struct ArgumentError : std::runtime_error {
    explicit ArgumentError(const std::string& msg) : std::runtime_error("argument error: " + msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("i/o error: " + msg) {}
};
struct PhaseOrderError : std::runtime_error {
    explicit PhaseOrderError(const std::string& msg) : std::runtime_error("phase-order error: " + msg) {}
};
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& msg) : std::runtime_error("integrity error: " + msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ArgumentError(msg);
}
inline void require_config(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

}  // namespace unblur
