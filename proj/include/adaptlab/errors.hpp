#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace adaptlab {

// Invalid model/run configuration or a shape that cannot conform. Fatal for
// the run that raised it; the experiment runner records it and moves on.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric domain violation (log of non-positive value, non-finite input).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failure while reading or writing artifacts.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    s += "]";
    return s;
}

inline void require_same_shape(const std::vector<std::int64_t>& a,
                               const std::vector<std::int64_t>& b,
                               const char* op) {
    if (a != b) {
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a) +
                          " vs " + shape_str(b));
    }
}

}  // namespace adaptlab
