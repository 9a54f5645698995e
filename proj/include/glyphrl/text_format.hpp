#pragma once

#include <charconv>
#include <stdexcept>
#include <string>
#include <string_view>

namespace glyphrl {

/// Shortest decimal form that parses back to the identical double. All CSV
/// and report output goes through this so runs with equal seeds produce
/// byte-identical files and persisted values recompute bit-exactly.
inline std::string format_double(double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw std::invalid_argument("not a double: '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace glyphrl
