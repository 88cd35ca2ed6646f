#pragma once

#include <cstdlib>
#include <span>
#include <stdexcept>
#include <string>

namespace nescl {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy mirrors the CLI exit codes: config -> 2, data -> 3, numeric -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fixed-shape pairwise reduction so long sums are reproducible and accurate
// independent of how callers might batch them.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
    static const LogLevel lvl = [] {
        const char* v = std::getenv("NESCL_LOG");
        if (v == nullptr) return LogLevel::info;
        const std::string s(v);
        if (s == "quiet") return LogLevel::quiet;
        if (s == "debug") return LogLevel::debug;
        return LogLevel::info;
    }();
    return lvl;
}

}  // namespace nescl
