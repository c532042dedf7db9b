#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tfgn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixD = Matrix<double>;
using VectorD = Vector<double>;

using ClassId = int;

// Error categories map onto CLI exit codes (config 2, data 3, numeric 4).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Diagnostics. Non-fatal conditions (k clamping, ridge fallback) go through
// a replaceable sink so tests and the CLI can silence or capture them.

using LogSink = std::function<void(std::string_view)>;

inline LogSink& log_sink() {
    static LogSink sink = [](std::string_view msg) { std::clog << "[tfgn] " << msg << '\n'; };
    return sink;
}

inline void log_warning(std::string_view msg) {
    if (log_sink()) log_sink()(msg);
}

// ---------------------------------------------------------------------------
// Random streams. All randomness derives from one root seed; each consumer
// asks for a named substream so adding a consumer never shifts another's
// sequence.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t substream_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0) {
    return splitmix64(splitmix64(root ^ fnv1a64(tag)) + index);
}

inline Rng make_rng(std::uint64_t root, std::string_view tag, std::uint64_t index = 0) {
    return Rng(substream_seed(root, tag, index));
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

}  // namespace tfgn
