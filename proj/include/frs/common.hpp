#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace frs {

/// Invalid tensor shapes, misaligned pyramids, bad op arguments.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or truncated FRST snapshot files.
class CodecError : public std::runtime_error {
public:
    explicit CodecError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration values (negative weights, class-count mismatch, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values produced by a forward op or a diverging training run.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// FNV-1a. Used for config hashes and dataset content hashes.
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

std::string hex64(uint64_t v);

/// FRS_THREADS caps analysis parallelism; defaults to 1.
int analysis_threads();

}  // namespace frs
