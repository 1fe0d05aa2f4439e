#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfsim {

// ---------------------------------------------------------------------------
// Error types. Everything user-facing throws one of these; messages carry the
// offending value so the CLI can print them verbatim.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InputError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct UnsupportedError : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

struct ResolutionError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Blow-up during time stepping; names the replica and step where it happened.
struct DivergenceError : Error {
    long replica;
    long step;
    DivergenceError(long replica_, long step_, const std::string& msg)
        : Error(msg), replica(replica_), step(step_) {}
};

// ---------------------------------------------------------------------------
// Double-double accumulator (Knuth two-sum chain). Used for pairwise drift
// sums and statistics reductions: the rounded result is independent of
// summand order up to ~2^-106 relative, which keeps permuted inputs
// bit-identical in practice.
// ---------------------------------------------------------------------------

struct DdAcc {
    double hi = 0.0;
    double lo = 0.0;

    inline void add(double v) {
        // two-sum of (hi, v), error folded into lo
        double s = hi + v;
        double bb = s - hi;
        double err = (hi - (s - bb)) + (v - bb);
        hi = s;
        lo += err;
    }

    inline void add(const DdAcc& o) {
        add(o.hi);
        lo += o.lo;
    }

    inline double value() const { return hi + lo; }
};

inline bool all_finite(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

inline bool all_finite(const std::vector<double>& v) {
    return all_finite(v.data(), v.size());
}

// FNV-1a 64-bit, used for config hashing.
inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace mfsim
