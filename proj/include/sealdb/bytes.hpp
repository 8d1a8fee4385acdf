#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sealdb/error.hpp"

namespace sealdb {

using Bytes = std::vector<std::uint8_t>;
using BytesView = std::span<const std::uint8_t>;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(BytesView b) {
    return std::string(b.begin(), b.end());
}

inline std::string hex_encode(BytesView data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (std::uint8_t byte : data) {
        out.push_back(digits[byte >> 4]);
        out.push_back(digits[byte & 0x0f]);
    }
    return out;
}

inline int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

inline Bytes hex_decode(std::string_view text) {
    if (text.size() % 2 != 0)
        fail(Errc::format_error, "odd-length hex string");
    Bytes out;
    out.reserve(text.size() / 2);
    for (std::size_t i = 0; i < text.size(); i += 2) {
        int hi = hex_nibble(text[i]);
        int lo = hex_nibble(text[i + 1]);
        if (hi < 0 || lo < 0)
            fail(Errc::format_error, "invalid hex digit", i);
        out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
    return out;
}

inline std::array<std::uint8_t, 8> be64_encode(std::uint64_t value) {
    std::array<std::uint8_t, 8> out{};
    for (int i = 7; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(value & 0xff);
        value >>= 8;
    }
    return out;
}

inline std::uint64_t be64_decode(BytesView bytes) {
    if (bytes.size() != 8)
        fail(Errc::format_error, "expected 8 bytes for a big-endian key");
    std::uint64_t value = 0;
    for (std::uint8_t b : bytes) value = value << 8 | b;
    return value;
}

/// Deterministic 64-bit generator. std::shuffle and the standard
/// distributions are implementation-defined, so everything seeded goes
/// through this to stay byte-stable across platforms and toolchains.
struct SplitMix64 {
    std::uint64_t state;

    constexpr explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    constexpr std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform-enough value in [0, bound); bound must be nonzero.
    constexpr std::uint64_t next_below(std::uint64_t bound) {
        return next() % bound;
    }
};

inline constexpr std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : text) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Stable sub-seed derivation so one user-facing seed can drive several
/// independent deterministic streams.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    SplitMix64 rng(seed ^ fnv1a64(label));
    rng.next();
    return rng.next();
}

/// Fisher-Yates with SplitMix64; same permutation for the same seed on
/// every platform.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
    SplitMix64 rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

/// Exact nonnegative fraction. Used for noise fractions, where
/// ceil(num*n/den) must be computed without floating point.
struct Rational {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    constexpr Rational() = default;
    constexpr Rational(std::uint64_t n, std::uint64_t d) : num(n), den(d) {
        if (den == 0) fail(Errc::invalid_config, "zero denominator");
        std::uint64_t g = std::gcd(num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    /// Accepts "0.05", ".2", "3", or "1/20".
    static Rational parse(std::string_view text) {
        if (text.empty()) fail(Errc::invalid_config, "empty fraction");
        auto slash = text.find('/');
        if (slash != std::string_view::npos) {
            return Rational(parse_u64(text.substr(0, slash)),
                            parse_u64(text.substr(slash + 1)));
        }
        auto dot = text.find('.');
        if (dot == std::string_view::npos) return Rational(parse_u64(text), 1);
        std::string_view int_part = text.substr(0, dot);
        std::string_view frac_part = text.substr(dot + 1);
        if (int_part.empty() && frac_part.empty())
            fail(Errc::invalid_config, "malformed fraction: " + std::string(text));
        std::uint64_t den = 1;
        for (std::size_t i = 0; i < frac_part.size(); ++i) {
            if (den > 1'000'000'000'000'000'000ull / 10)
                fail(Errc::invalid_config, "fraction has too many digits");
            den *= 10;
        }
        std::uint64_t num = (int_part.empty() ? 0 : parse_u64(int_part)) * den +
                            (frac_part.empty() ? 0 : parse_u64(frac_part));
        return Rational(num, den);
    }

    [[nodiscard]] constexpr bool is_zero() const { return num == 0; }
    [[nodiscard]] constexpr double to_double() const {
        return static_cast<double>(num) / static_cast<double>(den);
    }

    /// ceil(num * n / den), exact.
    [[nodiscard]] std::uint64_t ceil_mul(std::uint64_t n) const {
        unsigned __int128 product = static_cast<unsigned __int128>(num) * n;
        return static_cast<std::uint64_t>((product + den - 1) / den);
    }

    [[nodiscard]] std::string to_string() const {
        return std::to_string(num) + "/" + std::to_string(den);
    }

    friend constexpr bool operator==(const Rational&, const Rational&) = default;

private:
    static std::uint64_t parse_u64(std::string_view text) {
        if (text.empty()) fail(Errc::invalid_config, "empty number in fraction");
        std::uint64_t value = 0;
        for (char c : text) {
            if (c < '0' || c > '9')
                fail(Errc::invalid_config, "malformed fraction digit");
            if (value > (static_cast<std::uint64_t>(-1) - (c - '0')) / 10)
                fail(Errc::invalid_config, "fraction out of range");
            value = value * 10 + static_cast<std::uint64_t>(c - '0');
        }
        return value;
    }
};

} // namespace sealdb
