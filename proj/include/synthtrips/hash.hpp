#pragma once

#include "synthtrips/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <string>
#include <string_view>

namespace synthtrips {

inline std::array<unsigned char, 32> sha256(std::string_view data) {
    std::array<unsigned char, 32> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error(Errc::io_error, "sha256 digest failed");
    return digest;
}

inline std::string sha256_hex(std::string_view data) {
    static constexpr char hex[] = "0123456789abcdef";
    const auto digest = sha256(data);
    std::string out;
    out.reserve(64);
    for (unsigned char b : digest) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xf]);
    }
    return out;
}

/// Joins parts with a unit separator so that ("ab","c") and ("a","bc") hash apart.
inline std::string hash_parts(std::initializer_list<std::string_view> parts) {
    std::string joined;
    for (auto p : parts) {
        joined.append(p);
        joined.push_back('\x1f');
    }
    return sha256_hex(joined);
}

/// First 64 bits of SHA-256 over the parts, big-endian.
inline std::uint64_t hash64(std::initializer_list<std::string_view> parts) {
    std::string joined;
    for (auto p : parts) {
        joined.append(p);
        joined.push_back('\x1f');
    }
    const auto digest = sha256(joined);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | digest[static_cast<std::size_t>(i)];
    return v;
}

/// Seed for a child unit of work: sha256(parent seed, label...). Adding new labels
/// elsewhere never shifts the seeds of existing ones.
inline std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::string_view> labels) {
    std::string joined = std::to_string(parent);
    joined.push_back('\x1f');
    for (auto l : labels) {
        joined.append(l);
        joined.push_back('\x1f');
    }
    return hash64({joined});
}

/// mt19937_64 with a portable bounded draw. std::uniform_int_distribution is
/// implementation-defined, which would break cross-toolchain reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    /// Uniform real in [0, 1) from the top 53 bits.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace synthtrips
