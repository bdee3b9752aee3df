#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace manetl {

// 64-bit FNV-1a, used for fingerprints that end up in text files.
class Fnv1a {
public:
    Fnv1a& bytes(std::span<const std::uint8_t> data) {
        for (std::uint8_t b : data) mix(b);
        return *this;
    }
    Fnv1a& text(std::string_view s) {
        for (char c : s) mix(static_cast<std::uint8_t>(c));
        return *this;
    }
    Fnv1a& u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(v >> (8 * i)));
        return *this;
    }
    std::uint64_t value() const { return state_; }

private:
    void mix(std::uint8_t b) {
        state_ ^= b;
        state_ *= 0x100000001b3ull;
    }
    std::uint64_t state_ = 0xcbf29ce484222325ull;
};

// splitmix64 finalizer: a cheap bijective scrambler for deriving seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
    return mix64(seed ^ mix64(value));
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::string_view text) {
    return hash_combine(seed, Fnv1a().text(text).value());
}

}  // namespace manetl
