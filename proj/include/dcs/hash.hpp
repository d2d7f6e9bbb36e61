#pragma once

#include <cstdint>
#include <string_view>

namespace dcs {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// FNV-1a 64-bit. Pass a previous digest as `state` to continue hashing.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffsetBasis) {
    for (const char c : bytes) {
        state ^= static_cast<std::uint8_t>(c);
        state *= kFnvPrime;
    }
    return state;
}

constexpr std::uint64_t fnv1a64_u64(std::uint64_t value, std::uint64_t state) {
    for (int i = 0; i < 8; ++i) {
        state ^= (value >> (8 * i)) & 0xffU;
        state *= kFnvPrime;
    }
    return state;
}

static_assert(fnv1a64("") == kFnvOffsetBasis);
static_assert(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);

}  // namespace dcs
