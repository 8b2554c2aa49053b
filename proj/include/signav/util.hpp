#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

namespace signav {

inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr uint64_t kFnvPrime = 0x100000001b3ull;

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = kFnvOffset) {
    return fnv1a64(s.data(), s.size(), h);
}

// Deterministic sub-stream seeds: hash(seed, label, index).
inline uint64_t derive_seed(uint64_t seed, std::string_view label, uint64_t index = 0) {
    uint64_t h = kFnvOffset;
    unsigned char buf[8];
    std::memcpy(buf, &seed, 8);
    h = fnv1a64(buf, 8, h);
    h = fnv1a64(label, h);
    std::memcpy(buf, &index, 8);
    return fnv1a64(buf, 8, h);
}

// Round to at most 9 significant decimal digits (scene-file number policy).
inline double round_sig9(double x) {
    if (x == 0.0 || !std::isfinite(x)) return x;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return std::strtod(buf, nullptr);
}

inline void put_u32_le(std::vector<unsigned char>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_u64_le(std::vector<unsigned char>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_f64_le(std::vector<unsigned char>& out, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64_le(out, v);
}

}  // namespace signav
