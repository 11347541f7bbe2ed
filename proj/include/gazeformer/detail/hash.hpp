#pragma once

#include <cstdint>
#include <string>

namespace gazeformer::detail {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_string(const std::string& s, uint64_t seed) {
    uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h);
}

inline double u64_to_unit(uint64_t x) {
    return (x >> 11) * 0x1.0p-53;  // [0,1)
}

}  // namespace gazeformer::detail
