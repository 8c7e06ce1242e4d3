#include "lesioncad/rng.hpp"

namespace lesioncad {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view key, std::string_view stage) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ fnv1a64(key));
    h = splitmix64(h ^ fnv1a64(stage));
    return h;
}

}  // namespace lesioncad
