#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace focus {

// Counter-based 64-bit generator (SplitMix64). Output i is a pure function of
// (seed, i), so streams reproduce across platforms and languages:
//   z = seed + (i+1) * 0x9E3779B97F4A7C15
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   out = z ^ (z >> 31)
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), counter_(0) {}

    uint64_t next_u64() {
        uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; consumes two uniforms per pair
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // integer in [0, n)
    uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    uint64_t counter_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// FNV-1a, used to derive independent parameter/sample streams from names
inline uint64_t hash64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline Rng named_stream(uint64_t seed, std::string_view name) {
    return Rng(seed ^ hash64(name));
}

}  // namespace focus
