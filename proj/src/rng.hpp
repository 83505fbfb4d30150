#pragma once
// Deterministic RNG for simulations: xoshiro256++ with splitmix64 seeding.
// Self-contained so that streams are reproducible across platforms and
// standard-library versions (std::normal_distribution sequences are not).

#include <cmath>
#include <cstdint>

namespace bbm {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) {
        // stream lets each replica own an independent generator derived
        // from one master seed.
        uint64_t sm = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        for (auto& w : s_) w = splitmix64(sm);
        have_cached_ = false;
    }

    uint64_t next_u64() {
        uint64_t* s = s_;
        uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // uniform on [0,1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform on (0,1]
    double uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // standard normal, Marsaglia polar method with one cached value
    double normal() {
        if (have_cached_) { have_cached_ = false; return cached_; }
        double v1, v2, s;
        do {
            v1 = 2.0 * uniform() - 1.0;
            v2 = 2.0 * uniform() - 1.0;
            s = v1 * v1 + v2 * v2;
        } while (s >= 1.0 || s == 0.0);
        double f = std::sqrt(-2.0 * std::log(s) / s);
        cached_ = v2 * f;
        have_cached_ = true;
        return v1 * f;
    }

    // Exp(1)
    double exponential() { return -std::log(uniform_pos()); }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
    double cached_ = 0.0;
    bool have_cached_;
};

} // namespace bbm
