#include "support/rng.hpp"

namespace fiplab::rng {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

Xoshiro256pp::Xoshiro256pp(std::uint64_t seed) {
    SplitMix64 sm{seed};
    for (auto& word : s_) {
        word = sm.next();
    }
}

std::uint64_t Xoshiro256pp::next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Xoshiro256pp::uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Xoshiro256pp::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::uint64_t Xoshiro256pp::below(std::uint64_t bound) {
    if (bound == 0) {
        return 0;
    }
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        std::uint64_t r = next();
        if (r >= threshold) {
            return r % bound;
        }
    }
}

double Xoshiro256pp::rademacher() {
    return (next() & 1ULL) ? 1.0 : -1.0;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    SplitMix64 sm{master};
    sm.state += 0x9e3779b97f4a7c15ULL * (stream + 1);
    std::uint64_t a = sm.next();
    sm.state += 0x9e3779b97f4a7c15ULL * (index + 1);
    std::uint64_t b = sm.next();
    return a ^ rotl(b, 31);
}

}  // namespace fiplab::rng
