#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace fiplab::rng {

// splitmix64, used for seeding and for deriving independent stream seeds.
// All randomness in the project flows through these two generators so that
// results are bit-identical across platforms.
struct SplitMix64 {
    std::uint64_t state;

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

// xoshiro256++ seeded through splitmix64.
class Xoshiro256pp {
  public:
    explicit Xoshiro256pp(std::uint64_t seed);

    std::uint64_t next();

    // Uniform in [0, 1), 53-bit resolution.
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Unbiased integer in [0, bound) via rejection sampling.
    std::uint64_t below(std::uint64_t bound);
    // +1 or -1 with equal probability.
    double rademacher();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

  private:
    std::array<std::uint64_t, 4> s_;
};

// Deterministic seed derivation for named sub-streams, e.g. one stream per
// probe or per epoch. derive_seed(m, a, b) == derive_seed(m, a, b) always.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace fiplab::rng
