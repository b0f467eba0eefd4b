#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "support/hash.hpp"
#include "support/pairwise.hpp"
#include "support/rng.hpp"

using namespace fiplab;

TEST_CASE("xoshiro streams are deterministic and seed-sensitive") {
    rng::Xoshiro256pp a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const auto va = a.next();
        CHECK(va == b.next());
    }
    bool any_diff = false;
    rng::Xoshiro256pp a2(42);
    for (int i = 0; i < 100; ++i) {
        any_diff |= (a2.next() != c.next());
    }
    CHECK(any_diff);
}

TEST_CASE("uniform stays in [0,1) and below() respects the bound") {
    rng::Xoshiro256pp gen(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = gen.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(gen.below(17) < 17);
    }
}

TEST_CASE("derive_seed separates streams") {
    CHECK(rng::derive_seed(1, 2, 3) == rng::derive_seed(1, 2, 3));
    CHECK(rng::derive_seed(1, 2, 3) != rng::derive_seed(1, 2, 4));
    CHECK(rng::derive_seed(1, 2, 3) != rng::derive_seed(1, 3, 3));
    CHECK(rng::derive_seed(1, 2, 3) != rng::derive_seed(2, 2, 3));
}

TEST_CASE("fnv1a64 matches reference values") {
    // Reference digests of the FNV-1a test vectors.
    CHECK(hash::fnv1a64("", 0) == 0xcbf29ce484222325ULL);
    CHECK(hash::fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(hash::fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}

TEST_CASE("pairwise accumulator: duplicated terms give exactly twice the sum") {
    rng::Xoshiro256pp gen(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + gen.below(17);
        const std::size_t dim = 1 + gen.below(9);
        std::vector<std::vector<double>> terms(n, std::vector<double>(dim));
        for (auto& t : terms) {
            for (double& v : t) {
                v = gen.uniform(-1.0, 1.0) * std::pow(10.0, gen.uniform(-6.0, 6.0));
            }
        }
        support::PairwiseAccumulator plain(dim);
        for (const auto& t : terms) {
            plain.add(t);
        }
        support::PairwiseAccumulator doubled(dim);
        for (const auto& t : terms) {
            doubled.add(t);
            doubled.add(t);
        }
        const auto s1 = plain.finish();
        const auto s2 = doubled.finish();
        for (std::size_t i = 0; i < dim; ++i) {
            CHECK(s2[i] == 2.0 * s1[i]);  // bit-exact
        }
    }
}

TEST_CASE("scalar pairwise accumulator sums correctly") {
    support::ScalarPairwiseAccumulator acc;
    for (int i = 1; i <= 100; ++i) {
        acc.add(static_cast<double>(i));
    }
    CHECK(acc.finish() == doctest::Approx(5050.0).epsilon(1e-15));
}

TEST_CASE("empty accumulator yields zero") {
    support::PairwiseAccumulator acc(3);
    const auto s = acc.finish();
    CHECK(s == std::vector<double>{0.0, 0.0, 0.0});
}
