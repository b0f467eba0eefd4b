#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fiplab::support {

// Streaming pairwise (binary-counter) summation over fixed-length vectors.
// Partial sums at equal tree depth merge as soon as both exist, so the
// reduction tree is the adjacent-pair tree regardless of how terms arrive.
// Summing a batch where each term appears twice in a row yields exactly
// twice the sum of the original batch, bit for bit.
class PairwiseAccumulator {
  public:
    explicit PairwiseAccumulator(std::size_t dim);

    void add(std::span<const double> term);
    std::size_t count() const { return count_; }

    // Drains the partial-sum stack; the accumulator is empty afterwards.
    std::vector<double> finish();

  private:
    struct Partial {
        int level;
        std::vector<double> sum;
    };

    std::size_t dim_;
    std::size_t count_ = 0;
    std::vector<Partial> stack_;
};

// Same reduction for scalar terms.
class ScalarPairwiseAccumulator {
  public:
    void add(double term);
    std::size_t count() const { return count_; }
    double finish();

  private:
    struct Partial {
        int level;
        double sum;
    };

    std::size_t count_ = 0;
    std::vector<Partial> stack_;
};

}  // namespace fiplab::support
