#include "support/pairwise.hpp"

#include "support/errors.hpp"

namespace fiplab::support {

PairwiseAccumulator::PairwiseAccumulator(std::size_t dim) : dim_(dim) {}

void PairwiseAccumulator::add(std::span<const double> term) {
    if (term.size() != dim_) {
        raise(ErrorCode::invalid_argument, "pairwise accumulator: term dimension mismatch");
    }
    Partial p{0, std::vector<double>(term.begin(), term.end())};
    while (!stack_.empty() && stack_.back().level == p.level) {
        const auto& top = stack_.back().sum;
        for (std::size_t i = 0; i < dim_; ++i) {
            p.sum[i] = top[i] + p.sum[i];
        }
        ++p.level;
        stack_.pop_back();
    }
    stack_.push_back(std::move(p));
    ++count_;
}

std::vector<double> PairwiseAccumulator::finish() {
    if (stack_.empty()) {
        count_ = 0;
        return std::vector<double>(dim_, 0.0);
    }
    std::vector<double> acc = std::move(stack_.back().sum);
    stack_.pop_back();
    while (!stack_.empty()) {
        const auto& top = stack_.back().sum;
        for (std::size_t i = 0; i < dim_; ++i) {
            acc[i] = top[i] + acc[i];
        }
        stack_.pop_back();
    }
    count_ = 0;
    return acc;
}

void ScalarPairwiseAccumulator::add(double term) {
    Partial p{0, term};
    while (!stack_.empty() && stack_.back().level == p.level) {
        p.sum = stack_.back().sum + p.sum;
        ++p.level;
        stack_.pop_back();
    }
    stack_.push_back(p);
    ++count_;
}

double ScalarPairwiseAccumulator::finish() {
    if (stack_.empty()) {
        count_ = 0;
        return 0.0;
    }
    double acc = stack_.back().sum;
    stack_.pop_back();
    while (!stack_.empty()) {
        acc = stack_.back().sum + acc;
        stack_.pop_back();
    }
    count_ = 0;
    return acc;
}

}  // namespace fiplab::support
