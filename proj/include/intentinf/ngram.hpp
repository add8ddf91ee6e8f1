#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "intentinf/corpus.hpp"
#include "intentinf/error.hpp"

namespace intentinf {

/// Bigram next-action model with add-epsilon smoothing. Contexts never seen
/// in training back off to the add-epsilon unigram over targets.
class BigramModel {
 public:
  BigramModel() = default;

  BigramModel(std::size_t vocab, double smoothing)
      : vocab_(vocab), smoothing_(smoothing), bigram_(vocab * vocab, 0.0), context_total_(vocab, 0.0),
        unigram_(vocab, 0.0) {
    if (vocab < 3) throw Error(ErrorCode::InvalidHyperparameters, "vocabulary too small");
    if (!(smoothing >= 0.0)) throw Error(ErrorCode::InvalidHyperparameters, "smoothing must be >= 0");
  }

  static BigramModel fit(std::span<const TrainingPair> pairs, std::size_t vocab, double smoothing) {
    BigramModel m(vocab, smoothing);
    for (const auto& p : pairs) m.add(p.prefix.back(), p.target);
    return m;
  }

  void add(ActionIndex context, ActionIndex target) {
    bigram_[context * vocab_ + target] += 1.0;
    context_total_[context] += 1.0;
    unigram_[target] += 1.0;
    total_ += 1.0;
  }

  std::vector<double> predict(std::span<const ActionIndex> prefix) const {
    if (prefix.empty()) throw Error(ErrorCode::EmptyPrefix, "predict needs at least one action");
    const ActionIndex ctx = prefix.back();
    const double support = static_cast<double>(vocab_ - 1);
    std::vector<double> out(vocab_, 0.0);
    const bool seen = ctx < vocab_ && context_total_[ctx] > 0.0;
    const double* counts = seen ? &bigram_[ctx * vocab_] : unigram_.data();
    const double denom = (seen ? context_total_[ctx] : total_) + smoothing_ * support;
    double sum = 0.0;
    for (std::size_t a = 0; a < vocab_; ++a) {
      if (a == kPad) continue;
      out[a] = denom > 0.0 ? (counts[a] + smoothing_) / denom : 1.0 / support;
      sum += out[a];
    }
    for (auto& v : out) v /= sum;
    return out;
  }

  std::size_t vocab_size() const noexcept { return vocab_; }
  double smoothing() const noexcept { return smoothing_; }
  std::span<const double> bigram_counts() const noexcept { return bigram_; }
  std::span<const double> context_totals() const noexcept { return context_total_; }
  std::span<const double> unigram_counts() const noexcept { return unigram_; }
  double total() const noexcept { return total_; }

  /// Rebuilds a model from stored count tables (checkpoint loading).
  static BigramModel from_tables(std::size_t vocab, double smoothing, std::vector<double> bigram,
                                 std::vector<double> context_total, std::vector<double> unigram) {
    BigramModel m(vocab, smoothing);
    if (bigram.size() != vocab * vocab || context_total.size() != vocab || unigram.size() != vocab)
      throw Error(ErrorCode::CorruptCheckpoint, "bigram table shapes do not match vocabulary");
    m.bigram_ = std::move(bigram);
    m.context_total_ = std::move(context_total);
    m.unigram_ = std::move(unigram);
    m.total_ = 0.0;
    for (double u : m.unigram_) m.total_ += u;
    return m;
  }

  friend bool operator==(const BigramModel&, const BigramModel&) = default;

 private:
  std::size_t vocab_ = 0;
  double smoothing_ = 0.0;
  std::vector<double> bigram_;
  std::vector<double> context_total_;
  std::vector<double> unigram_;
  double total_ = 0.0;
};

}  // namespace intentinf
