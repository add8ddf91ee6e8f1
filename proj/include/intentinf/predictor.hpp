#pragma once

// Per-intention next-action predictors and the likelihood matrix they feed
// into inference. Two families share one interface: a recurrent network
// trained with cross-entropy, and a smoothed bigram counter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "intentinf/corpus.hpp"
#include "intentinf/error.hpp"
#include "intentinf/ngram.hpp"
#include "intentinf/recurrent.hpp"

namespace intentinf {

enum class PredictorKind : std::uint8_t { Recurrent = 0, Ngram = 1 };
enum class OptimizerKind : std::uint8_t { Sgd = 0, Adam = 1 };

inline std::string to_string(PredictorKind k) { return k == PredictorKind::Recurrent ? "recurrent" : "ngram"; }
inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

inline PredictorKind parse_predictor_kind(std::string_view s) {
  if (s == "recurrent") return PredictorKind::Recurrent;
  if (s == "ngram") return PredictorKind::Ngram;
  throw Error(ErrorCode::InvalidHyperparameters, "unknown predictor kind '" + std::string(s) + "'");
}

inline OptimizerKind parse_optimizer_kind(std::string_view s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw Error(ErrorCode::InvalidHyperparameters, "unknown optimizer '" + std::string(s) + "'");
}

struct Hyperparameters {
  std::size_t epochs = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 3e-4;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
  /// Add-epsilon constant of the bigram model.
  double smoothing = 0.1;

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

inline void validate(const Hyperparameters& hp) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidHyperparameters, m); };
  if (hp.epochs < 1) fail("epochs must be >= 1");
  if (hp.batch_size < 1) fail("batch size must be >= 1");
  if (!(hp.learning_rate > 0.0) || !std::isfinite(hp.learning_rate)) fail("learning rate must be > 0");
  if (hp.embed_dim < 1 || hp.hidden_dim < 1) fail("embedding and hidden dims must be >= 1");
  if (!(hp.smoothing >= 0.0) || !std::isfinite(hp.smoothing)) fail("smoothing must be >= 0");
}

struct PredictorModel {
  PredictorKind kind = PredictorKind::Ngram;
  IntentionIndex intention = 0;
  std::uint64_t vocabulary_hash = 0;
  Hyperparameters hyperparameters;
  std::variant<RecurrentNet, BigramModel> body;

  std::size_t vocab_size() const {
    return std::visit(
        [](const auto& m) -> std::size_t {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, RecurrentNet>)
            return m.shape().vocab;
          else
            return m.vocab_size();
        },
        body);
  }

  friend bool operator==(const PredictorModel&, const PredictorModel&) = default;
};

/// Loss trajectory of one training run.
struct TrainingReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
};

namespace detail {

inline void validate_pairs(std::span<const TrainingPair> pairs, std::size_t vocab) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training pairs");
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    auto where = "pair " + std::to_string(k);
    if (p.prefix.empty()) throw Error(ErrorCode::EmptyPrefix, where);
    if (p.target == kPad || p.target >= vocab) throw Error(ErrorCode::InvalidIndex, where + ": bad target");
    for (auto a : p.prefix)
      if (a == kPad || a >= vocab) throw Error(ErrorCode::InvalidIndex, where + ": bad prefix action");
  }
}

inline void check_prefix(std::span<const ActionIndex> prefix, std::size_t vocab) {
  if (prefix.empty()) throw Error(ErrorCode::EmptyPrefix, "prefix is empty");
  for (auto a : prefix)
    if (a == kPad || a >= vocab) throw Error(ErrorCode::InvalidIndex, "prefix action out of range");
}

inline void train_recurrent(RecurrentNet& net, std::span<const TrainingPair> pairs, const Hyperparameters& hp,
                            TrainingReport* report) {
  const std::size_t P = net.parameter_count();
  std::vector<double> grad, m(P, 0.0), v(P, 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::uint64_t t = 0;

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed({hp.seed, 0x5348554646ULL}));
  std::vector<TrainingPair> batch;
  batch.reserve(hp.batch_size);

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + hp.batch_size);
      for (std::size_t k = start; k < stop; ++k) batch.push_back(pairs[order[k]]);
      const double loss = net.loss_and_gradient(batch, &grad);
      if (!std::isfinite(loss))
        throw Error(ErrorCode::NonFiniteLoss,
                    "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
      epoch_loss += loss;
      ++batches;

      auto params = net.parameters();
      if (hp.optimizer == OptimizerKind::Sgd) {
        for (std::size_t k = 0; k < P; ++k) params[k] -= hp.learning_rate * grad[k];
      } else {
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t k = 0; k < P; ++k) {
          m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
          v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
          params[k] -= hp.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + adam_eps);
        }
      }
    }
    if (report) report->epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
  }
  for (double w : net.parameters())
    if (!std::isfinite(w)) throw Error(ErrorCode::NonFiniteLoss, "non-finite parameter after training");
}

}  // namespace detail

/// Fits a next-action model for one intention. Deterministic given hp.seed.
inline PredictorModel train(std::span<const TrainingPair> pairs, const Hyperparameters& hp, PredictorKind kind,
                            const ActionVocabulary& vocabulary, IntentionIndex intention = 0,
                            TrainingReport* report = nullptr) {
  validate(hp);
  const std::size_t A = vocabulary.size();
  detail::validate_pairs(pairs, A);

  PredictorModel model;
  model.kind = kind;
  model.intention = intention;
  model.vocabulary_hash = vocabulary.hash();
  model.hyperparameters = hp;

  if (kind == PredictorKind::Ngram) {
    model.body = BigramModel::fit(pairs, A, hp.smoothing);
    if (report) {
      // Closed form: no epochs. Report the loss of the uniform start for reference.
      report->initial_loss = std::log(static_cast<double>(A - 1));
      double total = 0.0;
      const auto& bm = std::get<BigramModel>(model.body);
      for (const auto& p : pairs) total -= std::log(bm.predict(p.prefix)[p.target]);
      report->final_loss = total / static_cast<double>(pairs.size());
    }
    return model;
  }

  RecurrentNet net({A, hp.embed_dim, hp.hidden_dim});
  net.initialize(hp.seed);
  if (report) report->initial_loss = net.loss_and_gradient(pairs, nullptr);
  detail::train_recurrent(net, pairs, hp, report);
  if (report) report->final_loss = net.loss_and_gradient(pairs, nullptr);
  model.body = std::move(net);
  return model;
}

/// Length-A probability vector over the next action; PAD is always 0.
inline std::vector<double> predict_next(const PredictorModel& model, std::span<const ActionIndex> prefix) {
  detail::check_prefix(prefix, model.vocab_size());
  return std::visit([&](const auto& m) { return m.predict(prefix); }, model.body);
}

/// predict_next for every proper prefix seq[0..k), k = 1..|seq|-1.
inline std::vector<std::vector<double>> predict_prefixes(const PredictorModel& model,
                                                         std::span<const ActionIndex> seq) {
  if (seq.empty()) throw Error(ErrorCode::EmptyPrefix, "sequence is empty");
  detail::check_prefix(seq, model.vocab_size());
  if (auto* net = std::get_if<RecurrentNet>(&model.body)) return net->predict_prefixes(seq);
  std::vector<std::vector<double>> out;
  for (std::size_t k = 1; k < seq.size(); ++k) out.push_back(predict_next(model, seq.first(k)));
  return out;
}

inline constexpr double kProbabilityFloor = 1e-12;

/// Probability each assumed-intention model gave to the action actually
/// observed at positions 1..L. Rows are positions, columns intentions.
class LikelihoodMatrix {
 public:
  LikelihoodMatrix() = default;

  /// Row-major values; every entry is floored to kProbabilityFloor and must
  /// not exceed 1.
  LikelihoodMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (cols_ == 0) throw Error(ErrorCode::InvalidConfig, "likelihood matrix needs at least one intention");
    if (values_.size() != rows_ * cols_) throw Error(ErrorCode::InvalidConfig, "likelihood matrix shape mismatch");
    for (auto& v : values_) {
      if (!(v >= 0.0 && v <= 1.0 + 1e-12))
        throw Error(ErrorCode::InvalidConfig, "likelihood entries must be probabilities");
      v = std::clamp(v, kProbabilityFloor, 1.0);
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double at(std::size_t k, std::size_t i) const { return values_.at(k * cols_ + i); }
  std::span<const double> row(std::size_t k) const { return std::span<const double>(values_).subspan(k * cols_, cols_); }
  std::span<const double> values() const noexcept { return values_; }

  /// Full next-action distribution of model i at position k (diagnostics).
  /// Empty when the matrix was built from raw values.
  std::span<const double> distribution(std::size_t k, std::size_t i) const {
    if (distributions_.empty()) return {};
    return std::span<const double>(distributions_).subspan((k * cols_ + i) * vocab_, vocab_);
  }

  /// Same entries with columns reordered: column c of the result is column
  /// perm[c] of this matrix.
  LikelihoodMatrix permuted(std::span<const std::size_t> perm) const {
    std::vector<double> v(values_.size());
    for (std::size_t k = 0; k < rows_; ++k)
      for (std::size_t c = 0; c < cols_; ++c) v[k * cols_ + c] = values_[k * cols_ + perm[c]];
    return LikelihoodMatrix(rows_, cols_, std::move(v));
  }

 private:
  friend LikelihoodMatrix build_likelihood_matrix(std::span<const PredictorModel>, std::span<const ActionIndex>);

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t vocab_ = 0;
  std::vector<double> values_;
  std::vector<double> distributions_;
};

/// Feeds `seq` to every model with teacher forcing: entry (k, i) is model i's
/// probability of seq[k] given seq[0..k), for k = 1..|seq|-1.
inline LikelihoodMatrix build_likelihood_matrix(std::span<const PredictorModel> models,
                                                std::span<const ActionIndex> seq) {
  if (models.empty()) throw Error(ErrorCode::InvalidConfig, "need at least one model");
  if (seq.size() < 2) throw Error(ErrorCode::SequenceTooShort, "need at least two actions");
  const std::size_t A = models.front().vocab_size();
  for (const auto& m : models)
    if (m.vocab_size() != A || m.vocabulary_hash != models.front().vocabulary_hash)
      throw Error(ErrorCode::VocabularyMismatch, "models disagree on the vocabulary");
  const std::size_t K = seq.size() - 1, N = models.size();

  std::vector<double> values(K * N);
  std::vector<double> dists(K * N * A);
  for (std::size_t i = 0; i < N; ++i) {
    auto per_pos = predict_prefixes(models[i], seq);
    for (std::size_t k = 0; k < K; ++k) {
      values[k * N + i] = per_pos[k][seq[k + 1]];
      std::copy(per_pos[k].begin(), per_pos[k].end(), dists.begin() + (k * N + i) * A);
    }
  }
  LikelihoodMatrix lm(K, N, std::move(values));
  lm.vocab_ = A;
  lm.distributions_ = std::move(dists);
  return lm;
}

/// Compares analytic gradients of the mean batch cross-entropy with central
/// differences (step 1e-5) on `coordinates` randomly chosen parameters.
/// Relative error per coordinate: |g - fd| / max(|g| + |fd|, 1e-6).
inline double gradient_check(const PredictorModel& model, std::span<const TrainingPair> batch,
                             std::size_t coordinates = 200, std::uint64_t seed = 0) {
  const auto* net = std::get_if<RecurrentNet>(&model.body);
  if (!net) throw Error(ErrorCode::InvalidConfig, "gradient check needs a recurrent model");
  if (coordinates == 0) throw Error(ErrorCode::InvalidConfig, "gradient check needs at least one coordinate");
  detail::validate_pairs(batch, net->shape().vocab);

  std::vector<double> grad;
  net->loss_and_gradient(batch, &grad);
  for (double g : grad)
    if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "analytic gradient is not finite");

  RecurrentNet probe = *net;
  const std::size_t P = probe.parameter_count();
  std::vector<std::size_t> idx(P);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(coordinates, P));

  constexpr double step = 1e-5;
  double worst = 0.0;
  for (auto k : idx) {
    auto params = probe.parameters();
    const double saved = params[k];
    params[k] = saved + step;
    const double up = probe.loss_and_gradient(batch, nullptr);
    params[k] = saved - step;
    const double down = probe.loss_and_gradient(batch, nullptr);
    params[k] = saved;
    const double fd = (up - down) / (2.0 * step);
    if (!std::isfinite(fd)) throw Error(ErrorCode::NonFiniteGradient, "finite difference is not finite");
    const double rel = std::abs(grad[k] - fd) / std::max(std::abs(grad[k]) + std::abs(fd), 1e-6);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace intentinf
