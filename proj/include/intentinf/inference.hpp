#pragma once

// Bayesian intention model over the probability simplex:
//
//   a_k ~ categorical(theta_k),  theta_k = sum_i P(a_k | I_i) pi_i
//   pi  ~ Dirichlet(alpha)
//
// The posterior over pi is sampled with adaptive random-walk Metropolis in
// additive-log-ratio coordinates y_j = log(pi_j / pi_N), j < N. A regular
// barycentric grid gives an independent quadrature answer for N <= 3.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentinf/diagnostics.hpp"
#include "intentinf/error.hpp"
#include "intentinf/predictor.hpp"
#include "intentinf/util.hpp"

namespace intentinf {

inline constexpr double kSimplexTolerance = 1e-9;
inline constexpr double kRhatThreshold = 1.01;

struct InferenceConfig {
  std::size_t chains = 4;
  std::size_t iterations = 2000;
  std::size_t warmup = 1000;
  /// Dirichlet concentration; empty means all ones.
  std::vector<double> alpha;
  double step_size = 0.3;
  double target_acceptance = 0.35;
  /// Metropolis transitions per recorded iteration.
  std::size_t steps_per_iteration = 10;
  std::uint64_t seed = 0;
};

inline void validate(const InferenceConfig& cfg) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (cfg.chains < 1) fail("chains must be >= 1");
  if (cfg.warmup >= cfg.iterations) fail("warmup must be smaller than iterations");
  if (cfg.steps_per_iteration < 1) fail("steps_per_iteration must be >= 1");
  if (!(cfg.step_size > 0.0) || !std::isfinite(cfg.step_size)) fail("step size must be > 0");
  if (!(cfg.target_acceptance > 0.0 && cfg.target_acceptance < 1.0)) fail("target acceptance must lie in (0, 1)");
  for (double a : cfg.alpha)
    if (!(a > 0.0) || !std::isfinite(a)) fail("alpha entries must be > 0");
}

inline std::vector<double> resolve_alpha(const InferenceConfig& cfg, std::size_t n) {
  if (cfg.alpha.empty()) return std::vector<double>(n, 1.0);
  if (cfg.alpha.size() != n)
    throw Error(ErrorCode::InvalidConfig, "alpha has " + std::to_string(cfg.alpha.size()) + " entries, expected " +
                                              std::to_string(n));
  return cfg.alpha;
}

/// log Dirichlet(pi; alpha) density with respect to Lebesgue measure on the
/// first N-1 coordinates. Terms with alpha_i == 1 are skipped so boundary
/// points stay finite under the flat prior.
inline double log_dirichlet(std::span<const double> pi, std::span<const double> alpha) {
  double a0 = 0.0, out = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    a0 += alpha[i];
    out -= std::lgamma(alpha[i]);
    if (alpha[i] != 1.0) out += (alpha[i] - 1.0) * std::log(std::max(pi[i], 0.0));
  }
  return out + std::lgamma(a0);
}

/// sum_k log(sum_i lm[k,i] pi_i).
inline double log_likelihood(std::span<const double> pi, const LikelihoodMatrix& lm) {
  double out = 0.0;
  for (std::size_t k = 0; k < lm.rows(); ++k) {
    auto row = lm.row(k);
    double theta = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) theta += row[i] * std::max(pi[i], 0.0);
    out += std::log(theta);
  }
  return out;
}

inline void check_simplex(std::span<const double> pi, std::size_t n) {
  if (pi.size() != n)
    throw Error(ErrorCode::OffSimplex, "point has " + std::to_string(pi.size()) + " entries, expected " + std::to_string(n));
  double s = 0.0;
  for (double p : pi) {
    if (!(p >= -kSimplexTolerance)) throw Error(ErrorCode::OffSimplex, "negative entry " + format_g6(p));
    s += p;
  }
  if (!(std::abs(s - 1.0) <= kSimplexTolerance)) throw Error(ErrorCode::OffSimplex, "entries sum to " + format_g6(s));
}

/// Unnormalized log posterior density of pi (likelihood plus Dirichlet prior).
inline double log_posterior(std::span<const double> pi, const LikelihoodMatrix& lm, std::span<const double> alpha) {
  check_simplex(pi, lm.cols());
  if (alpha.size() != lm.cols()) throw Error(ErrorCode::InvalidConfig, "alpha size does not match intention count");
  return log_likelihood(pi, lm) + log_dirichlet(pi, alpha);
}

inline double log_posterior(std::span<const double> pi, const LikelihoodMatrix& lm) {
  std::vector<double> ones(lm.cols(), 1.0);
  return log_posterior(pi, lm, ones);
}

/// Retained draws, one flat row-major (draws x dim) vector per chain.
struct DrawSet {
  std::size_t dim = 0;
  std::vector<std::vector<double>> chains;

  std::size_t draws_per_chain() const { return chains.empty() || dim == 0 ? 0 : chains.front().size() / dim; }
  double at(std::size_t chain, std::size_t draw, std::size_t i) const { return chains[chain][draw * dim + i]; }
};

struct IntentionSummary {
  double mean = 0.0;
  double ci5 = 0.0;
  double ci95 = 0.0;
  double rhat = 1.0;
  double ess = 0.0;
  bool zero_variance = false;
};

struct PosteriorSummary {
  std::vector<IntentionSummary> intentions;
  bool converged = true;
};

struct IntentionPosterior {
  DrawSet draws;
  std::vector<double> acceptance;
  std::vector<double> step_sizes;
  PosteriorSummary summary;
};

/// Per-intention mean, 5%/95% quantiles, rank-normalized split R-hat and bulk
/// ESS. A coordinate whose draws are all identical reports R-hat 1 and the
/// zero-variance flag.
inline PosteriorSummary summarize(const DrawSet& draws) {
  const std::size_t n = draws.draws_per_chain();
  if (draws.chains.empty() || n < 100)
    throw Error(ErrorCode::InsufficientDraws, "need at least one chain with >= 100 draws, got " +
                                                  std::to_string(draws.chains.size()) + " x " + std::to_string(n));
  for (const auto& c : draws.chains)
    if (c.size() != n * draws.dim) throw Error(ErrorCode::InsufficientDraws, "chains differ in length");

  PosteriorSummary out;
  for (std::size_t i = 0; i < draws.dim; ++i) {
    diagnostics::Chains chains(draws.chains.size());
    std::vector<double> pooled;
    pooled.reserve(n * draws.chains.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < draws.chains.size(); ++c) {
      chains[c].resize(n);
      for (std::size_t t = 0; t < n; ++t) {
        chains[c][t] = draws.at(c, t, i);
        sum += chains[c][t];
      }
      pooled.insert(pooled.end(), chains[c].begin(), chains[c].end());
    }
    IntentionSummary s;
    s.mean = sum / static_cast<double>(pooled.size());
    s.ci5 = diagnostics::quantile(pooled, 0.05);
    s.ci95 = diagnostics::quantile(pooled, 0.95);
    if (diagnostics::constant_draws(chains)) {
      s.zero_variance = true;
      s.mean = chains[0][0];
      s.rhat = 1.0;
      s.ess = static_cast<double>(pooled.size());
    } else {
      s.rhat = diagnostics::rank_normalized_split_rhat(chains);
      s.ess = diagnostics::bulk_ess(chains);
    }
    if (!(s.rhat <= kRhatThreshold)) out.converged = false;
    out.intentions.push_back(s);
  }
  return out;
}

namespace detail {

// Maps ALR coordinates y (size N-1) to pi and log pi (size N).
inline void alr_to_simplex(std::span<const double> y, std::span<double> pi, std::span<double> log_pi) {
  double mx = 0.0;
  for (double v : y) mx = std::max(mx, v);
  double s = std::exp(-mx);
  for (double v : y) s += std::exp(v - mx);
  const double log_s = std::log(s);
  const std::size_t last = y.size();
  for (std::size_t j = 0; j < last; ++j) {
    pi[j] = std::exp(y[j] - mx) / s;
    log_pi[j] = y[j] - mx - log_s;
  }
  pi[last] = std::exp(-mx) / s;
  log_pi[last] = -mx - log_s;
}

/// Log density of y: likelihood + Dirichlet kernel + log|Jacobian|, where the
/// Jacobian of y -> pi contributes sum_i log pi_i. Constants dropped.
class AlrTarget {
 public:
  AlrTarget(const LikelihoodMatrix& lm, std::span<const double> alpha)
      : lm_(lm), alpha_(alpha.begin(), alpha.end()), pi_(lm.cols()), log_pi_(lm.cols()) {}

  double operator()(std::span<const double> y) {
    alr_to_simplex(y, pi_, log_pi_);
    double out = log_likelihood(pi_, lm_);
    for (std::size_t i = 0; i < alpha_.size(); ++i) out += alpha_[i] * log_pi_[i];
    return out;
  }

  std::span<const double> last_pi() const { return pi_; }

 private:
  const LikelihoodMatrix& lm_;
  std::vector<double> alpha_;
  std::vector<double> pi_, log_pi_;
};

struct ChainResult {
  std::vector<double> draws;
  double acceptance = 0.0;
  double step_size = 0.0;
};

inline ChainResult run_chain(const LikelihoodMatrix& lm, std::span<const double> alpha, const InferenceConfig& cfg,
                             std::size_t chain) {
  const std::size_t N = lm.cols(), D = N - 1;
  const std::size_t kept = cfg.iterations - cfg.warmup;
  std::mt19937_64 rng(mix_seed({cfg.seed, chain}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Start from an independent Dirichlet(alpha) draw.
  std::vector<double> g(N);
  for (std::size_t i = 0; i < N; ++i) {
    std::gamma_distribution<double> gamma(alpha[i], 1.0);
    g[i] = std::max(gamma(rng), std::numeric_limits<double>::min());
  }
  std::vector<double> y(D), proposal(D);
  for (std::size_t j = 0; j < D; ++j) y[j] = std::log(g[j]) - std::log(g[N - 1]);

  AlrTarget target(lm, alpha);
  double current = target(y);
  if (!std::isfinite(current))
    throw Error(ErrorCode::NonFinitePosterior, "log posterior at initialization of chain " + std::to_string(chain));
  std::vector<double> pi(target.last_pi().begin(), target.last_pi().end());

  ChainResult out;
  out.draws.reserve(kept * N);
  double log_step = std::log(cfg.step_size);
  std::size_t adapt_t = 0, accepted = 0, proposed = 0;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const bool warm = it < cfg.warmup;
    for (std::size_t s = 0; s < cfg.steps_per_iteration; ++s) {
      const double step = std::exp(log_step);
      for (std::size_t j = 0; j < D; ++j) proposal[j] = y[j] + step * normal(rng);
      const double cand = target(proposal);
      const double log_ratio = cand - current;
      const double accept_prob = std::isfinite(cand) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
      const bool accept = unit(rng) < accept_prob;
      if (accept) {
        y.swap(proposal);
        current = cand;
        std::copy(target.last_pi().begin(), target.last_pi().end(), pi.begin());
      }
      if (warm) {
        // Robbins-Monro on log step size; frozen once warmup ends.
        ++adapt_t;
        log_step += std::pow(static_cast<double>(adapt_t), -0.6) * (accept_prob - cfg.target_acceptance);
      } else {
        ++proposed;
        accepted += accept ? 1 : 0;
      }
    }
    if (!warm) out.draws.insert(out.draws.end(), pi.begin(), pi.end());
  }
  out.acceptance = proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  out.step_size = std::exp(log_step);
  return out;
}

}  // namespace detail

/// Runs cfg.chains independent chains; chain c is seeded from (cfg.seed, c).
inline IntentionPosterior sample_posterior(const LikelihoodMatrix& lm, const InferenceConfig& cfg) {
  validate(cfg);
  const std::size_t N = lm.cols();
  if (N == 0) throw Error(ErrorCode::InvalidConfig, "no intentions");
  const auto alpha = resolve_alpha(cfg, N);
  const std::size_t kept = cfg.iterations - cfg.warmup;

  IntentionPosterior post;
  post.draws.dim = N;
  if (N == 1) {
    // The simplex is a single point; there is nothing to propose.
    post.draws.chains.assign(cfg.chains, std::vector<double>(kept, 1.0));
    post.acceptance.assign(cfg.chains, 1.0);
    post.step_sizes.assign(cfg.chains, cfg.step_size);
  } else {
    for (std::size_t c = 0; c < cfg.chains; ++c) {
      auto r = detail::run_chain(lm, alpha, cfg, c);
      post.draws.chains.push_back(std::move(r.draws));
      post.acceptance.push_back(r.acceptance);
      post.step_sizes.push_back(r.step_size);
    }
  }
  post.summary = summarize(post.draws);
  return post;
}

struct GridResult {
  std::vector<double> means;
  /// Richardson estimate |m(n) - m(n/2)| / 3 for the O(h^2) rule.
  std::vector<double> error;
  std::size_t resolution = 0;
};

namespace detail {

inline std::vector<double> grid_means(const LikelihoodMatrix& lm, std::span<const double> alpha, std::size_t n) {
  const std::size_t N = lm.cols();
  std::vector<std::vector<double>> points;
  std::vector<double> weights;
  const double h = 1.0 / static_cast<double>(n);
  if (N == 2) {
    for (std::size_t j = 0; j <= n; ++j) {
      const double p = static_cast<double>(j) * h;
      points.push_back({p, static_cast<double>(n - j) * h});
      weights.push_back(j == 0 || j == n ? 1.0 : 2.0);
    }
  } else {
    // Vertex weights of the piecewise-linear rule on the regular
    // triangulation: 6 inside, 3 on an edge, 1 at a corner.
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t j = 0; i + j <= n; ++j) {
        const std::size_t k = n - i - j;
        points.push_back({static_cast<double>(i) * h, static_cast<double>(j) * h, static_cast<double>(k) * h});
        const int zeros = (i == 0) + (j == 0) + (k == 0);
        weights.push_back(zeros == 0 ? 6.0 : zeros == 1 ? 3.0 : 1.0);
      }
  }
  std::vector<double> logs(points.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < points.size(); ++p) {
    double lp = log_likelihood(points[p], lm);
    for (std::size_t i = 0; i < N; ++i)
      if (alpha[i] != 1.0) lp += (alpha[i] - 1.0) * std::log(points[p][i]);
    logs[p] = lp;
    mx = std::max(mx, lp);
  }
  double z = 0.0;
  std::vector<double> m(N, 0.0);
  for (std::size_t p = 0; p < points.size(); ++p) {
    const double w = weights[p] * std::exp(logs[p] - mx);
    z += w;
    for (std::size_t i = 0; i < N; ++i) m[i] += w * points[p][i];
  }
  for (auto& v : m) v /= z;
  return m;
}

}  // namespace detail

/// Posterior means by quadrature over a regular barycentric grid with
/// `resolution` steps per edge. Limited to N in {2, 3} and alpha >= 1.
inline GridResult grid_oracle(const LikelihoodMatrix& lm, std::size_t resolution,
                              std::span<const double> alpha = {}) {
  const std::size_t N = lm.cols();
  if (N < 2 || N > 3) throw Error(ErrorCode::OracleUnsupported, "grid oracle supports 2 or 3 intentions");
  if (resolution < 100) throw Error(ErrorCode::OracleUnsupported, "grid resolution must be >= 100");
  std::vector<double> a(alpha.begin(), alpha.end());
  if (a.empty()) a.assign(N, 1.0);
  if (a.size() != N) throw Error(ErrorCode::InvalidConfig, "alpha size does not match intention count");
  for (double v : a)
    if (!(v >= 1.0)) throw Error(ErrorCode::OracleUnsupported, "grid oracle needs alpha >= 1 (bounded density)");

  GridResult r;
  r.resolution = resolution;
  r.means = detail::grid_means(lm, a, resolution);
  auto coarse = detail::grid_means(lm, a, resolution / 2);
  for (std::size_t i = 0; i < N; ++i) r.error.push_back(std::abs(r.means[i] - coarse[i]) / 3.0);
  return r;
}

struct ArgmaxResult {
  std::size_t index = 0;
  bool tie = false;
};

/// Index of the largest posterior mean; ties go to the lowest index.
inline ArgmaxResult argmax_intention(std::span<const double> means) {
  ArgmaxResult r;
  for (std::size_t i = 1; i < means.size(); ++i) {
    if (means[i] > means[r.index]) {
      r.index = i;
      r.tie = false;
    } else if (means[i] == means[r.index]) {
      r.tie = true;
    }
  }
  return r;
}

inline ArgmaxResult argmax_intention(const PosteriorSummary& summary) {
  std::vector<double> m;
  for (const auto& s : summary.intentions) m.push_back(s.mean);
  return argmax_intention(m);
}

inline nlohmann::ordered_json config_to_json(const InferenceConfig& cfg, std::size_t n) {
  nlohmann::ordered_json j;
  j["chains"] = cfg.chains;
  j["iterations"] = cfg.iterations;
  j["warmup"] = cfg.warmup;
  j["steps_per_iteration"] = cfg.steps_per_iteration;
  j["alpha"] = resolve_alpha(cfg, n);
  j["step_size"] = cfg.step_size;
  j["target_acceptance"] = cfg.target_acceptance;
  j["seed"] = cfg.seed;
  return j;
}

/// Posterior export: config echo, per-intention summaries, per-chain
/// acceptance and the convergence verdict. Reals carry 6 significant digits.
inline nlohmann::ordered_json posterior_to_json(const IntentionPosterior& post, const InferenceConfig& cfg,
                                                std::span<const std::string> names) {
  nlohmann::ordered_json j;
  j["config"] = config_to_json(cfg, post.draws.dim);
  auto& arr = j["intentions"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < post.summary.intentions.size(); ++i) {
    const auto& s = post.summary.intentions[i];
    nlohmann::ordered_json e;
    e["intention"] = i < names.size() ? names[i] : std::to_string(i);
    e["mean"] = round_g6(s.mean);
    e["ci5"] = round_g6(s.ci5);
    e["ci95"] = round_g6(s.ci95);
    e["rhat"] = round_g6(s.rhat);
    e["ess"] = round_g6(s.ess);
    e["zero_variance"] = s.zero_variance;
    arr.push_back(e);
  }
  auto& acc = j["acceptance"] = nlohmann::ordered_json::array();
  for (double a : post.acceptance) acc.push_back(round_g6(a));
  j["converged"] = post.summary.converged;
  auto am = argmax_intention(post.summary);
  j["argmax"] = am.index < names.size() ? names[am.index] : std::to_string(am.index);
  j["tie"] = am.tie;
  return j;
}

/// One row per retained draw (chains concatenated), one column per intention.
inline std::string draws_to_csv(const DrawSet& draws, std::span<const std::string> names) {
  std::string out;
  for (std::size_t i = 0; i < draws.dim; ++i) {
    if (i) out += ',';
    out += i < names.size() ? names[i] : std::to_string(i);
  }
  out += '\n';
  for (std::size_t c = 0; c < draws.chains.size(); ++c)
    for (std::size_t t = 0; t < draws.draws_per_chain(); ++t) {
      for (std::size_t i = 0; i < draws.dim; ++i) {
        if (i) out += ',';
        out += format_g6(draws.at(c, t, i));
      }
      out += '\n';
    }
  return out;
}

}  // namespace intentinf
