#pragma once

// MCMC convergence diagnostics on scalar draws: rank-normalized split R-hat
// (max of bulk and folded-tail versions) and bulk effective sample size.
// Input is one vector of draws per chain, all chains the same length.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "intentinf/error.hpp"

namespace intentinf::diagnostics {

using Chains = std::vector<std::vector<double>>;

/// Quantile with linear interpolation between order statistics, position
/// (n-1)*p in the sorted sample.
inline double quantile(std::vector<double> xs, double p) {
  if (xs.empty()) throw Error(ErrorCode::InsufficientDraws, "quantile of empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = p * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return xs[lo] + w * (xs[hi] - xs[lo]);
}

inline double inverse_normal_cdf(double p) { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p); }

/// Splits every chain into first and second half (odd middle draw dropped).
inline Chains split_chains(const Chains& chains) {
  Chains out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + half);
    out.emplace_back(c.end() - half, c.end());
  }
  return out;
}

/// Replaces draws by normal scores of their pooled ranks (average rank for
/// ties): z = Phi^-1((r - 3/8) / (S + 1/4)).
inline Chains rank_normalize(const Chains& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t t = 0; t < chains[c].size(); ++t) pooled.push_back({chains[c][t], c * chains[c].size() + t});
  std::sort(pooled.begin(), pooled.end());
  const double S = static_cast<double>(pooled.size());
  std::vector<double> ranks(pooled.size());
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[pooled[k].second] = avg;
    i = j;
  }
  Chains out = chains;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t t = 0; t < chains[c].size(); ++t)
      out[c][t] = inverse_normal_cdf((ranks[c * chains[c].size() + t] - 0.375) / (S + 0.25));
  return out;
}

inline double mean(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double variance(std::span<const double> xs) {
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

/// Classic (non-split) potential scale reduction on already-prepared chains.
inline double rhat_basic(const Chains& chains) {
  const std::size_t m = chains.size();
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean(c));
    vars.push_back(variance(c));
  }
  const double W = mean(vars);
  const double B = n * (m > 1 ? variance(means) : 0.0);
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

/// Rank-normalized split R-hat: the larger of the bulk and folded-tail values.
inline double rank_normalized_split_rhat(const Chains& chains) {
  auto split = split_chains(chains);
  const double bulk = rhat_basic(rank_normalize(split));
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
  const double med = quantile(all, 0.5);
  Chains folded = split;
  for (auto& c : folded)
    for (auto& x : c) x = std::abs(x - med);
  const double tail = rhat_basic(rank_normalize(folded));
  return std::max(bulk, tail);
}

/// ESS with Geyer's initial monotone sequence over the combined
/// autocorrelation estimate.
inline double ess_basic(const Chains& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(m);
  for (std::size_t c = 0; c < m; ++c) means[c] = mean(chains[c]);

  auto acov = [&](std::size_t c, std::size_t lag) {
    double s = 0.0;
    const auto& x = chains[c];
    for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - means[c]) * (x[t + lag] - means[c]);
    return s / static_cast<double>(n);
  };
  auto mean_acov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += acov(c, lag);
    return s / static_cast<double>(m);
  };

  const double nn = static_cast<double>(n);
  const double W = mean_acov(0) * nn / (nn - 1.0);
  const double B = m > 1 ? variance(means) : 0.0;
  const double var_plus = W * (nn - 1.0) / nn + B;
  if (!(var_plus > 0.0)) return static_cast<double>(m * n);

  // rho[lag]; pairs (even, odd) are accepted while their sum stays positive.
  std::vector<double> rho(n + 2, 0.0);
  auto rho_at = [&](std::size_t lag) { return 1.0 - (W - mean_acov(lag)) / var_plus; };
  std::size_t t = 0;
  double even = 1.0;
  double odd = rho_at(1);
  rho[0] = even;
  rho[1] = odd;
  while (t + 5 < n && even + odd > 0.0) {
    t += 2;
    even = rho_at(t);
    odd = rho_at(t + 1);
    if (even + odd >= 0.0) {
      rho[t] = even;
      rho[t + 1] = odd;
    }
  }
  const std::size_t max_t = t;
  if (even > 0.0) rho[max_t] = even;
  // Initial monotone sequence.
  for (std::size_t k = 2; k + 2 <= max_t; k += 2) {
    if (rho[k] + rho[k + 1] > rho[k - 2] + rho[k - 1]) {
      rho[k] = (rho[k - 2] + rho[k - 1]) / 2.0;
      rho[k + 1] = rho[k];
    }
  }
  double tau = -1.0 + rho[max_t];
  for (std::size_t k = 0; k < max_t; ++k) tau += 2.0 * rho[k];
  const double S = static_cast<double>(m * n);
  tau = std::max(tau, 1.0 / std::log10(S));
  return S / tau;
}

inline double bulk_ess(const Chains& chains) { return ess_basic(rank_normalize(split_chains(chains))); }

/// True when every draw in every chain is the same value.
inline bool constant_draws(const Chains& chains) {
  const double v = chains.front().front();
  for (const auto& c : chains)
    for (double x : c)
      if (x != v) return false;
  return true;
}

}  // namespace intentinf::diagnostics
