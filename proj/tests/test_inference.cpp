#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "intentinf/inference.hpp"

using namespace intentinf;

namespace {

LikelihoodMatrix random_matrix(std::mt19937_64& rng, std::size_t K, std::size_t N) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<double> v(K * N);
  for (auto& x : v) x = u(rng);
  return LikelihoodMatrix(K, N, v);
}

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t N) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(N);
  double s = 0.0;
  for (auto& x : p) s += (x = e(rng));
  for (auto& x : p) x /= s;
  return p;
}

std::vector<double> means_of(const PosteriorSummary& s) {
  std::vector<double> m;
  for (const auto& i : s.intentions) m.push_back(i.mean);
  return m;
}

// Naive transcription of the model: product over rows, Dirichlet density
// written out with tgamma.
double naive_log_posterior(const std::vector<double>& pi, const LikelihoodMatrix& lm, const std::vector<double>& alpha) {
  double lik = 1.0;
  double loglik = 0.0;
  for (std::size_t k = 0; k < lm.rows(); ++k) {
    double theta = 0.0;
    for (std::size_t i = 0; i < lm.cols(); ++i) theta += lm.at(k, i) * pi[i];
    lik *= theta;
    if (lik < 1e-200) {
      loglik += std::log(lik);
      lik = 1.0;
    }
  }
  loglik += std::log(lik);
  double a0 = 0.0, dens = 1.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    a0 += alpha[i];
    dens *= std::pow(pi[i], alpha[i] - 1.0) / std::tgamma(alpha[i]);
  }
  dens *= std::tgamma(a0);
  return loglik + std::log(dens);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

// 64-bit LCG shared with the reference script that produced the expected
// diagnostics below.
diagnostics::Chains lcg_chains(std::size_t chains, std::size_t n, double phi, double shift) {
  std::uint64_t s = 12345;
  diagnostics::Chains out(chains, std::vector<double>(n));
  for (std::size_t c = 0; c < chains; ++c) {
    double x = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      s = s * 6364136223846793005ULL + 1442695040888963407ULL;
      const double u = static_cast<double>(s >> 11) * 0x1.0p-53;
      x = phi * x + (u - 0.5);
      out[c][t] = x + (c == chains - 1 ? shift : 0.0);
    }
  }
  return out;
}

}  // namespace

TEST(LogPosterior, FlatPriorIsLogGammaN) {
  LikelihoodMatrix lm(2, 3, {0.2, 0.2, 0.2, 0.2, 0.2, 0.2});
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    auto pi = random_simplex(rng, 3);
    EXPECT_NEAR(log_posterior(pi, lm), 2.0 * std::log(0.2) + std::lgamma(3.0), 1e-12);
  }
}

TEST(LogPosterior, SingleRowArithmetic) {
  LikelihoodMatrix lm(1, 2, {0.8, 0.2});
  std::vector<double> pi = {0.5, 0.5};
  EXPECT_NEAR(log_likelihood(pi, lm), std::log(0.5), 1e-15);
  EXPECT_NEAR(log_posterior(pi, lm), std::log(0.5), 1e-15);  // log Gamma(2) = 0
}

TEST(LogPosterior, MatchesNaiveOracle) {
  std::mt19937_64 rng(7);
  auto lm = random_matrix(rng, 3, 3);
  std::uniform_real_distribution<double> ua(0.3, 4.0);
  for (int t = 0; t < 100; ++t) {
    auto pi = random_simplex(rng, 3);
    std::vector<double> ones(3, 1.0);
    EXPECT_NEAR(log_posterior(pi, lm), naive_log_posterior(pi, lm, ones), 1e-12);
    std::vector<double> alpha = {ua(rng), ua(rng), ua(rng)};
    EXPECT_NEAR(log_posterior(pi, lm, alpha), naive_log_posterior(pi, lm, alpha), 1e-12);
  }
}

TEST(LogPosterior, RejectsOffSimplexPoints) {
  LikelihoodMatrix lm(1, 2, {0.8, 0.2});
  EXPECT_EQ(code_of([&] { log_posterior(std::vector<double>{0.6, 0.6}, lm); }), ErrorCode::OffSimplex);
  EXPECT_EQ(code_of([&] { log_posterior(std::vector<double>{1.1, -0.1}, lm); }), ErrorCode::OffSimplex);
  EXPECT_EQ(code_of([&] { log_posterior(std::vector<double>{1.0}, lm); }), ErrorCode::OffSimplex);
  EXPECT_NO_THROW(log_posterior(std::vector<double>{0.5 + 5e-10, 0.5}, lm));
  EXPECT_NO_THROW(log_posterior(std::vector<double>{1.0, 0.0}, lm));
}

TEST(Config, Validation) {
  InferenceConfig cfg;
  EXPECT_NO_THROW(validate(cfg));
  cfg.warmup = cfg.iterations;
  EXPECT_EQ(code_of([&] { validate(cfg); }), ErrorCode::InvalidConfig);
  cfg = {};
  cfg.chains = 0;
  EXPECT_EQ(code_of([&] { validate(cfg); }), ErrorCode::InvalidConfig);
  cfg = {};
  cfg.alpha = {1.0, 0.0};
  EXPECT_EQ(code_of([&] { validate(cfg); }), ErrorCode::InvalidConfig);
  cfg = {};
  cfg.alpha = {1.0, 1.0};
  LikelihoodMatrix lm(1, 3, {0.1, 0.2, 0.3});
  EXPECT_EQ(code_of([&] { sample_posterior(lm, cfg); }), ErrorCode::InvalidConfig);
}

TEST(Sampler, FlatLikelihoodRecoversPrior) {
  LikelihoodMatrix lm(12, 3, std::vector<double>(36, 0.05));
  auto post = sample_posterior(lm, InferenceConfig{});
  // Marginals of Dirichlet(1,1,1) are Beta(1,2): q_p = 1 - (1-p)^(1/2).
  const double q05 = 1.0 - std::sqrt(0.95), q95 = 1.0 - std::sqrt(0.05);
  for (const auto& s : post.summary.intentions) {
    EXPECT_NEAR(s.mean, 1.0 / 3.0, 0.02);
    EXPECT_NEAR(s.ci5, q05, 0.03);
    EXPECT_NEAR(s.ci95, q95, 0.03);
    EXPECT_LE(s.rhat, kRhatThreshold);
    EXPECT_LE(s.ci5, s.mean);
    EXPECT_LE(s.mean, s.ci95);
  }
  EXPECT_TRUE(post.summary.converged);
}

TEST(Sampler, SingleIntentionIsExactlyOne) {
  LikelihoodMatrix lm(4, 1, {0.3, 0.1, 0.9, 0.5});
  auto post = sample_posterior(lm, InferenceConfig{});
  ASSERT_EQ(post.summary.intentions.size(), 1u);
  EXPECT_EQ(post.summary.intentions[0].mean, 1.0);
  EXPECT_TRUE(post.summary.intentions[0].zero_variance);
  EXPECT_EQ(post.summary.intentions[0].rhat, 1.0);
}

TEST(Sampler, DrawsStayOnSimplexAndAreDeterministic) {
  std::mt19937_64 rng(3);
  auto lm = random_matrix(rng, 15, 3);
  InferenceConfig cfg;
  cfg.seed = 99;
  auto p1 = sample_posterior(lm, cfg);
  auto p2 = sample_posterior(lm, cfg);
  EXPECT_EQ(p1.draws.chains, p2.draws.chains);
  ASSERT_EQ(p1.draws.chains.size(), 4u);
  EXPECT_EQ(p1.draws.draws_per_chain(), 1000u);
  for (const auto& c : p1.draws.chains)
    for (std::size_t t = 0; t < c.size() / 3; ++t) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_GE(c[t * 3 + i], 0.0);
        s += c[t * 3 + i];
      }
      ASSERT_NEAR(s, 1.0, 1e-9);
    }
  for (double a : p1.acceptance) {
    EXPECT_GT(a, 0.15);
    EXPECT_LT(a, 0.6);
  }
  cfg.seed = 100;
  EXPECT_NE(sample_posterior(lm, cfg).draws.chains, p1.draws.chains);
}

TEST(Sampler, MeansAreDrawAverages) {
  std::mt19937_64 rng(5);
  auto lm = random_matrix(rng, 6, 2);
  auto post = sample_posterior(lm, InferenceConfig{});
  for (std::size_t i = 0; i < 2; ++i) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& c : post.draws.chains)
      for (std::size_t t = 0; t < c.size() / 2; ++t, ++n) s += c[t * 2 + i];
    EXPECT_NEAR(post.summary.intentions[i].mean, s / static_cast<double>(n), 1e-12);
  }
  auto m = means_of(post.summary);
  EXPECT_NEAR(m[0] + m[1], 1.0, 1e-9);
}

TEST(Sampler, AgreesWithGridOracle) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 6; ++t) {
    const std::size_t N = 2 + t % 2;
    auto lm = random_matrix(rng, 1 + rng() % 30, N);
    InferenceConfig cfg;
    cfg.seed = t;
    auto post = sample_posterior(lm, cfg);
    auto grid = grid_oracle(lm, N == 2 ? 20000 : 400);
    for (std::size_t i = 0; i < N; ++i) EXPECT_NEAR(post.summary.intentions[i].mean, grid.means[i], 0.02);
  }
}

TEST(Sampler, NonUniformAlpha) {
  std::mt19937_64 rng(19);
  auto lm = random_matrix(rng, 5, 3);
  std::vector<double> alpha = {3.0, 1.0, 2.0};
  InferenceConfig cfg;
  cfg.alpha = alpha;
  auto post = sample_posterior(lm, cfg);
  auto grid = grid_oracle(lm, 400, alpha);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(post.summary.intentions[i].mean, grid.means[i], 0.02);
  // Flat likelihood: Dirichlet(3,1,2) means are alpha / 6.
  LikelihoodMatrix flat(0, 3, {});
  auto prior = sample_posterior(flat, cfg);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(prior.summary.intentions[i].mean, alpha[i] / 6.0, 0.02);
}

TEST(Sampler, PermutationEquivariantWithinTolerance) {
  std::mt19937_64 rng(23);
  auto lm = random_matrix(rng, 20, 3);
  std::vector<std::size_t> perm = {2, 0, 1};
  auto base = means_of(sample_posterior(lm, InferenceConfig{}).summary);
  auto moved = means_of(sample_posterior(lm.permuted(perm), InferenceConfig{}).summary);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(moved[c], base[perm[c]], 0.02);
}

TEST(Sampler, RowScalingLeavesPosteriorUnchanged) {
  std::mt19937_64 rng(29);
  auto lm = random_matrix(rng, 8, 3);
  std::vector<double> v(lm.values().begin(), lm.values().end());
  for (std::size_t i = 0; i < 3; ++i) v[2 * 3 + i] *= 0.25;
  LikelihoodMatrix scaled(8, 3, v);
  std::vector<double> pi = {0.2, 0.3, 0.5};
  EXPECT_NEAR(log_posterior(pi, scaled) - log_posterior(pi, lm), std::log(0.25), 1e-12);
  auto g1 = grid_oracle(lm, 400), g2 = grid_oracle(scaled, 400);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g1.means[i], g2.means[i], 1e-12);
  auto m1 = means_of(sample_posterior(lm, InferenceConfig{}).summary);
  auto m2 = means_of(sample_posterior(scaled, InferenceConfig{}).summary);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(m1[i], m2[i], 0.02);
}

TEST(Grid, UniformMatrixGivesOneOverN) {
  for (std::size_t N : {2, 3}) {
    LikelihoodMatrix lm(5, N, std::vector<double>(5 * N, 0.3));
    auto g = grid_oracle(lm, 200);
    for (double m : g.means) EXPECT_NEAR(m, 1.0 / static_cast<double>(N), 1e-12);
  }
}

TEST(Grid, ClosedFormSingleRow) {
  LikelihoodMatrix lm(1, 2, {1.0, 0.0});
  const double eps = kProbabilityFloor;
  // Density proportional to p + eps (1 - p) on [0, 1].
  const double expect = (1.0 / 3.0 + eps / 6.0) / (0.5 + eps / 2.0);
  auto g = grid_oracle(lm, 1000);
  EXPECT_NEAR(g.means[0], expect, 1e-3);
  EXPECT_NEAR(g.means[0], expect, 1e-6);
  EXPECT_NEAR(g.means[1], 1.0 - expect, 1e-6);
}

TEST(Grid, ConvergesUnderRefinement) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 6; ++t) {
    const std::size_t N = 2 + t % 2;
    auto lm = random_matrix(rng, 1 + rng() % 30, N);
    const std::size_t n = N == 2 ? 4000 : 300;
    auto g1 = grid_oracle(lm, n), g2 = grid_oracle(lm, 2 * n);
    for (std::size_t i = 0; i < N; ++i) {
      EXPECT_LT(std::abs(g1.means[i] - g2.means[i]), 1e-4);
      EXPECT_LT(g2.error[i], 1e-4);
    }
  }
}

TEST(Grid, PermutationEquivariant) {
  std::mt19937_64 rng(37);
  auto lm = random_matrix(rng, 25, 3);
  std::vector<std::size_t> perm = {1, 2, 0};
  auto base = grid_oracle(lm, 300), moved = grid_oracle(lm.permuted(perm), 300);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(moved.means[c], base.means[perm[c]], 1e-12);
}

TEST(Grid, ConcentrationNondecreasingInK) {
  const double rho = 1.5;
  for (std::size_t N : {2, 3}) {
    double prev = 0.0;
    for (std::size_t K = 0; K <= 30; ++K) {
      std::vector<double> v;
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < N; ++i) v.push_back(i == 0 ? 0.3 * rho : 0.3);
      auto g = grid_oracle(LikelihoodMatrix(K, N, v), 300);
      EXPECT_GE(g.means[0], prev - 1e-12) << "K=" << K;
      prev = g.means[0];
    }
    EXPECT_GT(prev, 1.0 / static_cast<double>(N));
  }
}

TEST(Grid, UnsupportedInputs) {
  LikelihoodMatrix four(1, 4, {0.1, 0.2, 0.3, 0.4});
  EXPECT_EQ(code_of([&] { grid_oracle(four, 200); }), ErrorCode::OracleUnsupported);
  LikelihoodMatrix two(1, 2, {0.1, 0.2});
  EXPECT_EQ(code_of([&] { grid_oracle(two, 99); }), ErrorCode::OracleUnsupported);
  EXPECT_EQ(code_of([&] { grid_oracle(two, 200, std::vector<double>{0.5, 1.0}); }), ErrorCode::OracleUnsupported);
}

TEST(Summarize, ConstantDraws) {
  DrawSet d;
  d.dim = 3;
  for (int c = 0; c < 4; ++c) {
    std::vector<double> chain;
    for (int t = 0; t < 200; ++t) chain.insert(chain.end(), {0.2, 0.5, 0.3});
    d.chains.push_back(chain);
  }
  auto s = summarize(d);
  const double point[] = {0.2, 0.5, 0.3};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(s.intentions[i].mean, point[i]);
    EXPECT_EQ(s.intentions[i].ci95 - s.intentions[i].ci5, 0.0);
    EXPECT_EQ(s.intentions[i].rhat, 1.0);
    EXPECT_TRUE(s.intentions[i].zero_variance);
  }
  EXPECT_TRUE(s.converged);
}

TEST(Summarize, DisjointCornersAreFlagged) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 0.02);
  DrawSet d;
  d.dim = 2;
  for (int c = 0; c < 2; ++c) {
    std::vector<double> chain;
    for (int t = 0; t < 500; ++t) {
      const double x = u(rng);
      chain.push_back(c == 0 ? 1.0 - x : x);
      chain.push_back(c == 0 ? x : 1.0 - x);
    }
    d.chains.push_back(chain);
  }
  auto s = summarize(d);
  EXPECT_GT(s.intentions[0].rhat, 1.1);
  EXPECT_FALSE(s.converged);
}

TEST(Summarize, InsufficientDraws) {
  DrawSet d;
  d.dim = 2;
  d.chains.assign(4, std::vector<double>(2 * 99, 0.5));
  EXPECT_EQ(code_of([&] { summarize(d); }), ErrorCode::InsufficientDraws);
  d.chains.clear();
  EXPECT_EQ(code_of([&] { summarize(d); }), ErrorCode::InsufficientDraws);
}

TEST(Diagnostics, QuantileLinearInterpolation) {
  EXPECT_DOUBLE_EQ(diagnostics::quantile({4, 1, 3, 2}, 0.05), 1.15);
  EXPECT_DOUBLE_EQ(diagnostics::quantile({4, 1, 3, 2}, 0.95), 3.85);
  EXPECT_DOUBLE_EQ(diagnostics::quantile({7}, 0.3), 7.0);
  EXPECT_DOUBLE_EQ(diagnostics::quantile({0, 10}, 0.5), 5.0);
}

TEST(Diagnostics, MatchesReferenceImplementation) {
  // Expected values from arviz (rhat method "rank"/"split", ess method
  // "bulk") on the same LCG draws: 4 chains x 200, AR(1) with coefficient
  // phi, last chain shifted.
  struct Case {
    double phi, shift, rank_rhat, bulk_ess, split_rhat;
  };
  const Case cases[] = {
      {0.0, 0.0, 1.0052060501342392, 808.45371203873, 1.0025372516596616},
      {0.7, 0.0, 1.0365247276049427, 148.23334763916606, 1.0377405309850563},
      {0.7, 0.5, 1.2701159686022834, 12.328117079902798, 1.3078122236133196},
      {0.95, 0.0, 1.3175619408618364, 10.927357478787561, 1.31469826508387},
  };
  for (const auto& c : cases) {
    auto chains = lcg_chains(4, 200, c.phi, c.shift);
    EXPECT_NEAR(diagnostics::rank_normalized_split_rhat(chains), c.rank_rhat, 1e-9) << c.phi;
    EXPECT_NEAR(diagnostics::bulk_ess(chains), c.bulk_ess, 1e-6 * c.bulk_ess) << c.phi;
    EXPECT_NEAR(diagnostics::rhat_basic(diagnostics::split_chains(chains)), c.split_rhat, 1e-9) << c.phi;
  }
}

TEST(Argmax, Examples) {
  auto r = argmax_intention(std::vector<double>{0.71, 0.09, 0.20});
  EXPECT_EQ(r.index, 0u);
  EXPECT_FALSE(r.tie);
  r = argmax_intention(std::vector<double>{0.43, 0.38, 0.19});
  EXPECT_EQ(r.index, 0u);
  EXPECT_FALSE(r.tie);
  r = argmax_intention(std::vector<double>{0.5, 0.5});
  EXPECT_EQ(r.index, 0u);
  EXPECT_TRUE(r.tie);
  r = argmax_intention(std::vector<double>{0.3, 0.3, 0.4});
  EXPECT_EQ(r.index, 2u);
  EXPECT_FALSE(r.tie);
}

TEST(Export, JsonAndCsv) {
  std::mt19937_64 rng(43);
  auto lm = random_matrix(rng, 4, 2);
  InferenceConfig cfg;
  cfg.iterations = 400;
  cfg.warmup = 200;
  auto post = sample_posterior(lm, cfg);
  std::vector<std::string> names = {"x", "y"};
  auto j = posterior_to_json(post, cfg, names);
  EXPECT_EQ(j["intentions"].size(), 2u);
  EXPECT_EQ(j["intentions"][1]["intention"], "y");
  EXPECT_TRUE(j["intentions"][0].contains("rhat"));
  EXPECT_TRUE(j["intentions"][0].contains("ess"));
  EXPECT_EQ(j["acceptance"].size(), 4u);
  EXPECT_EQ(j["config"]["chains"], 4);
  EXPECT_TRUE(j.contains("converged"));
  auto csv = draws_to_csv(post.draws, names);
  EXPECT_EQ(csv.substr(0, 4), "x,y\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 200);
}
