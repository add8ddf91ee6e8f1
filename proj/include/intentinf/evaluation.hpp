#pragma once

// Evaluation protocol: per-sequence intention inference and prefix-fraction
// sweeps, with CSV/JSON reports averaged over users.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentinf/corpus.hpp"
#include "intentinf/error.hpp"
#include "intentinf/inference.hpp"
#include "intentinf/parallel.hpp"
#include "intentinf/predictor.hpp"
#include "intentinf/util.hpp"

namespace intentinf {

struct UserInference {
  IntentionIndex true_intention = 0;
  IntentionPosterior posterior;
};

/// Scores `seq` under every model and samples the intention posterior.
inline UserInference infer_user(std::span<const PredictorModel> models, const LabeledSequence& seq,
                                const InferenceConfig& cfg) {
  if (seq.actions.size() < 2)
    throw Error(ErrorCode::SequenceTooShort, "inference needs at least two observed actions");
  auto lm = build_likelihood_matrix(models, seq.actions);
  return {seq.intention, sample_posterior(lm, cfg)};
}

/// Seed of the (sequence, fraction) job; fractions are keyed at 1e-6.
inline std::uint64_t derive_seed(std::uint64_t base, std::size_t sequence_id, double fraction) {
  return mix_seed({base, sequence_id, static_cast<std::uint64_t>(std::llround(fraction * 1e6))});
}

inline std::vector<double> default_fractions() {
  std::vector<double> f;
  for (int k = 1; k <= 10; ++k) f.push_back(k / 10.0);
  return f;
}

inline void validate_fractions(std::span<const double> fractions) {
  if (fractions.empty()) throw Error(ErrorCode::InvalidFraction, "no fractions given");
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    if (!(fractions[k] > 0.0 && fractions[k] <= 1.0))
      throw Error(ErrorCode::InvalidFraction, "fraction " + format_g6(fractions[k]) + " outside (0, 1]");
    if (k && !(fractions[k] > fractions[k - 1]))
      throw Error(ErrorCode::InvalidFraction, "fractions must be strictly increasing");
  }
}

struct SweepEntry {
  std::string user;
  IntentionIndex true_intention = 0;
  std::size_t sequence_id = 0;
  double fraction = 1.0;
  std::size_t observed_actions = 0;
  PosteriorSummary summary;
};

struct AggregateRow {
  IntentionIndex true_intention = 0;
  double fraction = 1.0;
  std::size_t users = 0;
  double accuracy = 0.0;
  /// Indexed by assumed intention.
  std::vector<double> mean, ci5, ci95;
};

struct SweepReport {
  std::vector<std::string> intentions;
  std::vector<double> fractions;
  /// Ordered by sequence id, then fraction.
  std::vector<SweepEntry> entries;
  std::vector<AggregateRow> aggregates;
};

/// Averages entries per (true intention, fraction): first within each user,
/// then across users. Accuracy counts entries whose argmax is the truth.
inline std::vector<AggregateRow> aggregate(const SweepReport& report) {
  const std::size_t N = report.intentions.size();
  struct Acc {
    std::map<std::string, std::pair<std::size_t, std::vector<double>>> per_user;  // count, sums (3N)
    std::size_t entries = 0, correct = 0;
  };
  std::map<std::pair<IntentionIndex, std::size_t>, Acc> groups;
  auto fraction_index = [&](double f) {
    auto it = std::find(report.fractions.begin(), report.fractions.end(), f);
    if (it == report.fractions.end()) throw Error(ErrorCode::UnknownFraction, format_g6(f));
    return static_cast<std::size_t>(it - report.fractions.begin());
  };
  for (const auto& e : report.entries) {
    auto& g = groups[{e.true_intention, fraction_index(e.fraction)}];
    auto& [count, sums] = g.per_user[e.user];
    if (sums.empty()) sums.assign(3 * N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      sums[i] += e.summary.intentions[i].mean;
      sums[N + i] += e.summary.intentions[i].ci5;
      sums[2 * N + i] += e.summary.intentions[i].ci95;
    }
    ++count;
    ++g.entries;
    if (argmax_intention(e.summary).index == e.true_intention) ++g.correct;
  }
  std::vector<AggregateRow> rows;
  for (const auto& [key, g] : groups) {
    AggregateRow r;
    r.true_intention = key.first;
    r.fraction = report.fractions[key.second];
    r.users = g.per_user.size();
    r.accuracy = static_cast<double>(g.correct) / static_cast<double>(g.entries);
    r.mean.assign(N, 0.0);
    r.ci5.assign(N, 0.0);
    r.ci95.assign(N, 0.0);
    for (const auto& [user, cs] : g.per_user) {
      const double inv = 1.0 / static_cast<double>(cs.first);
      for (std::size_t i = 0; i < N; ++i) {
        r.mean[i] += cs.second[i] * inv;
        r.ci5[i] += cs.second[N + i] * inv;
        r.ci95[i] += cs.second[2 * N + i] * inv;
      }
    }
    const double invu = 1.0 / static_cast<double>(r.users);
    for (std::size_t i = 0; i < N; ++i) {
      r.mean[i] *= invu;
      r.ci5[i] *= invu;
      r.ci95[i] *= invu;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Truncates every sequence at every fraction and infers the posterior. Job
/// (sequence j, fraction f) uses seed derive_seed(cfg.seed, j, f), so the
/// result does not depend on `jobs`.
inline SweepReport sweep(std::span<const PredictorModel> models, const Corpus& corpus,
                         std::span<const double> fractions, const InferenceConfig& cfg, std::size_t jobs = 1) {
  validate(cfg);
  validate_fractions(fractions);
  if (corpus.sequences.empty()) throw Error(ErrorCode::EmptyCorpus, "nothing to sweep");
  if (models.size() != corpus.intention_count())
    throw Error(ErrorCode::InvalidConfig, std::to_string(models.size()) + " models for " +
                                              std::to_string(corpus.intention_count()) + " intentions");
  for (const auto& m : models)
    if (m.vocabulary_hash != corpus.vocabulary.hash())
      throw Error(ErrorCode::VocabularyMismatch, "model vocabulary differs from the corpus vocabulary");

  SweepReport report;
  report.intentions = corpus.intentions;
  report.fractions.assign(fractions.begin(), fractions.end());
  const std::size_t F = fractions.size(), N = models.size();
  report.entries.resize(corpus.sequences.size() * F);

  parallel_for(report.entries.size(), jobs, [&](std::size_t job) {
    const std::size_t j = job / F;
    const double f = fractions[job % F];
    const auto& seq = corpus.sequences[j];
    auto prefix = truncate_fraction(seq, f);
    InferenceConfig local = cfg;
    local.seed = derive_seed(cfg.seed, j, f);
    // A single observed action has no scored position: the posterior is the prior.
    auto lm = prefix.actions.size() >= 2 ? build_likelihood_matrix(models, prefix.actions)
                                         : LikelihoodMatrix(0, N, {});
    auto post = sample_posterior(lm, local);
    report.entries[job] = {seq.user, seq.intention, j, f, prefix.actions.size(), std::move(post.summary)};
  });
  report.aggregates = aggregate(report);
  return report;
}

/// Share of entries at fraction f whose top posterior mean is the truth.
inline double accuracy(const SweepReport& report, double f) {
  std::size_t total = 0, correct = 0;
  for (const auto& e : report.entries) {
    if (e.fraction != f) continue;
    ++total;
    if (argmax_intention(e.summary).index == e.true_intention) ++correct;
  }
  if (total == 0) throw Error(ErrorCode::UnknownFraction, "no entries at fraction " + format_g6(f));
  return static_cast<double>(correct) / static_cast<double>(total);
}

enum class ReportFormat { Csv, Json, AggregateCsv };

inline constexpr std::string_view kReportCsvHeader =
    "user,true_intention,sequence_id,fraction,assumed_intention,post_mean,ci5,ci95,rhat\n";
inline constexpr std::string_view kAggregateCsvHeader =
    "true_intention,fraction,users,assumed_intention,mean,ci5,ci95,accuracy\n";

inline std::string report_to_csv(const SweepReport& r) {
  std::string out(kReportCsvHeader);
  for (const auto& e : r.entries)
    for (std::size_t i = 0; i < e.summary.intentions.size(); ++i) {
      const auto& s = e.summary.intentions[i];
      out += e.user + ',' + r.intentions.at(e.true_intention) + ',' + std::to_string(e.sequence_id) + ',' +
             format_g6(e.fraction) + ',' + r.intentions.at(i) + ',' + format_g6(s.mean) + ',' + format_g6(s.ci5) +
             ',' + format_g6(s.ci95) + ',' + format_g6(s.rhat) + '\n';
    }
  return out;
}

inline std::string aggregates_to_csv(const SweepReport& r) {
  std::string out(kAggregateCsvHeader);
  for (const auto& a : r.aggregates)
    for (std::size_t i = 0; i < a.mean.size(); ++i)
      out += r.intentions.at(a.true_intention) + ',' + format_g6(a.fraction) + ',' + std::to_string(a.users) + ',' +
             r.intentions.at(i) + ',' + format_g6(a.mean[i]) + ',' + format_g6(a.ci5[i]) + ',' +
             format_g6(a.ci95[i]) + ',' + format_g6(a.accuracy) + '\n';
  return out;
}

inline nlohmann::ordered_json report_to_json(const SweepReport& r) {
  using J = nlohmann::ordered_json;
  J j;
  j["intentions"] = r.intentions;
  auto& fr = j["fractions"] = J::array();
  for (double f : r.fractions) fr.push_back(round_g6(f));
  auto& entries = j["entries"] = J::array();
  for (const auto& e : r.entries) {
    J je;
    je["user"] = e.user;
    je["true_intention"] = r.intentions.at(e.true_intention);
    je["sequence_id"] = e.sequence_id;
    je["fraction"] = round_g6(e.fraction);
    je["observed_actions"] = e.observed_actions;
    je["converged"] = e.summary.converged;
    auto& assumed = je["assumed"] = J::array();
    for (std::size_t i = 0; i < e.summary.intentions.size(); ++i) {
      const auto& s = e.summary.intentions[i];
      assumed.push_back(J{{"intention", r.intentions.at(i)},
                          {"mean", round_g6(s.mean)},
                          {"ci5", round_g6(s.ci5)},
                          {"ci95", round_g6(s.ci95)},
                          {"rhat", round_g6(s.rhat)},
                          {"ess", round_g6(s.ess)},
                          {"zero_variance", s.zero_variance}});
    }
    entries.push_back(std::move(je));
  }
  auto& aggs = j["aggregates"] = J::array();
  for (const auto& a : r.aggregates) {
    J ja;
    ja["true_intention"] = r.intentions.at(a.true_intention);
    ja["fraction"] = round_g6(a.fraction);
    ja["users"] = a.users;
    ja["accuracy"] = round_g6(a.accuracy);
    auto& assumed = ja["assumed"] = J::array();
    for (std::size_t i = 0; i < a.mean.size(); ++i)
      assumed.push_back(J{{"intention", r.intentions.at(i)},
                          {"mean", round_g6(a.mean[i])},
                          {"ci5", round_g6(a.ci5[i])},
                          {"ci95", round_g6(a.ci95[i])}});
    aggs.push_back(std::move(ja));
  }
  return j;
}

inline std::string emit_report(const SweepReport& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::Csv: return report_to_csv(r);
    case ReportFormat::Json: return report_to_json(r).dump(2) + "\n";
    case ReportFormat::AggregateCsv: return aggregates_to_csv(r);
  }
  return {};
}

/// Parses a report written by report_to_json. Values come back at the
/// 6-digit precision they were written with.
inline SweepReport report_from_json(std::string_view text) {
  SweepReport r;
  try {
    auto j = nlohmann::json::parse(text);
    r.intentions = j.at("intentions").get<std::vector<std::string>>();
    r.fractions = j.at("fractions").get<std::vector<double>>();
    auto index_of = [&](const std::string& name) {
      auto it = std::find(r.intentions.begin(), r.intentions.end(), name);
      if (it == r.intentions.end()) throw Error(ErrorCode::UnknownIntention, name);
      return static_cast<IntentionIndex>(it - r.intentions.begin());
    };
    for (const auto& je : j.at("entries")) {
      SweepEntry e;
      e.user = je.at("user").get<std::string>();
      e.true_intention = index_of(je.at("true_intention").get<std::string>());
      e.sequence_id = je.at("sequence_id").get<std::size_t>();
      e.fraction = je.at("fraction").get<double>();
      e.observed_actions = je.at("observed_actions").get<std::size_t>();
      e.summary.converged = je.at("converged").get<bool>();
      for (const auto& s : je.at("assumed"))
        e.summary.intentions.push_back({s.at("mean").get<double>(), s.at("ci5").get<double>(),
                                        s.at("ci95").get<double>(), s.at("rhat").get<double>(),
                                        s.at("ess").get<double>(), s.at("zero_variance").get<bool>()});
      r.entries.push_back(std::move(e));
    }
    for (const auto& ja : j.at("aggregates")) {
      AggregateRow a;
      a.true_intention = index_of(ja.at("true_intention").get<std::string>());
      a.fraction = ja.at("fraction").get<double>();
      a.users = ja.at("users").get<std::size_t>();
      a.accuracy = ja.at("accuracy").get<double>();
      for (const auto& s : ja.at("assumed")) {
        a.mean.push_back(s.at("mean").get<double>());
        a.ci5.push_back(s.at("ci5").get<double>());
        a.ci95.push_back(s.at("ci95").get<double>());
      }
      r.aggregates.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedLine, std::string("report JSON: ") + e.what());
  }
  return r;
}

}  // namespace intentinf
