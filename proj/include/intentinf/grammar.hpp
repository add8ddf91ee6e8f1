#pragma once

// Synthetic corpus generator. Each intention owns weighted templates made of
// ordered action blocks; emissions are replaced by a random off-template
// action with probability `noise`.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentinf/corpus.hpp"
#include "intentinf/error.hpp"

namespace intentinf {

struct GrammarBlock {
  std::vector<std::string> actions;
  double skip_prob = 0.0;
  std::size_t min_repeat = 1;
  std::size_t max_repeat = 1;
};

struct GrammarTemplate {
  double weight = 1.0;
  std::vector<GrammarBlock> blocks;
};

struct IntentionGrammar {
  std::string name;
  double noise = 0.0;
  std::vector<GrammarTemplate> templates;
};

struct GrammarSpec {
  std::size_t min_length = 1;
  std::size_t max_length = 1;
  /// Actions that only ever appear as noise.
  std::vector<std::string> extra_actions;
  std::vector<IntentionGrammar> intentions;
};

inline void validate(const GrammarSpec& g) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidGrammar, m); };
  if (g.intentions.empty()) fail("no intentions");
  if (g.min_length < 1 || g.max_length < g.min_length) fail("length bounds must satisfy 1 <= min <= max");
  std::vector<std::string> names;
  for (const auto& ig : g.intentions) {
    if (ig.name.empty()) fail("empty intention name");
    names.push_back(ig.name);
    if (!(ig.noise >= 0.0 && ig.noise < 1.0)) fail("noise of '" + ig.name + "' must lie in [0, 1)");
    if (ig.templates.empty()) fail("intention '" + ig.name + "' has no templates");
    bool any_positive = false;
    for (const auto& t : ig.templates) {
      if (!(t.weight >= 0.0)) fail("negative template weight in '" + ig.name + "'");
      if (t.weight > 0.0) any_positive = true;
      bool emits = false;
      for (const auto& b : t.blocks) {
        if (b.actions.empty()) fail("empty block in '" + ig.name + "'");
        for (const auto& a : b.actions)
          if (a.empty() || a == kPadName || a == kUnkName) fail("invalid action name in '" + ig.name + "'");
        if (!(b.skip_prob >= 0.0 && b.skip_prob <= 1.0)) fail("skip_prob outside [0, 1] in '" + ig.name + "'");
        if (b.min_repeat < 1 || b.max_repeat < b.min_repeat)
          fail("repeat bounds must satisfy 1 <= min <= max in '" + ig.name + "'");
        if (b.skip_prob < 1.0) emits = true;
      }
      if (!emits) fail("a template of '" + ig.name + "' can never emit an action");
    }
    if (!any_positive) fail("intention '" + ig.name + "' has no positive template weight");
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) fail("duplicate intention name");
}

inline GrammarSpec grammar_from_json(const nlohmann::json& j) {
  GrammarSpec g;
  try {
    g.min_length = j.at("min_length").get<std::size_t>();
    g.max_length = j.at("max_length").get<std::size_t>();
    if (j.contains("extra_actions")) g.extra_actions = j["extra_actions"].get<std::vector<std::string>>();
    for (const auto& ji : j.at("intentions")) {
      IntentionGrammar ig;
      ig.name = ji.at("name").get<std::string>();
      ig.noise = ji.value("noise", 0.0);
      for (const auto& jt : ji.at("templates")) {
        GrammarTemplate t;
        t.weight = jt.value("weight", 1.0);
        for (const auto& jb : jt.at("blocks")) {
          GrammarBlock b;
          b.actions = jb.at("actions").get<std::vector<std::string>>();
          b.skip_prob = jb.value("skip_prob", 0.0);
          b.min_repeat = jb.value("min_repeat", std::size_t{1});
          b.max_repeat = jb.value("max_repeat", b.min_repeat);
          t.blocks.push_back(std::move(b));
        }
        ig.templates.push_back(std::move(t));
      }
      g.intentions.push_back(std::move(ig));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidGrammar, e.what());
  }
  validate(g);
  return g;
}

inline GrammarSpec parse_grammar(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidGrammar, e.what());
  }
  return grammar_from_json(j);
}

/// Every action the grammar can emit, sorted.
inline std::vector<std::string> grammar_actions(const GrammarSpec& g) {
  std::vector<std::string> all = g.extra_actions;
  for (const auto& ig : g.intentions)
    for (const auto& t : ig.templates)
      for (const auto& b : t.blocks) all.insert(all.end(), b.actions.begin(), b.actions.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

struct GenerationStats {
  std::size_t emissions = 0;
  std::size_t off_template = 0;
};

/// Generates `n_per_intention` sequences per intention. User `u###` owns the
/// ###-th sequence of every intention. Deterministic for a fixed seed.
inline Corpus generate_synthetic(const GrammarSpec& spec, std::size_t n_per_intention, std::uint64_t seed,
                                 GenerationStats* stats = nullptr) {
  validate(spec);
  if (n_per_intention < 1) throw Error(ErrorCode::InvalidGrammar, "n_per_intention must be >= 1");

  Corpus c;
  auto actions = grammar_actions(spec);
  c.vocabulary = ActionVocabulary::from_actions(actions);

  std::vector<const IntentionGrammar*> order;
  for (const auto& ig : spec.intentions) order.push_back(&ig);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name < b->name; });
  for (auto* ig : order) c.intentions.push_back(ig->name);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length_dist(spec.min_length, spec.max_length);
  std::uniform_int_distribution<std::size_t> other_action(0, actions.size() >= 2 ? actions.size() - 2 : 0);
  GenerationStats local;

  for (IntentionIndex i = 0; i < order.size(); ++i) {
    const auto& ig = *order[i];
    std::vector<double> weights;
    for (const auto& t : ig.templates) weights.push_back(t.weight);
    std::discrete_distribution<std::size_t> pick_template(weights.begin(), weights.end());

    for (std::size_t j = 0; j < n_per_intention; ++j) {
      LabeledSequence s;
      s.intention = i;
      char user[32];
      std::snprintf(user, sizeof user, "u%03zu", j);
      s.user = user;

      const std::size_t target_len = length_dist(rng);
      const auto& tmpl = ig.templates[pick_template(rng)];
      while (s.actions.size() < target_len) {
        for (const auto& b : tmpl.blocks) {
          if (s.actions.size() >= target_len) break;
          if (unit(rng) < b.skip_prob) continue;
          std::uniform_int_distribution<std::size_t> reps(b.min_repeat, b.max_repeat);
          const std::size_t r = reps(rng);
          for (std::size_t rep = 0; rep < r && s.actions.size() < target_len; ++rep) {
            for (const auto& name : b.actions) {
              if (s.actions.size() >= target_len) break;
              ActionIndex a = c.vocabulary.lookup(name);
              ++local.emissions;
              if (actions.size() >= 2 && unit(rng) < ig.noise) {
                // Uniform over every other action: skip the intended one.
                std::size_t k = other_action(rng);
                ActionIndex cand = k + 2;
                if (cand >= a) ++cand;
                a = cand;
                ++local.off_template;
              }
              s.actions.push_back(a);
            }
          }
        }
      }
      c.sequences.push_back(std::move(s));
    }
  }
  if (stats) *stats = local;
  return c;
}

}  // namespace intentinf
