#pragma once

// Action/intention data model: vocabulary, labeled sequences, JSONL corpus
// ingestion, next-action training pairs and prefix truncation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentinf/error.hpp"
#include "intentinf/util.hpp"

namespace intentinf {

using ActionIndex = std::size_t;
using IntentionIndex = std::size_t;

inline constexpr ActionIndex kPad = 0;
inline constexpr ActionIndex kUnk = 1;
inline constexpr std::string_view kPadName = "<pad>";
inline constexpr std::string_view kUnkName = "<unk>";

/// Ordered action names. Index 0 is PAD, index 1 is UNK, real actions
/// occupy 2..size()-1.
class ActionVocabulary {
 public:
  ActionVocabulary() = default;

  /// Builds a vocabulary from real action names, kept in the given order.
  static ActionVocabulary from_actions(std::span<const std::string> actions) {
    if (actions.empty())
      throw Error(ErrorCode::InvalidVocabulary, "vocabulary needs at least one real action");
    ActionVocabulary v;
    v.names_.reserve(actions.size() + 2);
    v.names_.emplace_back(kPadName);
    v.names_.emplace_back(kUnkName);
    for (const auto& a : actions) {
      if (a.empty()) throw Error(ErrorCode::InvalidVocabulary, "empty action name");
      if (a == kPadName || a == kUnkName)
        throw Error(ErrorCode::InvalidVocabulary, "reserved action name '" + a + "'");
      if (!v.index_.emplace(a, v.names_.size()).second)
        throw Error(ErrorCode::InvalidVocabulary, "duplicate action name '" + a + "'");
      v.names_.push_back(a);
    }
    return v;
  }

  /// Rebuilds from a full name list including the two reserved entries.
  static ActionVocabulary from_full_names(std::span<const std::string> names) {
    if (names.size() < 3 || names[kPad] != kPadName || names[kUnk] != kUnkName)
      throw Error(ErrorCode::InvalidVocabulary, "full vocabulary must start with <pad>, <unk>");
    return from_actions(names.subspan(2));
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(ActionIndex i) const { return names_.at(i); }

  std::optional<ActionIndex> find(std::string_view name) const {
    if (name == kUnkName) return kUnk;
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Unknown names map to UNK.
  ActionIndex lookup(std::string_view name) const { return find(name).value_or(kUnk); }

  bool valid_action(ActionIndex a) const noexcept { return a != kPad && a < names_.size(); }

  /// FNV-1a over the NUL-separated names in index order.
  std::uint64_t hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& n : names_) {
      h = fnv1a64(n, h);
      h = fnv1a64(std::string_view("\0", 1), h);
    }
    return h;
  }

  friend bool operator==(const ActionVocabulary& a, const ActionVocabulary& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, ActionIndex> index_;
};

struct LabeledSequence {
  IntentionIndex intention = 0;
  std::string user;
  std::vector<ActionIndex> actions;

  friend bool operator==(const LabeledSequence&, const LabeledSequence&) = default;
};

struct TrainingPair {
  std::vector<ActionIndex> prefix;
  ActionIndex target = kUnk;

  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

struct Corpus {
  ActionVocabulary vocabulary;
  std::vector<std::string> intentions;
  std::vector<LabeledSequence> sequences;

  std::size_t intention_count() const noexcept { return intentions.size(); }

  /// Number of sequences labeled with each intention.
  std::vector<std::size_t> per_intention_counts() const {
    std::vector<std::size_t> m(intentions.size(), 0);
    for (const auto& s : sequences) ++m.at(s.intention);
    return m;
  }

  std::optional<IntentionIndex> find_intention(std::string_view name) const {
    auto it = std::find(intentions.begin(), intentions.end(), name);
    if (it == intentions.end()) return std::nullopt;
    return static_cast<IntentionIndex>(it - intentions.begin());
  }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Checks the structural invariants of a corpus; throws on violation.
inline void validate(const Corpus& c) {
  if (c.intentions.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus has no intentions");
  std::vector<std::string> sorted = c.intentions;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw Error(ErrorCode::InvalidVocabulary, "duplicate intention name");
  if (c.vocabulary.size() < 3) throw Error(ErrorCode::InvalidVocabulary, "vocabulary too small");
  for (std::size_t j = 0; j < c.sequences.size(); ++j) {
    const auto& s = c.sequences[j];
    if (s.intention >= c.intentions.size())
      throw Error(ErrorCode::UnknownIntention, "sequence " + std::to_string(j) + " has intention index out of range");
    if (s.actions.empty())
      throw Error(ErrorCode::EmptySequence, "sequence " + std::to_string(j));
    for (auto a : s.actions)
      if (!c.vocabulary.valid_action(a))
        throw Error(ErrorCode::InvalidIndex, "sequence " + std::to_string(j) + " has invalid action index");
  }
}

namespace detail {

struct RawLine {
  std::size_t line_no;
  std::string intention;
  std::string user;
  std::vector<std::string> actions;
};

inline std::vector<RawLine> parse_jsonl(std::string_view text) {
  std::vector<RawLine> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    auto where = "line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedLine, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("intention") || !j["intention"].is_string() ||
        !j.contains("user") || !j["user"].is_string() || !j.contains("actions") ||
        !j["actions"].is_array())
      throw Error(ErrorCode::MalformedLine,
                  where + ": expected {\"intention\": str, \"user\": str, \"actions\": [str, ...]}");
    RawLine r{line_no, j["intention"].get<std::string>(), j["user"].get<std::string>(), {}};
    for (const auto& a : j["actions"]) {
      if (!a.is_string()) throw Error(ErrorCode::MalformedLine, where + ": action is not a string");
      r.actions.push_back(a.get<std::string>());
    }
    if (r.actions.empty()) throw Error(ErrorCode::EmptySequence, where);
    if (r.intention.empty()) throw Error(ErrorCode::MalformedLine, where + ": empty intention name");
    out.push_back(std::move(r));
    if (end == text.size()) break;
  }
  if (out.empty()) throw Error(ErrorCode::EmptyCorpus, "no sequences");
  return out;
}

}  // namespace detail

/// Parses a JSONL corpus. The vocabulary is the sorted union of observed
/// actions plus PAD/UNK; intentions are sorted lexicographically; sequences
/// keep file order.
inline Corpus parse_corpus(std::string_view text) {
  auto raw = detail::parse_jsonl(text);
  std::vector<std::string> actions;
  std::vector<std::string> intentions;
  for (const auto& r : raw) {
    intentions.push_back(r.intention);
    for (const auto& a : r.actions)
      if (a != kUnkName) actions.push_back(a);
  }
  auto uniq = [](std::vector<std::string>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(actions);
  uniq(intentions);

  Corpus c;
  try {
    c.vocabulary = ActionVocabulary::from_actions(actions);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidVocabulary, e.what());
  }
  c.intentions = std::move(intentions);
  c.sequences.reserve(raw.size());
  for (const auto& r : raw) {
    LabeledSequence s;
    s.intention = *c.find_intention(r.intention);
    s.user = r.user;
    for (const auto& a : r.actions) s.actions.push_back(c.vocabulary.lookup(a));
    c.sequences.push_back(std::move(s));
  }
  return c;
}

/// Parses a JSONL corpus against a fixed vocabulary and intention list, e.g.
/// test data scored by models trained elsewhere. Unseen actions become UNK;
/// `unknown_actions` (if given) receives how many were mapped.
inline Corpus parse_corpus(std::string_view text, const ActionVocabulary& vocabulary,
                           const std::vector<std::string>& intentions,
                           std::size_t* unknown_actions = nullptr) {
  auto raw = detail::parse_jsonl(text);
  Corpus c;
  c.vocabulary = vocabulary;
  c.intentions = intentions;
  std::size_t unknown = 0;
  for (const auto& r : raw) {
    auto i = c.find_intention(r.intention);
    if (!i)
      throw Error(ErrorCode::UnknownIntention,
                  "line " + std::to_string(r.line_no) + ": '" + r.intention + "'");
    LabeledSequence s{*i, r.user, {}};
    for (const auto& a : r.actions) {
      if (a == kPadName)
        throw Error(ErrorCode::MalformedLine, "line " + std::to_string(r.line_no) + ": <pad> is reserved");
      auto idx = vocabulary.find(a);
      if (!idx) ++unknown;
      s.actions.push_back(idx.value_or(kUnk));
    }
    c.sequences.push_back(std::move(s));
  }
  if (unknown_actions) *unknown_actions = unknown;
  return c;
}

inline std::string serialize_sequence(const Corpus& c, const LabeledSequence& s) {
  nlohmann::ordered_json j;
  j["intention"] = c.intentions.at(s.intention);
  j["user"] = s.user;
  auto& arr = j["actions"] = nlohmann::ordered_json::array();
  for (auto a : s.actions) arr.push_back(c.vocabulary.name(a));
  return j.dump();
}

/// One JSON object per line, in sequence order.
inline std::string serialize_corpus(const Corpus& c) {
  std::string out;
  for (const auto& s : c.sequences) {
    out += serialize_sequence(c, s);
    out += '\n';
  }
  return out;
}

/// ([a0], a1), ([a0,a1], a2), ..., ([a0..a_{L-1}], a_L). Length-1 input
/// yields no pairs.
inline std::vector<TrainingPair> expand_training_pairs(std::span<const ActionIndex> actions) {
  std::vector<TrainingPair> pairs;
  if (actions.size() < 2) return pairs;
  pairs.reserve(actions.size() - 1);
  for (std::size_t k = 1; k < actions.size(); ++k)
    pairs.push_back({std::vector<ActionIndex>(actions.begin(), actions.begin() + k), actions[k]});
  return pairs;
}

inline std::vector<TrainingPair> expand_training_pairs(const LabeledSequence& seq) {
  return expand_training_pairs(std::span<const ActionIndex>(seq.actions));
}

/// All training pairs of the sequences labeled `intention`, in corpus order.
inline std::vector<TrainingPair> training_pairs_for(const Corpus& c, IntentionIndex intention) {
  std::vector<TrainingPair> out;
  for (const auto& s : c.sequences) {
    if (s.intention != intention) continue;
    auto p = expand_training_pairs(s);
    out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return out;
}

/// Number of leading actions kept for fraction f of an n-action sequence:
/// floor(f*n), but never fewer than one.
inline std::size_t prefix_length(std::size_t n, double f) {
  if (!(f > 0.0) || f > 1.0)
    throw Error(ErrorCode::InvalidFraction, "fraction must lie in (0, 1], got " + format_g6(f));
  if (f == 1.0) return n;
  // Absorbs representation error so that e.g. 0.3 * 10 floors to 3.
  auto k = static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

inline LabeledSequence truncate_fraction(const LabeledSequence& seq, double f) {
  LabeledSequence out = seq;
  out.actions.resize(prefix_length(seq.actions.size(), f));
  return out;
}

}  // namespace intentinf
