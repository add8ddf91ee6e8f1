#pragma once

// A model directory holds one checkpoint per intention plus manifest.json,
// which binds the checkpoints to the vocabulary and intention order they were
// trained with.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentinf/checkpoint.hpp"
#include "intentinf/corpus.hpp"
#include "intentinf/error.hpp"
#include "intentinf/predictor.hpp"
#include "intentinf/util.hpp"

namespace intentinf {

inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr int kManifestVersion = 1;

struct TrainingSummary {
  std::size_t pairs = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct ModelSet {
  ActionVocabulary vocabulary;
  std::vector<std::string> intentions;
  PredictorKind kind = PredictorKind::Recurrent;
  Hyperparameters hyperparameters;
  std::vector<PredictorModel> models;
};

inline std::string checkpoint_file_name(std::size_t intention) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "intention_%03zu.ckpt", intention);
  return buf;
}

inline nlohmann::ordered_json hyperparameters_to_json(const Hyperparameters& hp) {
  nlohmann::ordered_json j;
  j["epochs"] = hp.epochs;
  j["batch_size"] = hp.batch_size;
  j["learning_rate"] = hp.learning_rate;
  j["embed_dim"] = hp.embed_dim;
  j["hidden_dim"] = hp.hidden_dim;
  j["optimizer"] = to_string(hp.optimizer);
  j["seed"] = hp.seed;
  j["smoothing"] = hp.smoothing;
  return j;
}

inline Hyperparameters hyperparameters_from_json(const nlohmann::json& j) {
  Hyperparameters hp;
  hp.epochs = j.at("epochs").get<std::size_t>();
  hp.batch_size = j.at("batch_size").get<std::size_t>();
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.embed_dim = j.at("embed_dim").get<std::size_t>();
  hp.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  hp.optimizer = parse_optimizer_kind(j.at("optimizer").get<std::string>());
  hp.seed = j.at("seed").get<std::uint64_t>();
  hp.smoothing = j.at("smoothing").get<double>();
  return hp;
}

/// Writes checkpoints and the manifest into `dir` (created if missing).
inline void save_model_set(const std::filesystem::path& dir, const ModelSet& set,
                           const std::vector<TrainingSummary>& training = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());

  nlohmann::ordered_json m;
  m["format"] = "intentinf-models";
  m["version"] = kManifestVersion;
  m["kind"] = to_string(set.kind);
  m["vocabulary"] = set.vocabulary.names();
  m["vocabulary_hash"] = hex64(set.vocabulary.hash());
  m["intentions"] = set.intentions;
  m["hyperparameters"] = hyperparameters_to_json(set.hyperparameters);
  auto& cks = m["checkpoints"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < set.models.size(); ++i) {
    const auto bytes = save_model(set.models[i]);
    const auto name = checkpoint_file_name(i);
    write_file((dir / name).string(), bytes);
    nlohmann::ordered_json c;
    c["intention"] = set.intentions.at(i);
    c["file"] = name;
    c["hash"] = hex64(fnv1a64(bytes));
    if (i < training.size()) {
      c["pairs"] = training[i].pairs;
      c["initial_loss"] = round_g6(training[i].initial_loss);
      c["final_loss"] = round_g6(training[i].final_loss);
    }
    cks.push_back(std::move(c));
  }
  write_file((dir / kManifestName).string(), m.dump(2) + "\n");
}

/// Loads a model directory. Any disagreement between manifest, checkpoint
/// bytes and vocabulary is a hard error.
inline ModelSet load_model_set(const std::filesystem::path& dir) {
  const auto manifest_path = (dir / kManifestName).string();
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ManifestMismatch, manifest_path + ": " + e.what());
  }
  ModelSet set;
  try {
    if (m.at("format").get<std::string>() != "intentinf-models")
      throw Error(ErrorCode::ManifestMismatch, manifest_path + ": not a model manifest");
    if (m.at("version").get<int>() != kManifestVersion)
      throw Error(ErrorCode::VersionMismatch, manifest_path + ": unsupported manifest version");
    set.kind = parse_predictor_kind(m.at("kind").get<std::string>());
    set.vocabulary = ActionVocabulary::from_full_names(m.at("vocabulary").get<std::vector<std::string>>());
    set.intentions = m.at("intentions").get<std::vector<std::string>>();
    set.hyperparameters = hyperparameters_from_json(m.at("hyperparameters"));
    if (m.at("vocabulary_hash").get<std::string>() != hex64(set.vocabulary.hash()))
      throw Error(ErrorCode::ManifestMismatch, "vocabulary hash does not match the listed vocabulary");
    const auto& cks = m.at("checkpoints");
    if (cks.size() != set.intentions.size())
      throw Error(ErrorCode::ManifestMismatch, "checkpoint count differs from intention count");
    for (std::size_t i = 0; i < cks.size(); ++i) {
      if (cks[i].at("intention").get<std::string>() != set.intentions[i])
        throw Error(ErrorCode::ManifestMismatch, "checkpoint order differs from intention order");
      const auto path = (dir / cks[i].at("file").get<std::string>()).string();
      const auto bytes = read_file(path);
      if (hex64(fnv1a64(bytes)) != cks[i].at("hash").get<std::string>())
        throw Error(ErrorCode::ManifestMismatch, path + ": checkpoint hash differs from manifest");
      auto model = load_model(bytes, set.vocabulary.hash());
      if (model.intention != i) throw Error(ErrorCode::ManifestMismatch, path + ": wrong intention index");
      set.models.push_back(std::move(model));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ManifestMismatch, manifest_path + ": " + e.what());
  }
  return set;
}

}  // namespace intentinf
