#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace intentinf {

enum class ErrorCode {
  MalformedLine,
  EmptySequence,
  EmptyCorpus,
  InvalidVocabulary,
  UnknownIntention,
  InvalidFraction,
  InvalidGrammar,
  InvalidHyperparameters,
  EmptyTrainingSet,
  NonFiniteLoss,
  NonFiniteGradient,
  EmptyPrefix,
  InvalidIndex,
  VocabularyMismatch,
  VersionMismatch,
  CorruptCheckpoint,
  OffSimplex,
  InvalidConfig,
  InsufficientDraws,
  NonFinitePosterior,
  OracleUnsupported,
  SequenceTooShort,
  UnknownFraction,
  ManifestMismatch,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::InvalidVocabulary: return "InvalidVocabulary";
    case ErrorCode::UnknownIntention: return "UnknownIntention";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::InvalidGrammar: return "InvalidGrammar";
    case ErrorCode::InvalidHyperparameters: return "InvalidHyperparameters";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyPrefix: return "EmptyPrefix";
    case ErrorCode::InvalidIndex: return "InvalidIndex";
    case ErrorCode::VocabularyMismatch: return "VocabularyMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::OffSimplex: return "OffSimplex";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InsufficientDraws: return "InsufficientDraws";
    case ErrorCode::NonFinitePosterior: return "NonFinitePosterior";
    case ErrorCode::OracleUnsupported: return "OracleUnsupported";
    case ErrorCode::SequenceTooShort: return "SequenceTooShort";
    case ErrorCode::UnknownFraction: return "UnknownFraction";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// True for errors caused by bad input or configuration, as opposed to
/// failures that happen while a valid job runs (divergent training, I/O).
constexpr bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFinitePosterior:
    case ErrorCode::Io:
      return false;
    default:
      return true;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace intentinf
