#pragma once

// `intentinf` command line: generate, train, infer, sweep, report.
// Exit codes: 0 success, 2 usage/validation error, 3 runtime failure.
//
// Every subcommand accepts --config FILE, a JSON object whose keys are long
// flag names without the dashes. Precedence: flags > config file > defaults.

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "intentinf/intentinf.hpp"

namespace intentinf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

namespace detail {

/// Fills options not given on the command line from the config JSON.
inline void apply_config_file(CLI::App& sub, const std::string& path) {
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  if (!cfg.is_object()) throw Error(ErrorCode::InvalidConfig, path + ": expected a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw Error(ErrorCode::InvalidConfig, path + ": unknown key '" + key + "'");
    }
    if (opt->count() > 0) continue;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (const auto& v : value) {
        if (!text.empty()) text += ',';
        text += v.is_string() ? v.get<std::string>() : v.dump();
      }
    } else {
      text = value.dump();
    }
    opt->add_result(text);
    opt->run_callback();
  }
}

inline std::vector<double> parse_real_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, std::string("cannot parse ") + what + " entry '" + item + "'");
    }
  }
  return out;
}

struct InferenceFlags {
  InferenceConfig cfg;
  std::string alpha;

  void attach(CLI::App& app) {
    app.add_option("--chains", cfg.chains, "MCMC chains")->capture_default_str();
    app.add_option("--iterations", cfg.iterations, "Iterations per chain, warmup included")->capture_default_str();
    app.add_option("--warmup", cfg.warmup, "Warmup iterations discarded per chain")->capture_default_str();
    app.add_option("--steps-per-iteration", cfg.steps_per_iteration, "Metropolis transitions per iteration")
        ->capture_default_str();
    app.add_option("--step-size", cfg.step_size, "Initial random-walk step size")->capture_default_str();
    app.add_option("--target-acceptance", cfg.target_acceptance, "Warmup adaptation target")->capture_default_str();
    app.add_option("--alpha", alpha, "Dirichlet concentration, comma-separated (default all ones)");
    app.add_option("--seed", cfg.seed, "Base seed")->capture_default_str();
  }

  InferenceConfig resolve() {
    if (!alpha.empty()) cfg.alpha = parse_real_list(alpha, "alpha");
    validate(cfg);
    return cfg;
  }
};

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

inline void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorCode::InvalidConfig, std::string("missing required option ") + flag);
}

/// A missing input is a usage error, not a runtime failure.
inline void require_input(const std::string& path, const char* flag) {
  require(path, flag);
  if (path != "-" && !std::filesystem::exists(path))
    throw Error(ErrorCode::InvalidConfig, std::string(flag) + " not found: " + path);
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string grammar, out;
  std::size_t n = 30;
  std::uint64_t seed = 0;
};

inline int run_generate(GenerateArgs& a, Streams io) {
  require_input(a.grammar, "--grammar");
  require(a.out, "--out");
  auto spec = parse_grammar(read_file(a.grammar));
  GenerationStats stats;
  auto corpus = generate_synthetic(spec, a.n, a.seed, &stats);
  write_file(a.out, serialize_corpus(corpus));
  io.err << "wrote " << corpus.sequences.size() << " sequences (" << corpus.intention_count() << " intentions, "
         << stats.off_template << "/" << stats.emissions << " noisy emissions) to " << a.out << "\n";
  return kExitOk;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string corpus, out, kind = "recurrent", optimizer = "adam";
  Hyperparameters hp;
  std::size_t jobs = 1;
};

inline int run_train(TrainArgs& a, Streams io) {
  require_input(a.corpus, "--corpus");
  require(a.out, "--out");
  a.hp.optimizer = parse_optimizer_kind(a.optimizer);
  const auto kind = parse_predictor_kind(a.kind);
  validate(a.hp);
  auto corpus = parse_corpus(read_file(a.corpus));

  const std::size_t N = corpus.intention_count();
  std::vector<std::vector<TrainingPair>> pairs(N);
  for (std::size_t i = 0; i < N; ++i) {
    pairs[i] = training_pairs_for(corpus, i);
    if (pairs[i].empty())
      throw Error(ErrorCode::EmptyTrainingSet, "intention '" + corpus.intentions[i] + "' has no sequence of length >= 2");
  }

  ModelSet set;
  set.vocabulary = corpus.vocabulary;
  set.intentions = corpus.intentions;
  set.kind = kind;
  set.hyperparameters = a.hp;
  set.models.resize(N);
  std::vector<TrainingSummary> summaries(N);
  parallel_for(N, a.jobs, [&](std::size_t i) {
    TrainingReport rep;
    set.models[i] = train(pairs[i], a.hp, kind, corpus.vocabulary, i, &rep);
    summaries[i] = {pairs[i].size(), rep.initial_loss, rep.final_loss};
  });
  save_model_set(a.out, set, summaries);
  for (std::size_t i = 0; i < N; ++i)
    io.err << corpus.intentions[i] << ": " << summaries[i].pairs << " pairs, loss " << format_g6(summaries[i].initial_loss)
           << " -> " << format_g6(summaries[i].final_loss) << "\n";
  return kExitOk;
}

// --- infer ------------------------------------------------------------------

struct InferArgs {
  std::string models, sequence, draws_csv;
  InferenceFlags flags;
};

inline int run_infer(InferArgs& a, Streams io) {
  require_input(a.models, "--models");
  require_input(a.sequence, "--sequence");
  auto cfg = a.flags.resolve();
  auto set = load_model_set(a.models);

  std::string text;
  if (a.sequence == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    text = ss.str();
  } else {
    text = read_file(a.sequence);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedLine, "sequence JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || !j.contains("actions") || !j["actions"].is_array())
    throw Error(ErrorCode::MalformedLine, "sequence JSON needs an \"actions\" array");

  LabeledSequence seq;
  for (const auto& v : j["actions"]) {
    if (!v.is_string()) throw Error(ErrorCode::MalformedLine, "actions must be strings");
    const auto name = v.get<std::string>();
    if (name == kPadName) throw Error(ErrorCode::MalformedLine, "<pad> is reserved");
    auto idx = set.vocabulary.find(name);
    if (!idx) io.err << "warning: unknown action '" << name << "' mapped to " << kUnkName << "\n";
    seq.actions.push_back(idx.value_or(kUnk));
  }
  auto result = infer_user(set.models, seq, cfg);

  auto out = posterior_to_json(result.posterior, cfg, set.intentions);
  if (j.contains("user") && j["user"].is_string()) out["user"] = j["user"];
  if (j.contains("intention") && j["intention"].is_string()) out["true_intention"] = j["intention"];
  out["observed_actions"] = seq.actions.size();
  io.out << out.dump(2) << "\n";
  if (!a.draws_csv.empty()) write_file(a.draws_csv, draws_to_csv(result.posterior.draws, set.intentions));
  if (!result.posterior.summary.converged) io.err << "warning: R-hat above " << kRhatThreshold << "\n";
  return kExitOk;
}

// --- sweep ------------------------------------------------------------------

struct SweepArgs {
  std::string models, corpus, out, fractions;
  std::size_t jobs = 1;
  InferenceFlags flags;
};

inline int run_sweep(SweepArgs& a, Streams io) {
  require_input(a.models, "--models");
  require_input(a.corpus, "--corpus");
  require(a.out, "--out");
  auto fractions = a.fractions.empty() ? default_fractions() : parse_real_list(a.fractions, "fractions");
  validate_fractions(fractions);
  auto cfg = a.flags.resolve();
  auto set = load_model_set(a.models);
  std::size_t unknown = 0;
  auto corpus = parse_corpus(read_file(a.corpus), set.vocabulary, set.intentions, &unknown);
  if (unknown) io.err << "warning: " << unknown << " unknown action(s) mapped to " << kUnkName << "\n";

  auto report = sweep(set.models, corpus, fractions, cfg, a.jobs);
  write_file(a.out + ".csv", emit_report(report, ReportFormat::Csv));
  write_file(a.out + ".json", emit_report(report, ReportFormat::Json));
  std::size_t unconverged = 0;
  for (const auto& e : report.entries) unconverged += e.summary.converged ? 0 : 1;
  io.err << "wrote " << a.out << ".csv and " << a.out << ".json (" << report.entries.size() << " entries";
  if (unconverged) io.err << ", " << unconverged << " with R-hat above " << kRhatThreshold;
  io.err << ")\n";
  for (double f : fractions) io.err << "accuracy@" << format_g6(f) << " = " << format_g6(accuracy(report, f)) << "\n";
  return kExitOk;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
  std::string input, out, format = "aggregates";
};

inline int run_report(ReportArgs& a, Streams io) {
  require_input(a.input, "--input");
  auto report = report_from_json(read_file(a.input));
  ReportFormat fmt;
  if (a.format == "csv")
    fmt = ReportFormat::Csv;
  else if (a.format == "json")
    fmt = ReportFormat::Json;
  else if (a.format == "aggregates")
    fmt = ReportFormat::AggregateCsv;
  else
    throw Error(ErrorCode::InvalidConfig, "unknown format '" + a.format + "'");
  // JSON output recomputes aggregates from the entries.
  if (fmt == ReportFormat::Json) report.aggregates = aggregate(report);
  const auto text = emit_report(report, fmt);
  if (a.out.empty())
    io.out << text;
  else
    write_file(a.out, text);
  return kExitOk;
}

}  // namespace detail

/// Runs the CLI on `args` (args[0] is the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  detail::Streams io{out, err};
  CLI::App app{"Intention inference from next-action probabilities", "intentinf"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "intentinf 0.1.0");

  std::string config;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON file with option values (flags take precedence)");
  };

  detail::GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic JSONL corpus from a grammar");
  generate->add_option("--grammar", gen.grammar, "Grammar JSON file");
  generate->add_option("--out", gen.out, "Output JSONL path");
  generate->add_option("-n,--n", gen.n, "Sequences per intention")->capture_default_str();
  generate->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  add_config(generate);

  detail::TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train one next-action predictor per intention");
  train_cmd->add_option("--corpus", tr.corpus, "Training corpus (JSONL)");
  train_cmd->add_option("--out", tr.out, "Output model directory");
  train_cmd->add_option("--kind", tr.kind, "recurrent or ngram")->capture_default_str();
  train_cmd->add_option("--epochs", tr.hp.epochs, "Training epochs (recurrent)")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.hp.batch_size, "Minibatch size")->capture_default_str();
  train_cmd->add_option("--lr", tr.hp.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_option("--embed-dim", tr.hp.embed_dim, "Embedding width")->capture_default_str();
  train_cmd->add_option("--hidden-dim", tr.hp.hidden_dim, "Recurrent state width")->capture_default_str();
  train_cmd->add_option("--optimizer", tr.optimizer, "adam or sgd")->capture_default_str();
  train_cmd->add_option("--smoothing", tr.hp.smoothing, "Add-epsilon constant (ngram)")->capture_default_str();
  train_cmd->add_option("--seed", tr.hp.seed, "Initialization and shuffle seed")->capture_default_str();
  train_cmd->add_option("--jobs", tr.jobs, "Models trained concurrently")->capture_default_str();
  add_config(train_cmd);

  detail::InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "Infer the intention posterior of one action sequence");
  infer_cmd->add_option("--models", inf.models, "Model directory written by `train`");
  infer_cmd->add_option("--sequence", inf.sequence, "Sequence JSON {\"actions\": [...]} or - for stdin");
  infer_cmd->add_option("--draws-csv", inf.draws_csv, "Also write raw draws to this CSV");
  inf.flags.attach(*infer_cmd);
  add_config(infer_cmd);

  detail::SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Infer every sequence at every prefix fraction");
  sweep_cmd->add_option("--models", sw.models, "Model directory written by `train`");
  sweep_cmd->add_option("--corpus", sw.corpus, "Evaluation corpus (JSONL)");
  sweep_cmd->add_option("--out", sw.out, "Output prefix; writes PREFIX.csv and PREFIX.json");
  sweep_cmd->add_option("--fractions", sw.fractions, "Comma-separated fractions (default 0.1,...,1.0)");
  sweep_cmd->add_option("--jobs", sw.jobs, "Concurrent inference jobs")->capture_default_str();
  sw.flags.attach(*sweep_cmd);
  add_config(sweep_cmd);

  detail::ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Re-emit a sweep report (csv, json or aggregates)");
  report_cmd->add_option("--input", rep.input, "Report JSON written by `sweep`");
  report_cmd->add_option("--format", rep.format, "csv, json or aggregates")->capture_default_str();
  report_cmd->add_option("--out", rep.out, "Output path (default stdout)");
  add_config(report_cmd);

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    auto* sub = app.get_subcommands().front();
    if (!config.empty()) {
      detail::require_input(config, "--config");
      detail::apply_config_file(*sub, config);
    }
    if (sub == generate) return detail::run_generate(gen, io);
    if (sub == train_cmd) return detail::run_train(tr, io);
    if (sub == infer_cmd) return detail::run_infer(inf, io);
    if (sub == sweep_cmd) return detail::run_sweep(sw, io);
    return detail::run_report(rep, io);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? kExitUsage : kExitRuntime;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace intentinf::cli
