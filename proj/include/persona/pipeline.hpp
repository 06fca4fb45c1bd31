#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/backend.hpp"
#include "persona/dialogue.hpp"
#include "persona/engine.hpp"
#include "persona/metrics.hpp"
#include "persona/reward.hpp"
#include "persona/taxonomy.hpp"

namespace persona {

inline constexpr std::size_t kDefaultDistractorBudget = 3000;
inline constexpr std::string_view kConfigEnvVar = "PERSONA_ENGINE_CONFIG";

/// How to build one backend role. `kind` is one of:
///  policy:    "oracle" | "keyword" | "http"
///  judge:     "rule" | "http"
///  generator: "template" | "http"
/// For "http", an empty base_url falls back to $PERSONA_<ROLE>_URL and an
/// empty credential_env to PERSONA_<ROLE>_API_KEY. The key itself is only
/// ever read from the environment.
struct BackendSpec {
  static BackendSpec of_kind(std::string kind) {
    BackendSpec s;
    s.kind = std::move(kind);
    return s;
  }

  std::string kind;
  std::string model;
  std::string base_url;
  std::string credential_env;
  std::chrono::milliseconds timeout{30000};
  RetryPolicy retry;
  double rate_limit_rps = 5.0;
  double drop_rate = 0.0;        // oracle policy
  double block_drop_rate = 0.0;  // oracle policy

  bool operator==(const BackendSpec&) const = default;
};

struct DistractorSpec {
  std::size_t budget = kDefaultDistractorBudget;
  DistractorPosition position = DistractorPosition::kAfterPreference;
  std::optional<std::filesystem::path> pool;  // built-in synthetic pool when absent
};

struct RunConfig {
  std::filesystem::path corpus;
  CorpusFormat format = CorpusFormat::kAloe;
  std::optional<std::filesystem::path> taxonomy;  // built-in default when absent
  BackendSpec policy = BackendSpec::of_kind("oracle");
  BackendSpec judge = BackendSpec::of_kind("rule");
  BackendSpec generator = BackendSpec::of_kind("template");
  RewardConfig reward;
  EngineConfig engine;
  DistractorSpec distractor;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  bool strict = false;
  std::size_t max_turns = 200;

  /// Checks values and that referenced input files exist.
  void validate() const;
};

/// Relative paths in the document resolve against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

struct Backends {
  BackendPtr policy;
  BackendPtr judge;
  BackendPtr generator;
};

/// `records` feeds the oracle policy; other kinds ignore it.
Backends make_backends(const RunConfig& config, const ProfileTaxonomy& taxonomy,
                       const std::vector<SessionRecord>& records);

ProfileTaxonomy load_taxonomy(const RunConfig& config);

/// File name used for a record's trajectory: id with every character outside
/// [A-Za-z0-9._-] replaced by '_', plus ".jsonl".
std::string trajectory_file_name(std::string_view record_id);

struct RecordOutcome {
  std::string id;
  std::size_t turns = 0;
  bool complete = true;
  std::optional<std::string> error;
  std::optional<double> final_reward;
  std::string file;
};

/// What every command writes as <output_dir>/<command>_summary.json. A
/// command exits nonzero iff `fatal` is nonempty.
struct RunSummary {
  std::string command;
  std::vector<RecordOutcome> records;
  std::vector<LineError> corpus_errors;
  std::vector<std::string> fatal;
  nlohmann::json extra = nlohmann::json::object();

  std::size_t successes() const;
  std::size_t incomplete() const;
  bool ok() const { return fatal.empty(); }
};

nlohmann::json to_json(const RunSummary& summary);
void write_summary(const std::filesystem::path& dir, const RunSummary& summary);

/// Loads the corpus, runs each record with up to `jobs` worker threads, and
/// writes <output_dir>/trajectories/<id>.jsonl plus infer_summary.json. Per-record
/// failures are recorded and the run continues. Output bytes do not depend
/// on `jobs`.
RunSummary run_infer(const RunConfig& config, std::size_t jobs = 1, const Backends* backends = nullptr);

struct EvaluateResult {
  RunSummary summary;
  std::optional<MetricsReport> report;
};

/// Reads <trajectory_dir>/<id>.jsonl for every corpus record, scores each
/// turn's response against the full persona with the judge's alignment
/// prompt, recomputes criteria verdicts, and writes metrics.json,
/// metrics.csv, plot.csv, and rewards.jsonl to the output directory. Judge
/// failures exclude that cell and are counted. No trajectories at all is a
/// fatal empty-input error.
EvaluateResult run_evaluate(const RunConfig& config, const std::filesystem::path& trajectory_dir,
                            std::size_t jobs = 1, const Backends* backends = nullptr);

/// Builds unseen records with the judge as selector and the generator as
/// question writer; records without a candidate are skipped and counted.
RunSummary run_build_unseen(const RunConfig& config, const std::filesystem::path& output,
                            const Backends* backends = nullptr);

/// Inserts distractors into every record; the pool start offset is a hash
/// of (seed, record id).
RunSummary run_distract(const RunConfig& config, const std::filesystem::path& output);

}  // namespace persona
