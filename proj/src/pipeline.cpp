#include "persona/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "json_util.hpp"
#include "persona/mock_backends.hpp"
#include "persona/prompts.hpp"
#include "persona/text.hpp"

namespace persona {

namespace fs = std::filesystem;

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

BackendSpec backend_spec_from_json(const nlohmann::json& j, BackendSpec spec) {
  if (j.is_string()) {
    spec.kind = j.get<std::string>();
    return spec;
  }
  if (!j.is_object()) throw ParseError("backend entry must be a kind string or an object");
  spec.kind = j.value("kind", spec.kind);
  spec.model = j.value("model", spec.model);
  spec.base_url = j.value("base_url", spec.base_url);
  spec.credential_env = j.value("credential_env", spec.credential_env);
  if (j.contains("api_key")) {
    throw ParseError("backend config must not contain 'api_key'; name an environment variable in 'credential_env'");
  }
  spec.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<std::int64_t>(spec.timeout.count())));
  spec.retry.max_attempts = j.value("max_attempts", spec.retry.max_attempts);
  spec.retry.initial_backoff =
      std::chrono::milliseconds(j.value("initial_backoff_ms", static_cast<std::int64_t>(spec.retry.initial_backoff.count())));
  spec.retry.multiplier = j.value("backoff_multiplier", spec.retry.multiplier);
  spec.retry.max_backoff =
      std::chrono::milliseconds(j.value("max_backoff_ms", static_cast<std::int64_t>(spec.retry.max_backoff.count())));
  spec.rate_limit_rps = j.value("rate_limit_rps", spec.rate_limit_rps);
  spec.drop_rate = j.value("drop_rate", spec.drop_rate);
  spec.block_drop_rate = j.value("block_drop_rate", spec.block_drop_rate);
  return spec;
}

nlohmann::json to_json(const BackendSpec& s) {
  nlohmann::json j = {{"kind", s.kind}};
  if (s.kind == "http") {
    j["model"] = s.model;
    j["base_url"] = s.base_url;
    j["credential_env"] = s.credential_env;
    j["timeout_ms"] = s.timeout.count();
    j["max_attempts"] = s.retry.max_attempts;
    j["initial_backoff_ms"] = s.retry.initial_backoff.count();
    j["backoff_multiplier"] = s.retry.multiplier;
    j["max_backoff_ms"] = s.retry.max_backoff.count();
    j["rate_limit_rps"] = s.rate_limit_rps;
  }
  if (s.kind == "oracle") {
    j["drop_rate"] = s.drop_rate;
    j["block_drop_rate"] = s.block_drop_rate;
  }
  return j;
}

void validate_kind(const BackendSpec& spec, Role role) {
  static const std::map<Role, std::vector<std::string>> kKinds = {
      {Role::kPolicy, {"oracle", "keyword", "http"}},
      {Role::kJudge, {"rule", "http"}},
      {Role::kGenerator, {"template", "http"}}};
  const auto& allowed = kKinds.at(role);
  if (std::find(allowed.begin(), allowed.end(), spec.kind) == allowed.end()) {
    throw InvalidArgument("backend kind '" + spec.kind + "' is not valid for role " + std::string(role_name(role)) +
                          " (expected " + join(allowed, ", ") + ")");
  }
  if (!(spec.drop_rate >= 0.0 && spec.drop_rate <= 1.0 && spec.block_drop_rate >= 0.0 &&
        spec.block_drop_rate <= 1.0)) {
    throw InvalidArgument("oracle drop rates must be in [0, 1]");
  }
  if (spec.kind == "http") {
    if (spec.retry.max_attempts < 1) throw InvalidArgument("max_attempts must be >= 1");
    if (!(spec.rate_limit_rps > 0.0)) throw InvalidArgument("rate_limit_rps must be > 0");
    if (spec.timeout.count() <= 0) throw InvalidArgument("timeout_ms must be > 0");
  }
}

/// Sets the configured model id and timeout on every request.
class ModelBinding final : public CompletionBackend {
 public:
  ModelBinding(BackendPtr inner, std::string model, std::chrono::milliseconds timeout)
      : inner_(std::move(inner)), model_(std::move(model)), timeout_(timeout) {}
  CompletionResult complete(const CompletionRequest& request) override {
    CompletionRequest r = request;
    if (r.model.empty()) r.model = model_;
    r.timeout = timeout_;
    return inner_->complete(r);
  }

 private:
  BackendPtr inner_;
  std::string model_;
  std::chrono::milliseconds timeout_;
};

BackendPtr make_http(const BackendSpec& spec, Role role) {
  BackendProfile profile;
  profile.base_url = spec.base_url;
  const auto prefix = "PERSONA_" + upper(role_name(role));
  if (profile.base_url.empty()) {
    const char* env = std::getenv((prefix + "_URL").c_str());
    if (env == nullptr || *env == '\0') {
      throw InvalidArgument("http backend for role " + std::string(role_name(role)) + " needs base_url or $" +
                            prefix + "_URL");
    }
    profile.base_url = env;
  }
  profile.credential_env = spec.credential_env.empty() ? prefix + "_API_KEY" : spec.credential_env;
  profile.retry = spec.retry;
  profile.rate_limit_rps = spec.rate_limit_rps;
  return std::make_shared<ModelBinding>(std::make_shared<HttpChatBackend>(profile), spec.model, spec.timeout);
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::optional<std::string> read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

LoadResult load_records(const RunConfig& config, const ProfileTaxonomy& taxonomy, RunSummary& summary) {
  LoadOptions options;
  options.strict = config.strict;
  options.max_turns = config.max_turns;
  auto loaded = load_corpus(config.corpus, config.format, taxonomy, options);
  summary.corpus_errors = loaded.errors;
  return loaded;
}

}  // namespace

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (corpus.empty()) throw InvalidArgument("config needs a corpus path");
  if (!fs::exists(corpus)) throw InvalidArgument("corpus file " + corpus.string() + " does not exist");
  if (taxonomy && !fs::exists(*taxonomy)) {
    throw InvalidArgument("taxonomy file " + taxonomy->string() + " does not exist");
  }
  if (distractor.pool && !fs::exists(*distractor.pool)) {
    throw InvalidArgument("distractor pool " + distractor.pool->string() + " does not exist");
  }
  validate_kind(policy, Role::kPolicy);
  validate_kind(judge, Role::kJudge);
  validate_kind(generator, Role::kGenerator);
  reward.validate();
  engine.validate();
  if (max_turns < 1) throw InvalidArgument("max_turns must be >= 1");
}

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ParseError("run config must be a JSON object");
  RunConfig c;
  try {
    if (const auto it = j.find("corpus"); it != j.end()) {
      if (it->is_string()) {
        c.corpus = resolve(it->get<std::string>(), base_dir);
      } else {
        c.corpus = resolve(detail::require_string(*it, "path"), base_dir);
        c.format = format_from_name(detail::optional_string(*it, "format", "aloe"));
      }
    }
    if (j.contains("format")) c.format = format_from_name(j["format"].get<std::string>());
    if (j.contains("taxonomy") && !j["taxonomy"].is_null()) {
      c.taxonomy = resolve(j["taxonomy"].get<std::string>(), base_dir);
    }
    if (const auto it = j.find("backends"); it != j.end()) {
      if (it->contains("policy")) c.policy = backend_spec_from_json((*it)["policy"], c.policy);
      if (it->contains("judge")) c.judge = backend_spec_from_json((*it)["judge"], c.judge);
      if (it->contains("generator")) c.generator = backend_spec_from_json((*it)["generator"], c.generator);
    }
    if (j.contains("reward")) c.reward = reward_config_from_json(j["reward"]);
    c.engine.t_max = j.value("t_max", c.engine.t_max);
    c.engine.tau = j.value("tau", c.engine.tau);
    if (const auto it = j.find("distractor"); it != j.end() && it->is_object()) {
      c.distractor.budget = it->value("budget", c.distractor.budget);
      if (it->contains("position")) c.distractor.position = position_from_name((*it)["position"].get<std::string>());
      if (it->contains("pool") && !(*it)["pool"].is_null()) {
        c.distractor.pool = resolve((*it)["pool"].get<std::string>(), base_dir);
      }
    }
    if (j.contains("output_dir")) c.output_dir = resolve(j["output_dir"].get<std::string>(), base_dir);
    c.seed = j.value("seed", c.seed);
    c.strict = j.value("strict", c.strict);
    c.max_turns = j.value("max_turns", c.max_turns);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  const auto text = read_text(path);
  if (!text) throw Error("cannot open config file " + path.string());
  return run_config_from_json(detail::parse_json(*text, "config"), path.parent_path());
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = {{"corpus", {{"path", c.corpus.generic_string()}, {"format", format_name(c.format)}}},
                      {"backends", {{"policy", to_json(c.policy)},
                                    {"judge", to_json(c.judge)},
                                    {"generator", to_json(c.generator)}}},
                      {"reward", to_json(c.reward)},
                      {"t_max", c.engine.t_max},
                      {"tau", c.engine.tau},
                      {"distractor",
                       {{"budget", c.distractor.budget},
                        {"position",
                         c.distractor.position == DistractorPosition::kAfterPreference ? "after_pref" : "interleave"}}},
                      {"output_dir", c.output_dir.generic_string()},
                      {"seed", c.seed},
                      {"strict", c.strict},
                      {"max_turns", c.max_turns}};
  if (c.taxonomy) j["taxonomy"] = c.taxonomy->generic_string();
  if (c.distractor.pool) j["distractor"]["pool"] = c.distractor.pool->generic_string();
  return j;
}

ProfileTaxonomy load_taxonomy(const RunConfig& config) {
  if (!config.taxonomy) return ProfileTaxonomy::default_taxonomy();
  const auto text = read_text(*config.taxonomy);
  if (!text) throw Error("cannot open taxonomy file " + config.taxonomy->string());
  return ProfileTaxonomy::parse(*text);
}

Backends make_backends(const RunConfig& config, const ProfileTaxonomy& taxonomy,
                       const std::vector<SessionRecord>& records) {
  Backends b;
  const auto& p = config.policy;
  if (p.kind == "oracle") {
    b.policy = std::make_shared<OraclePolicyBackend>(records, p.drop_rate, p.block_drop_rate, config.seed);
  } else if (p.kind == "keyword") {
    b.policy = std::make_shared<KeywordPolicyBackend>(taxonomy);
  } else if (p.kind == "http") {
    b.policy = make_http(p, Role::kPolicy);
  } else {
    validate_kind(p, Role::kPolicy);
  }
  if (config.judge.kind == "rule") {
    b.judge = std::make_shared<RuleJudgeBackend>();
  } else if (config.judge.kind == "http") {
    b.judge = make_http(config.judge, Role::kJudge);
  } else {
    validate_kind(config.judge, Role::kJudge);
  }
  if (config.generator.kind == "template") {
    b.generator = std::make_shared<TemplateGeneratorBackend>(taxonomy);
  } else if (config.generator.kind == "http") {
    b.generator = make_http(config.generator, Role::kGenerator);
  } else {
    validate_kind(config.generator, Role::kGenerator);
  }
  return b;
}

std::string trajectory_file_name(std::string_view record_id) {
  std::string out;
  for (char c : record_id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    out += ok ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out + ".jsonl";
}

std::size_t RunSummary::successes() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const RecordOutcome& r) { return r.complete && !r.error; }));
}

std::size_t RunSummary::incomplete() const { return records.size() - successes(); }

nlohmann::json to_json(const RunSummary& s) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : s.records) {
    nlohmann::json j = {{"id", r.id}, {"turns", r.turns}, {"complete", r.complete}};
    if (r.error) j["error"] = *r.error;
    if (r.final_reward) j["final_reward"] = *r.final_reward;
    if (!r.file.empty()) j["file"] = r.file;
    records.push_back(std::move(j));
  }
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& e : s.corpus_errors) errors.push_back({{"line", e.line}, {"message", e.message}});
  return {{"command", s.command},
          {"records", std::move(records)},
          {"successes", s.successes()},
          {"incomplete", s.incomplete()},
          {"corpus_errors", std::move(errors)},
          {"skipped_lines", s.corpus_errors.size()},
          {"fatal", s.fatal},
          {"extra", s.extra}};
}

void write_summary(const fs::path& dir, const RunSummary& summary) {
  write_text(dir / (summary.command + "_summary.json"), to_json(summary).dump(2) + "\n");
}

// ---------------------------------------------------------------------------

RunSummary run_infer(const RunConfig& config, std::size_t jobs, const Backends* backends) {
  RunSummary summary;
  summary.command = "infer";
  try {
    config.validate();
    const auto taxonomy = load_taxonomy(config);
    const auto loaded = load_records(config, taxonomy, summary);
    const Backends built = backends ? *backends : make_backends(config, taxonomy, loaded.records);
    const auto traj_dir = config.output_dir / "trajectories";
    fs::create_directories(traj_dir);

    summary.records.resize(loaded.records.size());
    parallel_for(loaded.records.size(), jobs, [&](std::size_t i) {
      const auto& record = loaded.records[i];
      RecordOutcome& out = summary.records[i];
      out.id = record.id;
      out.file = "trajectories/" + trajectory_file_name(record.id);
      try {
        auto traj = run_session(record, *built.policy, taxonomy, config.engine.t_max);
        out.turns = traj.entries.size();
        out.complete = traj.complete;
        out.error = traj.error;
        try {
          BackendCriteriaJudge judge(built.judge);
          attach_rewards(traj, record, judge, config.reward.lambda_fmt);
          std::vector<double> totals;
          for (const auto& e : traj.entries) totals.push_back(e.reward->total);
          if (!totals.empty()) {
            out.final_reward = final_reward(totals, config.reward.weights_for(totals.size())).value;
          }
        } catch (const std::exception& e) {
          for (auto& entry : traj.entries) entry.reward.reset();
          out.error = std::string("reward: ") + e.what();
        }
        write_text(traj_dir / trajectory_file_name(record.id), trajectory_to_jsonl(traj));
      } catch (const std::exception& e) {
        out.complete = false;
        out.error = e.what();
      }
    });
  } catch (const std::exception& e) {
    summary.fatal.push_back(e.what());
  }
  try {
    write_summary(config.output_dir, summary);
  } catch (const std::exception& e) {
    summary.fatal.push_back(e.what());
  }
  return summary;
}

EvaluateResult run_evaluate(const RunConfig& config, const fs::path& trajectory_dir, std::size_t jobs,
                            const Backends* backends) {
  EvaluateResult result;
  RunSummary& summary = result.summary;
  summary.command = "evaluate";
  try {
    config.validate();
    const auto taxonomy = load_taxonomy(config);
    const auto loaded = load_records(config, taxonomy, summary);
    const Backends built = backends ? *backends : make_backends(config, taxonomy, loaded.records);

    struct CaseResult {
      bool present = false;
      std::vector<std::optional<double>> scores;
      std::vector<std::optional<bool>> criteria;
      std::vector<nlohmann::json> reward_lines;
      std::size_t judge_failures = 0;
      std::optional<std::string> error;
    };
    std::vector<CaseResult> cases(loaded.records.size());

    parallel_for(loaded.records.size(), jobs, [&](std::size_t i) {
      const auto& record = loaded.records[i];
      auto& c = cases[i];
      const auto text = read_text(trajectory_dir / trajectory_file_name(record.id));
      if (!text) return;
      c.present = true;
      try {
        const auto lines = parse_trajectory_jsonl(*text);
        const auto units = decompose(record);
        BackendCriteriaJudge criteria_judge(built.judge);
        BackendAlignmentJudge alignment_judge(built.judge);
        const auto relevance = lexical_relevance(taxonomy);
        ProfileView view;
        for (const auto& line : lines) {
          if (line.t < 1 || line.t > units.size()) throw ParseError("trajectory turn " + std::to_string(line.t) +
                                                                    " is outside the record's turns");
          view.fold(line.delta);
          const auto& unit = units[line.t - 1];

          std::optional<double> score;
          try {
            std::vector<AttributeAssertion> relevant;
            for (const auto& s : lookup_relevant(view, unit.user, relevance, 0.0)) relevant.push_back(s.assertion);
            const auto response = assemble_response(unit.user, std::nullopt, relevant, *built.generator);
            score = alignment_judge.score(record.gt_profile, unit.user, response.text, line.t);
          } catch (const std::exception&) {
            ++c.judge_failures;
          }
          c.scores.push_back(score);

          std::optional<bool> crit;
          nlohmann::json reward_line = {{"session_id", record.id}, {"t", line.t}};
          try {
            const auto verdict = criteria_judge.judge(
                JudgeInput{line.delta, unit.gt_delta.value_or(InferredDelta{}), unit.prior_gt_view});
            const auto reward = turn_reward(verdict, line.report, config.reward.lambda_fmt);
            crit = reward.criteria_reward == 1.0;
            reward_line["reward"] = to_json(reward);
          } catch (const std::exception& e) {
            ++c.judge_failures;
            reward_line["error"] = e.what();
          }
          if (score) reward_line["alignment_score"] = *score;
          c.criteria.push_back(crit);
          c.reward_lines.push_back(std::move(reward_line));
        }
      } catch (const std::exception& e) {
        c.error = e.what();
      }
    });

    ScoreMatrix matrix;
    std::vector<bool> verdicts;
    std::string rewards_jsonl;
    std::size_t judge_failures = 0;
    std::size_t missing = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const auto& c = cases[i];
      RecordOutcome out;
      out.id = loaded.records[i].id;
      if (!c.present) {
        ++missing;
        out.complete = false;
        out.error = "no trajectory file";
        summary.records.push_back(std::move(out));
        continue;
      }
      out.turns = c.scores.size();
      out.error = c.error;
      out.complete = !c.error;
      summary.records.push_back(std::move(out));
      if (c.error) continue;
      judge_failures += c.judge_failures;
      matrix.push_back(c.scores);
      for (const auto& v : c.criteria) {
        if (v) verdicts.push_back(*v);
      }
      for (const auto& line : c.reward_lines) rewards_jsonl += line.dump() + "\n";
    }

    summary.extra = {{"judge_failures", judge_failures}, {"missing_trajectories", missing}, {"cases", matrix.size()}};
    if (matrix.empty()) throw Error("empty input: no trajectories found in " + trajectory_dir.string());

    const auto series = alignment_level(matrix);
    const std::optional<double> acc = verdicts.empty() ? std::nullopt : std::optional<double>(accuracy(verdicts));
    if (series.values.size() < 2) {
      throw Error("evaluation needs at least 2 turns to fit an improvement rate, trajectories have " +
                  std::to_string(series.values.size()));
    }
    result.report = compute_metrics(series, acc);

    auto metrics = to_json(*result.report);
    metrics["judge_failures"] = judge_failures;
    metrics["cases"] = matrix.size();
    write_text(config.output_dir / "metrics.json", metrics.dump(2) + "\n");
    write_text(config.output_dir / "metrics.csv", metrics_csv(*result.report, "run"));
    write_text(config.output_dir / "plot.csv", plot_data_csv(series));
    write_text(config.output_dir / "rewards.jsonl", rewards_jsonl);
  } catch (const std::exception& e) {
    summary.fatal.push_back(e.what());
  }
  try {
    write_summary(config.output_dir, summary);
  } catch (const std::exception& e) {
    summary.fatal.push_back(e.what());
  }
  return result;
}

RunSummary run_build_unseen(const RunConfig& config, const fs::path& output, const Backends* backends) {
  RunSummary summary;
  summary.command = "build-unseen";
  try {
    config.validate();
    const auto taxonomy = load_taxonomy(config);
    const auto loaded = load_records(config, taxonomy, summary);
    const Backends built = backends ? *backends : make_backends(config, taxonomy, loaded.records);
    const auto selector = backend_selector(built.judge);
    const auto generator = backend_question_generator(built.generator);

    std::vector<SessionRecord> unseen;
    std::size_t skipped = 0;
    for (const auto& record : loaded.records) {
      RecordOutcome out;
      out.id = record.id;
      out.turns = record.turns.size();
      try {
        unseen.push_back(build_unseen(record, selector, generator).session);
      } catch (const NoCandidateError& e) {
        ++skipped;
        out.complete = false;
        out.error = e.what();
      } catch (const std::exception& e) {
        out.complete = false;
        out.error = e.what();
      }
      summary.records.push_back(std::move(out));
    }
    write_corpus(output, unseen);
    summary.extra = {{"built", unseen.size()}, {"skipped_no_candidate", skipped}, {"output", output.generic_string()}};
  } catch (const std::exception& e) {
    summary.fatal.push_back(e.what());
  }
  try {
    write_summary(config.output_dir, summary);
  } catch (const std::exception& e) {
    summary.fatal.push_back(e.what());
  }
  return summary;
}

RunSummary run_distract(const RunConfig& config, const fs::path& output) {
  RunSummary summary;
  summary.command = "distract";
  try {
    config.validate();
    const auto taxonomy = load_taxonomy(config);
    const auto loaded = load_records(config, taxonomy, summary);
    const auto pool = config.distractor.pool ? DistractorPool::load(*config.distractor.pool) : DistractorPool::synthetic();
    const auto tokenizer = whitespace_tokenizer();

    std::vector<SessionRecord> out_records;
    std::size_t total_tokens = 0;
    for (const auto& record : loaded.records) {
      const auto start = pool.turns.empty()
                             ? std::size_t{0}
                             : static_cast<std::size_t>(stable_unit(config.seed, {record.id}) *
                                                        static_cast<double>(pool.turns.size()));
      auto inserted = insert_distractors(record, pool, config.distractor.budget, config.distractor.position,
                                         tokenizer, start);
      total_tokens += inserted.inserted_tokens;
      RecordOutcome out;
      out.id = record.id;
      out.turns = inserted.record.turns.size();
      summary.records.push_back(std::move(out));
      out_records.push_back(std::move(inserted.record));
    }
    write_corpus(output, out_records);
    summary.extra = {{"budget", config.distractor.budget},
                     {"inserted_tokens", total_tokens},
                     {"output", output.generic_string()}};
  } catch (const std::exception& e) {
    summary.fatal.push_back(e.what());
  }
  try {
    write_summary(config.output_dir, summary);
  } catch (const std::exception& e) {
    summary.fatal.push_back(e.what());
  }
  return summary;
}

}  // namespace persona
