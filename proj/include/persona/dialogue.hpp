#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/error.hpp"
#include "persona/profile.hpp"
#include "persona/taxonomy.hpp"

namespace persona {

enum class CorpusFormat { kAloe, kPrefEval, kUnseen };

std::string_view format_name(CorpusFormat format);  // "aloe", "prefeval", "unseen"
CorpusFormat format_from_name(std::string_view name);

struct DialogueTurn {
  std::string user;
  std::string agent;
  std::optional<std::string> preferred;
  std::optional<std::string> rejected;
  std::optional<std::string> chosen;  // "preferred" or "rejected"
  std::optional<InferredDelta> gt_delta;
  bool distractor = false;

  bool operator==(const DialogueTurn&) const = default;
};

/// One session c_i. For ALOE-style records `gt_profile` holds the persona
/// profile and its `traits` hold the persona's personality.
struct SessionRecord {
  CorpusFormat format = CorpusFormat::kAloe;
  std::string id;
  std::string theme;
  std::vector<DialogueTurn> turns;
  ProfileView gt_profile;
  std::optional<std::string> final_question;
  std::optional<std::string> explanation;
  std::optional<AttributeAssertion> cold_start_preference;  // unseen.v1 only

  /// Fold of the per-turn ground-truth deltas: what the dialogue reveals.
  ProfileView inferable_view() const;

  bool operator==(const SessionRecord&) const = default;
};

/// A session whose final question needs a preference the dialogue never
/// reveals.
struct UnseenRecord {
  SessionRecord session;  // format kUnseen, question/explanation filled in
  AttributeAssertion cold_start_preference;
  std::string question;
  std::string explanation;
};

struct LoadOptions {
  std::size_t max_turns = 200;
  bool strict = false;  // first schema error throws instead of being collected
};

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<SessionRecord> records;
  std::vector<LineError> errors;
  std::size_t lines_read = 0;
};

/// Reads JSONL (one record per line, blank lines skipped). Lines that fail
/// the schema are reported and skipped unless `options.strict`.
LoadResult load_corpus(const std::filesystem::path& path, CorpusFormat format, const ProfileTaxonomy& taxonomy,
                       const LoadOptions& options = {});
LoadResult parse_corpus(std::string_view jsonl, CorpusFormat format, const ProfileTaxonomy& taxonomy,
                        const LoadOptions& options = {});

/// Parses one JSON record; throws ParseError describing the schema violation.
SessionRecord record_from_json(const nlohmann::json& j, CorpusFormat format, const ProfileTaxonomy& taxonomy,
                               const LoadOptions& options = {});
nlohmann::json record_to_json(const SessionRecord& record);
std::string serialize_corpus(const std::vector<SessionRecord>& records);
void write_corpus(const std::filesystem::path& path, const std::vector<SessionRecord>& records);

struct TurnUnit {
  std::size_t index = 0;  // 1-based turn number
  std::string user;
  std::optional<InferredDelta> gt_delta;
  ProfileView prior_gt_view;  // fold of gt deltas for turns 1..index-1
};

std::vector<TurnUnit> decompose(const SessionRecord& record);

/// Rebuilds (user, gt_delta) turns from units. Agent text is not part of a
/// unit and comes back empty.
std::vector<DialogueTurn> recompose(const std::vector<TurnUnit>& units);

using Tokenizer = std::function<std::size_t(std::string_view)>;
Tokenizer whitespace_tokenizer();

struct DistractorPool {
  std::vector<DialogueTurn> turns;  // every turn has distractor = true

  static DistractorPool from_turns(std::vector<DialogueTurn> turns);
  /// JSONL lines of {"user": ..., "agent": ...}.
  static DistractorPool load(const std::filesystem::path& path);
  static DistractorPool parse(std::string_view jsonl);
  /// Small built-in pool of preference-free small talk.
  static DistractorPool synthetic();

  std::size_t turn_tokens(std::size_t index, const Tokenizer& tokenizer) const;
  std::size_t max_turn_tokens(const Tokenizer& tokenizer) const;
};

enum class DistractorPosition { kAfterPreference, kInterleave };

DistractorPosition position_from_name(std::string_view name);  // "after_pref", "interleave"

struct DistractorInsertion {
  SessionRecord record;
  std::size_t inserted_turns = 0;
  std::size_t inserted_tokens = 0;
};

/// Draws pool turns cyclically from `start` until at least `token_budget`
/// tokens are inserted (zero-token pool turns are skipped), then places them:
/// after the last turn carrying a nonempty gt delta (or at the end when none
/// does), or spread evenly between original turns for kInterleave. Original
/// turns keep their relative order.
DistractorInsertion insert_distractors(const SessionRecord& record, const DistractorPool& pool,
                                       std::size_t token_budget,
                                       DistractorPosition position = DistractorPosition::kAfterPreference,
                                       const Tokenizer& tokenizer = whitespace_tokenizer(), std::size_t start = 0);

class NoCandidateError : public Error {
 public:
  explicit NoCandidateError(const std::string& record_id)
      : Error("record '" + record_id + "' has no cold-start candidate: every ground-truth preference is inferable") {}
};

using ColdStartSelector =
    std::function<AttributeAssertion(const SessionRecord&, const std::vector<AttributeAssertion>& candidates)>;

struct GeneratedQuestion {
  std::string question;
  std::string explanation;
};

using QuestionGenerator = std::function<GeneratedQuestion(const SessionRecord&, const AttributeAssertion& chosen)>;

/// Picks the candidate with the smallest (path, value) key.
ColdStartSelector lexical_first_selector();

/// Template question about the record theme and an explanation naming the
/// chosen preference's category and value.
QuestionGenerator template_question_generator(const ProfileTaxonomy& taxonomy);

/// Candidates are profile_diff(gt_profile, inferable_view()). Throws
/// NoCandidateError when that is empty; selector/generator failures are
/// rethrown as Error naming the record id.
UnseenRecord build_unseen(const SessionRecord& record, const ColdStartSelector& selector,
                          const QuestionGenerator& question_gen);

/// Deterministic Fisher-Yates shuffle under `seed`, then the first
/// round(ratio * N) records go to train.
std::pair<std::vector<SessionRecord>, std::vector<SessionRecord>> split_corpus(std::vector<SessionRecord> records,
                                                                               double ratio, std::uint64_t seed);

}  // namespace persona
