#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/backend.hpp"
#include "persona/dialogue.hpp"
#include "persona/profile.hpp"
#include "persona/reward.hpp"
#include "persona/tagged_output.hpp"
#include "persona/taxonomy.hpp"

namespace persona {

inline constexpr std::size_t kDefaultMaxTurns = 10;

struct EngineConfig {
  std::size_t t_max = kDefaultMaxTurns;
  double tau = kDefaultRelevanceThreshold;

  void validate() const;
};

/// s_t = (u_t, p_{1:t-1}) over the pre-session profile.
struct InferenceState {
  std::size_t t = 1;
  std::string user_msg;
  std::vector<InferredDelta> accumulated;  // length t - 1
  ProfileView base;                        // P_old
  ProfileView view;                        // fold of accumulated over base

  /// View recomputed from base and accumulated; equals `view` for any state
  /// built by init_state/step.
  ProfileView replay() const;
  bool operator==(const InferenceState&) const = default;
};

InferenceState init_state(const ProfileView& profile_old, std::string_view first_msg);

/// Deterministic transition: (s_t, p_t, u_{t+1}) -> s_{t+1}.
InferenceState transition(const InferenceState& state, const InferredDelta& action, std::string_view next_msg);

struct StepOutcome {
  InferredDelta delta;
  std::string raw_output;
  FormatReport report;
  std::vector<std::string> dropped;  // assertion paths / classification ids not in the taxonomy
  std::optional<InferenceState> next;
};

/// Queries the policy with build_policy_prompt(u_t, p_{1:t-1}, base), parses
/// the reply, and drops assertions whose path does not resolve in `taxonomy`
/// (listing them in `dropped`). Backend errors propagate; the input state is
/// never modified.
StepOutcome step(const InferenceState& state, CompletionBackend& policy, const ProfileTaxonomy& taxonomy,
                 const std::optional<std::string>& next_msg = std::nullopt);

struct TrajectoryEntry {
  InferenceState state;
  InferredDelta delta;
  std::string raw_output;
  FormatReport report;
  std::vector<std::string> dropped;
  std::optional<TurnReward> reward;

  std::size_t t() const { return state.t; }
  bool parse_error() const { return report.parse_error(); }
};

struct Trajectory {
  std::string session_id;
  std::uint32_t session_index = 1;
  std::vector<TrajectoryEntry> entries;
  UserProfile terminal;  // P_new: P_old plus every applied delta, with a snapshot for this session
  bool complete = true;
  std::optional<std::string> error;
};

/// Steps through min(T_i, t_max) turns. The policy sees only u_t and the
/// accumulated deltas. On a backend failure the partial trajectory is
/// returned with complete = false and the error message; the terminal
/// profile then holds the deltas of the finished turns.
///
/// `session_index` 0 picks one past the highest session in `profile_old`.
Trajectory run_session(const SessionRecord& record, CompletionBackend& policy, const ProfileTaxonomy& taxonomy,
                       std::size_t t_max = kDefaultMaxTurns, const UserProfile& profile_old = {},
                       std::uint32_t session_index = 0);

/// One JSON object per entry:
/// {t, session_id, user, raw_output, delta, format_report, parse_error, dropped, reward?}.
nlohmann::json entry_to_json(const TrajectoryEntry& entry, std::string_view session_id);
std::string trajectory_to_jsonl(const Trajectory& trajectory);

/// What evaluate needs back from an exported entry.
struct TrajectoryLine {
  std::size_t t = 0;
  std::string session_id;
  std::string user;
  std::string raw_output;
  InferredDelta delta;
  FormatReport report;
  std::optional<TurnReward> reward;
};

TrajectoryLine trajectory_line_from_json(const nlohmann::json& j);
std::vector<TrajectoryLine> parse_trajectory_jsonl(std::string_view jsonl);

/// Scores each entry with `judge` against the record's per-turn ground truth
/// and its accumulated ground-truth view, filling entry.reward.
void attach_rewards(Trajectory& trajectory, const SessionRecord& record, CriteriaJudge& judge,
                    double lambda_fmt = kDefaultFormatWeight);

// ---------------------------------------------------------------------------
// Cold start

enum class DecisionKind { kAnswer, kQuery };

struct ColdStartDecision {
  DecisionKind kind = DecisionKind::kQuery;
  std::vector<ScoredAssertion> relevant;    // Answer: ranked assertions used
  std::optional<CategoryPath> topic_path;   // Query: category the question demands, if identified
  std::string topic;                        // Query: human-readable topic
};

/// Maps a question to the preference category it needs, or nullopt.
using TopicExtractor = std::function<std::optional<CategoryPath>(std::string_view question)>;

/// Node whose own display-name words and keywords share the most keyword
/// tokens with the question; ties go to the deeper node, then document order.
TopicExtractor taxonomy_topic_extractor(const ProfileTaxonomy& taxonomy);

/// Answer iff lookup_relevant(profile, question, relevance, tau) is nonempty.
ColdStartDecision decide_cold_start(const ProfileView& profile, std::string_view question,
                                    const RelevanceFunction& relevance, double tau, const TopicExtractor& topics,
                                    const ProfileTaxonomy* taxonomy = nullptr);

struct AssembledResponse {
  std::string text;
  bool aligned = false;  // false when neither elicited info nor relevant assertions were available
};

AssembledResponse assemble_response(std::string_view question, const std::optional<std::string>& elicited,
                                    const std::vector<AttributeAssertion>& relevant, CompletionBackend& generator);

/// Asks the generator to phrase the proactive question for a Query decision.
std::string phrase_query(std::string_view question, const ColdStartDecision& decision, CompletionBackend& generator);

// ---------------------------------------------------------------------------
// Live sessions (service and terminal chat)

struct ColdStartQuery {
  std::string text;               // proactive question shown to the user
  std::string topic;
  std::optional<std::string> path;
  std::string original_question;  // answered once the user replies
};

struct LiveTurnResult {
  std::size_t t = 0;
  std::string response;
  bool aligned = false;
  InferredDelta delta;  // exactly what was applied to the profile
  FormatReport report;
  std::vector<std::string> dropped;
  ProfileView profile_view;
  std::optional<ColdStartQuery> cold_start_query;
};

nlohmann::json to_json(const LiveTurnResult& r);

/// Interactive loop: every message is inferred into the profile, then either
/// answered from relevant assertions or met with a proactive query. The reply
/// to a pending query goes through answer(), which also feeds it to the
/// policy and then answers the original question with it as elicited input.
///
/// Not thread-safe; callers serialize access per session.
class LiveSession {
 public:
  LiveSession(std::string id, std::string user_id, const ProfileTaxonomy& taxonomy, BackendPtr policy,
              BackendPtr generator, EngineConfig config = {}, UserProfile profile = {});

  LiveTurnResult send_message(std::string_view text);
  /// Throws StateError if no query is pending.
  LiveTurnResult answer(std::string_view text);

  const std::string& id() const noexcept { return id_; }
  const std::string& user_id() const noexcept { return user_id_; }
  const UserProfile& profile() const noexcept { return profile_; }
  const std::vector<TrajectoryEntry>& trajectory() const noexcept { return entries_; }
  const std::optional<ColdStartQuery>& pending() const noexcept { return pending_; }
  std::uint32_t session_index() const noexcept { return session_index_; }

 private:
  StepOutcome infer(std::string_view text);

  std::string id_;
  std::string user_id_;
  const ProfileTaxonomy* taxonomy_;
  BackendPtr policy_;
  BackendPtr generator_;
  EngineConfig config_;
  UserProfile profile_;
  ProfileView base_;
  std::uint32_t session_index_;
  std::vector<InferredDelta> accumulated_;
  std::vector<TrajectoryEntry> entries_;
  std::optional<ColdStartQuery> pending_;
  RelevanceFunction relevance_;
  TopicExtractor topics_;
};

}  // namespace persona
