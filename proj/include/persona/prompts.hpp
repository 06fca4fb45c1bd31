#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "persona/backend.hpp"
#include "persona/dialogue.hpp"
#include "persona/metrics.hpp"
#include "persona/profile.hpp"
#include "persona/reward.hpp"

namespace persona {

/// Version tag stamped into every prompt (attribute "prompt_version"). Bump it
/// whenever a template below changes; docs/prompts.md carries the text.
inline constexpr std::string_view kPromptVersion = "persona-prompts/1";

// Attribute "task" on each request names the template that produced it:
inline constexpr std::string_view kTaskPolicy = "policy";
inline constexpr std::string_view kTaskCriteria = "criteria";
inline constexpr std::string_view kTaskAlignment = "alignment";
inline constexpr std::string_view kTaskRubric = "rubric";
inline constexpr std::string_view kTaskRespond = "respond";
inline constexpr std::string_view kTaskQuery = "query";
inline constexpr std::string_view kTaskSelect = "select";
inline constexpr std::string_view kTaskQuestion = "question";

/// `path: value` lines sorted by path, or "(none)".
std::string render_assertions(const std::vector<AttributeAssertion>& assertions);
std::string render_view(const ProfileView& view);

/// Policy turn prompt for state (u_t, p_{1:t-1}) over the base profile. The
/// known profile shown is the fold of `accumulated` over `base`.
CompletionRequest build_policy_prompt(std::string_view user_msg, const std::vector<InferredDelta>& accumulated,
                                      const ProfileView& base);

/// Asks for four labeled yes/no lines (Completeness, No Hallucination,
/// Informativeness, Consistency).
CompletionRequest build_criteria_prompt(const InferredDelta& pred, const InferredDelta& gt, const ProfileView& prior);

/// Asks for "Score: N" with N an integer in 0..100.
CompletionRequest build_alignment_prompt(const ProfileView& persona, std::string_view user_msg,
                                         std::string_view response);

/// Seven-dimension rubric comparing an inferred profile to the ground truth.
CompletionRequest build_rubric_prompt(const ProfileView& ground_truth, const ProfileView& inferred);

/// Response generation r = f(q, p*, relevant).
CompletionRequest build_generation_prompt(std::string_view question, const std::optional<std::string>& elicited,
                                          const std::vector<AttributeAssertion>& relevant);

/// Proactive query about `topic` (a category display name) before answering.
CompletionRequest build_query_prompt(std::string_view question, std::string_view topic);

/// Asks the judge to pick one cold-start candidate, replying "Choice: N"
/// (1-based).
CompletionRequest build_selector_prompt(const SessionRecord& record, const std::vector<AttributeAssertion>& candidates);

/// Asks for "Question: ..." and "Explanation: ..." lines.
CompletionRequest build_question_prompt(const SessionRecord& record, const AttributeAssertion& chosen);

/// Strict: each of the four labels must appear exactly once with yes/no (or
/// true/false). Repeated labels with the same value are tolerated; conflicting
/// repeats are an ambiguity error. Errors name the label.
CriteriaVerdict parse_verdict(std::string_view text);

/// Accepts "Score: 87" or a bare "87". Values outside 0..100 are an error,
/// never clamped.
int parse_score(std::string_view text);

/// "Choice: N" -> zero-based index, checked against `count`.
std::size_t parse_choice(std::string_view text, std::size_t count);

GeneratedQuestion parse_generated_question(std::string_view text);

class BackendCriteriaJudge final : public CriteriaJudge {
 public:
  explicit BackendCriteriaJudge(BackendPtr backend) : backend_(std::move(backend)) {}
  CriteriaVerdict judge(const JudgeInput& input) override;

 private:
  BackendPtr backend_;
};

class AlignmentJudge {
 public:
  virtual ~AlignmentJudge() = default;
  /// Score in 0..100. `turn` is 1-based and informational.
  virtual double score(const ProfileView& persona, std::string_view user_msg, std::string_view response,
                       std::size_t turn) = 0;
};

class BackendAlignmentJudge final : public AlignmentJudge {
 public:
  explicit BackendAlignmentJudge(BackendPtr backend) : backend_(std::move(backend)) {}
  double score(const ProfileView& persona, std::string_view user_msg, std::string_view response,
               std::size_t turn) override;

 private:
  BackendPtr backend_;
};

RubricScore judge_rubric(CompletionBackend& backend, const ProfileView& ground_truth, const ProfileView& inferred);

/// build_unseen hooks that delegate to a judge (selector) and a generator.
ColdStartSelector backend_selector(BackendPtr judge);
QuestionGenerator backend_question_generator(BackendPtr generator);

}  // namespace persona
