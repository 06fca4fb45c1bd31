#pragma once

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/profile.hpp"
#include "persona/tagged_output.hpp"

namespace persona {

struct CriteriaVerdict {
  bool completeness = false;
  bool no_hallucination = false;
  bool informativeness = false;
  bool consistency = false;

  bool all() const noexcept { return completeness && no_hallucination && informativeness && consistency; }
  bool operator==(const CriteriaVerdict&) const = default;
};

/// What a criteria judge sees for one turn: the prediction, the per-turn
/// ground truth, and the ground-truth view accumulated over earlier turns.
struct JudgeInput {
  const InferredDelta& pred;
  const InferredDelta& gt;
  const ProfileView& prior;
};

class CriteriaJudge {
 public:
  virtual ~CriteriaJudge() = default;
  virtual CriteriaVerdict judge(const JudgeInput& input) = 0;
};

/// Deterministic set-based judge:
///  - completeness: every gt key is in pred
///  - no_hallucination: every pred key is in gt or the prior view
///  - informativeness: pred is nonempty, or gt is empty
///  - consistency: pred never sets a path the prior view holds to a different
///    value, unless gt carries that same update
class RuleBasedJudge final : public CriteriaJudge {
 public:
  CriteriaVerdict judge(const JudgeInput& input) override;
};

/// Runs `judge`, rethrowing any failure as an Error prefixed with `turn_id`.
CriteriaVerdict judge_turn(const InferredDelta& pred, const InferredDelta& gt, const ProfileView& prior,
                           CriteriaJudge& judge, std::string_view turn_id = {});

inline constexpr double kDefaultFormatWeight = 0.2;

struct TurnReward {
  CriteriaVerdict verdict;
  double criteria_reward = 0.0;  // 1 iff every criterion holds
  double format_score = 0.0;     // well-formed blocks / 3
  double total = 0.0;            // criteria_reward + lambda_fmt * format_score

  bool operator==(const TurnReward&) const = default;
};

TurnReward turn_reward(const CriteriaVerdict& verdict, const FormatReport& format,
                       double lambda_fmt = kDefaultFormatWeight);

struct FinalReward {
  std::vector<double> turn_totals;
  std::vector<double> weights;
  double value = 0.0;
};

/// Weighted sum of per-turn totals. Throws InvalidArgument on length mismatch
/// or a negative weight.
FinalReward final_reward(std::span<const double> turn_totals, std::span<const double> weights);
FinalReward final_reward(std::span<const double> turn_totals);  // all weights 1

/// Set F1. Both empty scores 1; exactly one empty scores 0.
double f1_reward(const std::set<AssertionKey>& pred, const std::set<AssertionKey>& gt);
double f1_reward(const std::set<std::string>& pred, const std::set<std::string>& gt);

/// Sentence BLEU over whitespace tokens, orders 1-4, uniform weights.
/// Orders with zero clipped matches use (0 + 1) / (candidates + 1); orders with
/// matches use the plain modified precision. Brevity penalty
/// exp(1 - |ref| / |cand|) when the candidate is shorter. An empty candidate
/// scores 0 unless the reference is empty too (then 1).
double bleu_reward(std::string_view pred, std::string_view gt);

inline constexpr double kDefaultStdEpsilon = 1e-8;

struct GroupAdvantage {
  std::vector<double> rewards;
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<double> advantages;
};

/// (r - mean) / popstd. Groups with popstd <= eps_std get all-zero advantages.
GroupAdvantage group_advantages(std::span<const double> rewards, double eps_std = kDefaultStdEpsilon);

struct GrpoSample {
  double ratio = 1.0;  // pi_theta(o|q) / pi_theta_old(o|q), sequence level
  double advantage = 0.0;
  double kl = 0.0;
};

inline constexpr double kDefaultClipEpsilon = 0.2;
inline constexpr double kDefaultKlBeta = 0.01;

/// Clipped surrogate averaged over the group minus beta times the mean KL.
double grpo_objective(std::span<const GrpoSample> samples, double epsilon = kDefaultClipEpsilon,
                      double beta = kDefaultKlBeta);

/// Nonnegative KL(pi_theta || pi_ref) estimate r - ln r - 1 with
/// r = exp(logp_ref - logp_theta).
double kl_estimate(double logp_theta, double logp_ref);

enum class WeightsMode { kEqual, kCustom };

struct RewardConfig {
  double lambda_fmt = kDefaultFormatWeight;
  WeightsMode weights_mode = WeightsMode::kEqual;
  std::vector<double> custom_weights;
  double epsilon = kDefaultClipEpsilon;
  double beta = kDefaultKlBeta;
  double eps_std = kDefaultStdEpsilon;

  /// Weight vector for a trajectory of `turns` turns. Custom weights shorter
  /// than `turns` are an error; longer ones are truncated.
  std::vector<double> weights_for(std::size_t turns) const;

  void validate() const;
};

RewardConfig reward_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RewardConfig& c);
nlohmann::json to_json(const CriteriaVerdict& v);
nlohmann::json to_json(const TurnReward& r);
CriteriaVerdict verdict_from_json(const nlohmann::json& j);
TurnReward turn_reward_from_json(const nlohmann::json& j);

}  // namespace persona
