#include "persona/reward.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "persona/error.hpp"
#include "persona/text.hpp"

namespace persona {

CriteriaVerdict RuleBasedJudge::judge(const JudgeInput& input) {
  const auto pred = input.pred.keys();
  const auto gt = input.gt.keys();
  const auto prior = input.prior.keys();

  CriteriaVerdict v;
  v.completeness = std::includes(pred.begin(), pred.end(), gt.begin(), gt.end());
  v.no_hallucination = std::all_of(pred.begin(), pred.end(), [&](const AssertionKey& k) {
    return gt.count(k) != 0 || prior.count(k) != 0;
  });
  v.informativeness = !pred.empty() || gt.empty();
  v.consistency = std::none_of(input.pred.assertions().begin(), input.pred.assertions().end(),
                               [&](const AttributeAssertion& a) {
                                 const auto* held = input.prior.find(a.normalized_path());
                                 if (held == nullptr || held->key() == a.key()) return false;
                                 return gt.count(a.key()) == 0;
                               });
  return v;
}

CriteriaVerdict judge_turn(const InferredDelta& pred, const InferredDelta& gt, const ProfileView& prior,
                           CriteriaJudge& judge, std::string_view turn_id) {
  try {
    return judge.judge(JudgeInput{pred, gt, prior});
  } catch (const std::exception& e) {
    if (turn_id.empty()) throw;
    throw Error("judge failed on turn " + std::string(turn_id) + ": " + e.what());
  }
}

TurnReward turn_reward(const CriteriaVerdict& verdict, const FormatReport& format, double lambda_fmt) {
  if (!(lambda_fmt >= 0.0)) throw InvalidArgument("lambda_fmt must be >= 0");
  TurnReward r;
  r.verdict = verdict;
  r.criteria_reward = verdict.all() ? 1.0 : 0.0;
  r.format_score = format.format_score();
  r.total = r.criteria_reward + lambda_fmt * r.format_score;
  return r;
}

FinalReward final_reward(std::span<const double> turn_totals, std::span<const double> weights) {
  if (turn_totals.size() != weights.size()) {
    throw InvalidArgument("final_reward: " + std::to_string(turn_totals.size()) + " turn totals but " +
                          std::to_string(weights.size()) + " weights");
  }
  FinalReward f;
  f.turn_totals.assign(turn_totals.begin(), turn_totals.end());
  f.weights.assign(weights.begin(), weights.end());
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (!(weights[j] >= 0.0)) throw InvalidArgument("final_reward: weights must be >= 0");
    f.value += weights[j] * turn_totals[j];
  }
  return f;
}

FinalReward final_reward(std::span<const double> turn_totals) {
  const std::vector<double> ones(turn_totals.size(), 1.0);
  return final_reward(turn_totals, ones);
}

namespace {

template <typename Set>
double set_f1(const Set& pred, const Set& gt) {
  if (pred.empty() && gt.empty()) return 1.0;
  if (pred.empty() || gt.empty()) return 0.0;
  std::size_t shared = 0;
  for (const auto& k : pred) shared += gt.count(k);
  if (shared == 0) return 0.0;
  const double precision = static_cast<double>(shared) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(shared) / static_cast<double>(gt.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

double f1_reward(const std::set<AssertionKey>& pred, const std::set<AssertionKey>& gt) { return set_f1(pred, gt); }

double f1_reward(const std::set<std::string>& pred, const std::set<std::string>& gt) { return set_f1(pred, gt); }

double bleu_reward(std::string_view pred, std::string_view gt) {
  const auto cand = whitespace_tokens(pred);
  const auto ref = whitespace_tokens(gt);
  if (cand.empty()) return ref.empty() ? 1.0 : 0.0;

  constexpr std::size_t kMaxOrder = 4;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    const auto c = ngram_counts(cand, n);
    const auto r = ngram_counts(ref, n);
    std::size_t clipped = 0;
    for (const auto& [gram, count] : c) {
      const auto it = r.find(gram);
      if (it != r.end()) clipped += std::min(count, it->second);
    }
    const std::size_t total = cand.size() >= n ? cand.size() - n + 1 : 0;
    const double precision = clipped == 0 ? 1.0 / static_cast<double>(total + 1)
                                          : static_cast<double>(clipped) / static_cast<double>(total);
    log_sum += std::log(precision);
  }
  const double geo = std::exp(log_sum / static_cast<double>(kMaxOrder));
  const double bp = cand.size() < ref.size()
                        ? std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size()))
                        : 1.0;
  return bp * geo;
}

GroupAdvantage group_advantages(std::span<const double> rewards, double eps_std) {
  if (rewards.empty()) throw InvalidArgument("group_advantages: group must have at least one reward");
  GroupAdvantage g;
  g.rewards.assign(rewards.begin(), rewards.end());
  const double n = static_cast<double>(rewards.size());
  g.mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - g.mean) * (r - g.mean);
  g.std = std::sqrt(ss / n);
  g.advantages.resize(rewards.size(), 0.0);
  if (g.std > eps_std) {
    for (std::size_t i = 0; i < rewards.size(); ++i) g.advantages[i] = (rewards[i] - g.mean) / g.std;
  }
  return g;
}

double grpo_objective(std::span<const GrpoSample> samples, double epsilon, double beta) {
  if (samples.empty()) throw InvalidArgument("grpo_objective: no samples");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("grpo_objective: epsilon must be in (0, 1)");
  if (!(beta >= 0.0)) throw InvalidArgument("grpo_objective: beta must be >= 0");
  double surrogate = 0.0;
  double kl = 0.0;
  for (const auto& s : samples) {
    if (!(s.ratio > 0.0) || !std::isfinite(s.ratio)) {
      throw InvalidArgument("grpo_objective: probability ratio must be positive and finite");
    }
    const double clipped = std::clamp(s.ratio, 1.0 - epsilon, 1.0 + epsilon);
    surrogate += std::min(s.ratio * s.advantage, clipped * s.advantage);
    kl += s.kl;
  }
  const double g = static_cast<double>(samples.size());
  return surrogate / g - beta * (kl / g);
}

double kl_estimate(double logp_theta, double logp_ref) {
  if (!std::isfinite(logp_theta) || !std::isfinite(logp_ref)) {
    throw InvalidArgument("kl_estimate: log-probabilities must be finite");
  }
  const double d = logp_ref - logp_theta;  // ln r
  return std::max(0.0, std::expm1(d) - d);
}

std::vector<double> RewardConfig::weights_for(std::size_t turns) const {
  if (weights_mode == WeightsMode::kEqual) return std::vector<double>(turns, 1.0);
  if (custom_weights.size() < turns) {
    throw InvalidArgument("custom reward weights cover " + std::to_string(custom_weights.size()) +
                          " turns, trajectory has " + std::to_string(turns));
  }
  return {custom_weights.begin(), custom_weights.begin() + static_cast<std::ptrdiff_t>(turns)};
}

void RewardConfig::validate() const {
  if (!(lambda_fmt >= 0.0)) throw InvalidArgument("reward config: lambda_fmt must be >= 0");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("reward config: epsilon must be in (0, 1)");
  if (!(beta >= 0.0)) throw InvalidArgument("reward config: beta must be >= 0");
  if (!(eps_std >= 0.0)) throw InvalidArgument("reward config: eps_std must be >= 0");
  if (weights_mode == WeightsMode::kCustom) {
    if (custom_weights.empty()) throw InvalidArgument("reward config: custom weights mode needs 'weights'");
    for (double w : custom_weights) {
      if (!(w >= 0.0)) throw InvalidArgument("reward config: weights must be >= 0");
    }
  }
}

RewardConfig reward_config_from_json(const nlohmann::json& j) {
  RewardConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ParseError("reward config must be an object");
  c.lambda_fmt = j.value("lambda_fmt", c.lambda_fmt);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.beta = j.value("beta", c.beta);
  c.eps_std = j.value("eps_std", c.eps_std);
  const auto mode = j.value("weights_mode", std::string("equal"));
  if (mode == "equal") {
    c.weights_mode = WeightsMode::kEqual;
  } else if (mode == "custom") {
    c.weights_mode = WeightsMode::kCustom;
    c.custom_weights = j.value("weights", std::vector<double>{});
  } else {
    throw ParseError("reward config: weights_mode must be 'equal' or 'custom', got '" + mode + "'");
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const RewardConfig& c) {
  nlohmann::json j = {{"lambda_fmt", c.lambda_fmt},
                      {"weights_mode", c.weights_mode == WeightsMode::kEqual ? "equal" : "custom"},
                      {"epsilon", c.epsilon},
                      {"beta", c.beta},
                      {"eps_std", c.eps_std}};
  if (c.weights_mode == WeightsMode::kCustom) j["weights"] = c.custom_weights;
  return j;
}

nlohmann::json to_json(const CriteriaVerdict& v) {
  return {{"completeness", v.completeness},
          {"no_hallucination", v.no_hallucination},
          {"informativeness", v.informativeness},
          {"consistency", v.consistency}};
}

nlohmann::json to_json(const TurnReward& r) {
  return {{"verdict", to_json(r.verdict)},
          {"criteria_reward", r.criteria_reward},
          {"format_score", r.format_score},
          {"total", r.total}};
}

CriteriaVerdict verdict_from_json(const nlohmann::json& j) {
  return {j.at("completeness").get<bool>(), j.at("no_hallucination").get<bool>(),
          j.at("informativeness").get<bool>(), j.at("consistency").get<bool>()};
}

TurnReward turn_reward_from_json(const nlohmann::json& j) {
  TurnReward r;
  r.verdict = verdict_from_json(j.at("verdict"));
  r.criteria_reward = j.at("criteria_reward").get<double>();
  r.format_score = j.at("format_score").get<double>();
  r.total = j.at("total").get<double>();
  return r;
}

}  // namespace persona
