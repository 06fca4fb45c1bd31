#include "persona/engine.hpp"

#include <algorithm>
#include <set>

#include "json_util.hpp"
#include "persona/prompts.hpp"
#include "persona/text.hpp"

namespace persona {

namespace {

std::uint32_t next_session_index(const UserProfile& profile) {
  std::uint32_t highest = 0;
  if (!profile.log().empty()) highest = profile.log().back().provenance.session;
  if (!profile.snapshots().empty()) highest = std::max(highest, profile.snapshots().rbegin()->first);
  return highest + 1;
}

std::vector<AttributeAssertion> assertions_of(const std::vector<ScoredAssertion>& scored) {
  std::vector<AttributeAssertion> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.assertion);
  return out;
}

}  // namespace

void EngineConfig::validate() const {
  if (t_max < 1) throw InvalidArgument("t_max must be >= 1");
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("relevance threshold tau must be in [0, 1]");
}

ProfileView InferenceState::replay() const {
  ProfileView v = base;
  for (const auto& d : accumulated) v.fold(d);
  return v;
}

InferenceState init_state(const ProfileView& profile_old, std::string_view first_msg) {
  InferenceState s;
  s.t = 1;
  s.user_msg = std::string(first_msg);
  s.base = profile_old;
  s.view = profile_old;
  return s;
}

InferenceState transition(const InferenceState& state, const InferredDelta& action, std::string_view next_msg) {
  InferenceState next;
  next.t = state.t + 1;
  next.user_msg = std::string(next_msg);
  next.accumulated = state.accumulated;
  next.accumulated.push_back(action);
  next.base = state.base;
  next.view = state.view;
  next.view.fold(action);
  return next;
}

StepOutcome step(const InferenceState& state, CompletionBackend& policy, const ProfileTaxonomy& taxonomy,
                 const std::optional<std::string>& next_msg) {
  const auto request = build_policy_prompt(state.user_msg, state.accumulated, state.base);
  auto result = policy.complete(request);

  StepOutcome out;
  out.raw_output = std::move(result.text);
  auto parsed = parse_tagged_output(out.raw_output);
  out.report = parsed.report;
  for (const auto& a : parsed.delta.assertions()) {
    if (taxonomy.contains(a.path)) {
      out.delta.add_assertion(a);
    } else {
      out.dropped.push_back(a.normalized_path());
    }
  }
  for (const auto& trait : parsed.delta.personality_traits()) out.delta.add_trait(trait);
  for (const auto& id : parsed.delta.classification()) {
    if (taxonomy.find_id(id)) {
      out.delta.add_classification(id);
    } else {
      out.dropped.push_back("#classification/" + id);
    }
  }
  if (next_msg) out.next = transition(state, out.delta, *next_msg);
  return out;
}

Trajectory run_session(const SessionRecord& record, CompletionBackend& policy, const ProfileTaxonomy& taxonomy,
                       std::size_t t_max, const UserProfile& profile_old, std::uint32_t session_index) {
  if (record.turns.empty()) throw InvalidArgument("record '" + record.id + "' has no turns");
  if (t_max < 1) throw InvalidArgument("t_max must be >= 1");
  const std::uint32_t auto_index = next_session_index(profile_old);
  if (session_index == 0) session_index = auto_index;
  if (session_index < auto_index) {
    throw InvalidArgument("session index " + std::to_string(session_index) +
                          " is not after the profile's existing sessions");
  }

  Trajectory traj;
  traj.session_id = record.id;
  traj.session_index = session_index;
  traj.terminal = profile_old;

  const std::size_t n = std::min(record.turns.size(), t_max);
  InferenceState state = init_state(profile_old.current(), record.turns.front().user);
  for (std::size_t i = 0; i < n; ++i) {
    const std::optional<std::string> next_msg =
        i + 1 < n ? std::optional<std::string>(record.turns[i + 1].user) : std::nullopt;
    StepOutcome outcome;
    try {
      outcome = step(state, policy, taxonomy, next_msg);
    } catch (const std::exception& e) {
      traj.complete = false;
      traj.error = "turn " + std::to_string(i + 1) + ": " + e.what();
      break;
    }
    traj.terminal.apply_delta(outcome.delta, {session_index, static_cast<std::uint32_t>(i + 1)}, taxonomy);
    TrajectoryEntry entry;
    entry.state = state;
    entry.delta = std::move(outcome.delta);
    entry.raw_output = std::move(outcome.raw_output);
    entry.report = outcome.report;
    entry.dropped = std::move(outcome.dropped);
    traj.entries.push_back(std::move(entry));
    if (outcome.next) state = std::move(*outcome.next);
  }
  traj.terminal.snapshot(session_index);
  return traj;
}

nlohmann::json entry_to_json(const TrajectoryEntry& entry, std::string_view session_id) {
  nlohmann::json j = {{"t", entry.t()},
                      {"session_id", session_id},
                      {"user", entry.state.user_msg},
                      {"raw_output", entry.raw_output},
                      {"delta", to_json(entry.delta)},
                      {"format_report", to_json(entry.report)},
                      {"parse_error", entry.parse_error()},
                      {"dropped", entry.dropped}};
  if (entry.reward) j["reward"] = to_json(*entry.reward);
  return j;
}

std::string trajectory_to_jsonl(const Trajectory& trajectory) {
  std::string out;
  for (const auto& e : trajectory.entries) {
    out += entry_to_json(e, trajectory.session_id).dump();
    out += '\n';
  }
  return out;
}

TrajectoryLine trajectory_line_from_json(const nlohmann::json& j) {
  TrajectoryLine line;
  try {
    line.t = j.at("t").get<std::size_t>();
    line.session_id = j.at("session_id").get<std::string>();
    line.user = j.at("user").get<std::string>();
    line.raw_output = j.value("raw_output", std::string());
    line.delta = delta_from_json(j.at("delta"));
    line.report = format_report_from_json(j.at("format_report"));
    if (j.contains("reward") && !j["reward"].is_null()) line.reward = turn_reward_from_json(j["reward"]);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trajectory entry: ") + e.what());
  }
  return line;
}

std::vector<TrajectoryLine> parse_trajectory_jsonl(std::string_view jsonl) {
  std::vector<TrajectoryLine> lines;
  std::size_t line_no = 0;
  for (const auto& raw : split(jsonl, '\n')) {
    ++line_no;
    if (trim(raw).empty()) continue;
    try {
      lines.push_back(trajectory_line_from_json(detail::parse_json(raw, "trajectory")));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return lines;
}

void attach_rewards(Trajectory& trajectory, const SessionRecord& record, CriteriaJudge& judge, double lambda_fmt) {
  const auto units = decompose(record);
  for (auto& entry : trajectory.entries) {
    const auto& unit = units.at(entry.t() - 1);
    const InferredDelta gt = unit.gt_delta.value_or(InferredDelta{});
    const auto verdict = judge_turn(entry.delta, gt, unit.prior_gt_view, judge,
                                    trajectory.session_id + ":" + std::to_string(entry.t()));
    entry.reward = turn_reward(verdict, entry.report, lambda_fmt);
  }
}

// ---------------------------------------------------------------------------

TopicExtractor taxonomy_topic_extractor(const ProfileTaxonomy& taxonomy) {
  std::vector<std::set<std::string>> terms(taxonomy.size());
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    const auto& node = taxonomy.node(i);
    for (auto& t : keyword_tokens(node.display_name)) terms[i].insert(std::move(t));
    for (const auto& kw : node.keywords) {
      for (auto& t : keyword_tokens(kw)) terms[i].insert(std::move(t));
    }
  }
  return [&taxonomy, terms = std::move(terms)](std::string_view question) -> std::optional<CategoryPath> {
    const auto tokens = keyword_tokens(question);
    const std::set<std::string> q(tokens.begin(), tokens.end());
    std::optional<std::size_t> best;
    std::size_t best_count = 0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      std::size_t count = 0;
      for (const auto& t : q) count += terms[i].count(t);
      if (count == 0) continue;
      if (!best || count > best_count ||
          (count == best_count && taxonomy.node(i).depth > taxonomy.node(*best).depth)) {
        best = i;
        best_count = count;
      }
    }
    if (!best) return std::nullopt;
    return taxonomy.path_of(*best);
  };
}

ColdStartDecision decide_cold_start(const ProfileView& profile, std::string_view question,
                                    const RelevanceFunction& relevance, double tau, const TopicExtractor& topics,
                                    const ProfileTaxonomy* taxonomy) {
  ColdStartDecision d;
  d.relevant = lookup_relevant(profile, question, relevance, tau);
  if (!d.relevant.empty()) {
    d.kind = DecisionKind::kAnswer;
    return d;
  }
  d.kind = DecisionKind::kQuery;
  if (topics) d.topic_path = topics(question);
  if (d.topic_path) {
    std::vector<std::string> chain;
    if (taxonomy != nullptr) chain = taxonomy->display_chain(*d.topic_path);
    d.topic = chain.empty() ? path_to_string(*d.topic_path) : chain.back();
  } else {
    d.topic = "preferences";
  }
  return d;
}

AssembledResponse assemble_response(std::string_view question, const std::optional<std::string>& elicited,
                                    const std::vector<AttributeAssertion>& relevant, CompletionBackend& generator) {
  AssembledResponse r;
  r.text = generator.complete(build_generation_prompt(question, elicited, relevant)).text;
  r.aligned = elicited.has_value() || !relevant.empty();
  return r;
}

std::string phrase_query(std::string_view question, const ColdStartDecision& decision, CompletionBackend& generator) {
  return generator.complete(build_query_prompt(question, decision.topic)).text;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const LiveTurnResult& r) {
  nlohmann::json j = {{"t", r.t},
                      {"response", r.response},
                      {"aligned", r.aligned},
                      {"delta", to_json(r.delta)},
                      {"format_report", to_json(r.report)},
                      {"dropped", r.dropped},
                      {"profile_view", to_json(r.profile_view)}};
  if (r.cold_start_query) {
    const auto& q = *r.cold_start_query;
    j["cold_start_query"] = {{"text", q.text}, {"topic", q.topic}, {"original_question", q.original_question}};
    if (q.path) j["cold_start_query"]["path"] = *q.path;
  }
  return j;
}

LiveSession::LiveSession(std::string id, std::string user_id, const ProfileTaxonomy& taxonomy, BackendPtr policy,
                         BackendPtr generator, EngineConfig config, UserProfile profile)
    : id_(std::move(id)), user_id_(std::move(user_id)), taxonomy_(&taxonomy), policy_(std::move(policy)),
      generator_(std::move(generator)), config_(config), profile_(std::move(profile)) {
  config_.validate();
  if (!policy_ || !generator_) throw InvalidArgument("live session needs a policy and a generator backend");
  base_ = profile_.current();
  session_index_ = next_session_index(profile_);
  relevance_ = lexical_relevance(taxonomy);
  topics_ = taxonomy_topic_extractor(taxonomy);
}

StepOutcome LiveSession::infer(std::string_view text) {
  if (trim(text).empty()) throw InvalidArgument("message text must be nonempty");
  InferenceState state;
  state.t = accumulated_.size() + 1;
  state.user_msg = std::string(text);
  state.accumulated = accumulated_;
  state.base = base_;
  state.view = state.replay();

  auto outcome = step(state, *policy_, *taxonomy_);
  profile_.apply_delta(outcome.delta, {session_index_, static_cast<std::uint32_t>(state.t)}, *taxonomy_);
  accumulated_.push_back(outcome.delta);

  TrajectoryEntry entry;
  entry.state = std::move(state);
  entry.delta = outcome.delta;
  entry.raw_output = outcome.raw_output;
  entry.report = outcome.report;
  entry.dropped = outcome.dropped;
  entries_.push_back(std::move(entry));
  return outcome;
}

LiveTurnResult LiveSession::send_message(std::string_view text) {
  auto outcome = infer(text);
  pending_.reset();

  LiveTurnResult r;
  r.t = accumulated_.size();
  r.delta = std::move(outcome.delta);
  r.report = outcome.report;
  r.dropped = std::move(outcome.dropped);
  r.profile_view = profile_.current();

  const auto decision = decide_cold_start(profile_.current(), text, relevance_, config_.tau, topics_, taxonomy_);
  if (decision.kind == DecisionKind::kAnswer) {
    const auto assembled = assemble_response(text, std::nullopt, assertions_of(decision.relevant), *generator_);
    r.response = assembled.text;
    r.aligned = assembled.aligned;
    return r;
  }
  ColdStartQuery q;
  q.text = phrase_query(text, decision, *generator_);
  q.topic = decision.topic;
  if (decision.topic_path) q.path = path_to_string(*decision.topic_path);
  q.original_question = std::string(text);
  pending_ = q;
  r.response = q.text;
  r.aligned = false;
  r.cold_start_query = std::move(q);
  return r;
}

LiveTurnResult LiveSession::answer(std::string_view text) {
  if (!pending_) throw StateError("session '" + id_ + "' has no pending proactive query");
  const auto question = pending_->original_question;
  auto outcome = infer(text);
  pending_.reset();

  LiveTurnResult r;
  r.t = accumulated_.size();
  r.delta = std::move(outcome.delta);
  r.report = outcome.report;
  r.dropped = std::move(outcome.dropped);
  r.profile_view = profile_.current();
  const auto relevant = lookup_relevant(profile_.current(), question, relevance_, config_.tau);
  const auto assembled = assemble_response(question, std::string(text), assertions_of(relevant), *generator_);
  r.response = assembled.text;
  r.aligned = assembled.aligned;
  return r;
}

}  // namespace persona
