#include "persona/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "persona/text.hpp"

namespace persona {

namespace {

CompletionRequest make_request(Role role, std::string_view task, std::string system, std::string user) {
  CompletionRequest r;
  r.role = role;
  r.messages = {{"system", std::move(system)}, {"user", std::move(user)}};
  r.attributes["task"] = std::string(task);
  r.attributes["prompt_version"] = std::string(kPromptVersion);
  return r;
}

std::vector<AttributeAssertion> view_assertions(const ProfileView& view) {
  std::vector<AttributeAssertion> out;
  out.reserve(view.assertions.size());
  for (const auto& [path, a] : view.assertions) out.push_back(a);
  return out;
}

std::string render_set(const std::set<std::string>& items) {
  if (items.empty()) return "(none)";
  return join(std::vector<std::string>(items.begin(), items.end()), ", ");
}

std::string render_delta(const InferredDelta& d) {
  return "Attributes:\n" + render_assertions(d.assertions()) + "\nPersonality: " + render_set(d.personality_traits());
}

nlohmann::json assertions_json(const std::vector<AttributeAssertion>& assertions) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : assertions) arr.push_back({{"path", a.normalized_path()}, {"value", a.value}});
  return arr;
}

/// Lowercased label with spaces, underscores, and hyphens removed.
std::string compact_label(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' || c == '_' || c == '-' || c == '\t') continue;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

/// Splits "Label: value" (also "Label = value"); returns false if no separator.
bool split_label(std::string_view line, std::string& label, std::string& value) {
  std::string cleaned = trim(line);
  while (!cleaned.empty() && (cleaned.front() == '-' || cleaned.front() == '*')) cleaned = trim(cleaned.substr(1));
  const auto sep = cleaned.find_first_of(":=");
  if (sep == std::string::npos) return false;
  label = trim(std::string_view(cleaned).substr(0, sep));
  value = trim(std::string_view(cleaned).substr(sep + 1));
  while (!label.empty() && label.front() == '*') label.erase(label.begin());
  while (!label.empty() && label.back() == '*') label.pop_back();
  while (!value.empty() && value.front() == '*') value.erase(value.begin());
  while (!value.empty() && value.back() == '*') value.pop_back();
  label = trim(label);
  value = trim(value);
  return true;
}

bool parse_int(std::string_view s, long long& out) {
  const std::string t = trim(s);
  if (t.empty() || t.size() > 12) return false;
  std::size_t i = (t[0] == '-' || t[0] == '+') ? 1 : 0;
  if (i == t.size()) return false;
  for (std::size_t k = i; k < t.size(); ++k) {
    if (!std::isdigit(static_cast<unsigned char>(t[k]))) return false;
  }
  out = std::stoll(t);
  return true;
}

}  // namespace

std::string render_assertions(const std::vector<AttributeAssertion>& assertions) {
  if (assertions.empty()) return "(none)";
  std::vector<std::string> lines;
  lines.reserve(assertions.size());
  for (const auto& a : assertions) lines.push_back(a.normalized_path() + ": " + a.value);
  std::sort(lines.begin(), lines.end());
  return join(lines, "\n");
}

std::string render_view(const ProfileView& view) {
  return "Attributes:\n" + render_assertions(view_assertions(view)) + "\nPersonality: " + render_set(view.traits);
}

CompletionRequest build_policy_prompt(std::string_view user_msg, const std::vector<InferredDelta>& accumulated,
                                      const ProfileView& base) {
  ProfileView known = base;
  for (const auto& d : accumulated) known.fold(d);
  std::string system =
      "You maintain a user profile across a conversation. From the latest user message only, infer new or "
      "updated profile attributes, personality traits, and the top-level categories they belong to. Use "
      "taxonomy paths such as interests/music/music_genres. Reply with exactly these three blocks:\n"
      "<inferred_profile>\npath: value\n</inferred_profile>\n"
      "<inferred_personality>\ntrait, trait\n</inferred_personality>\n"
      "<classification>\ncategory_id, category_id\n</classification>\n"
      "Leave a block empty when the message reveals nothing for it.";
  std::string user = "Known profile:\n" + render_view(known) + "\n\nUser message:\n" + std::string(user_msg);
  auto r = make_request(Role::kPolicy, kTaskPolicy, std::move(system), std::move(user));
  r.attributes["user_message"] = std::string(user_msg);
  r.attributes["known_profile"] = to_json(known).dump();
  r.attributes["turn"] = std::to_string(accumulated.size() + 1);
  return r;
}

CompletionRequest build_criteria_prompt(const InferredDelta& pred, const InferredDelta& gt, const ProfileView& prior) {
  std::string system =
      "You grade one turn of profile inference against the ground truth. Answer each question with yes or no.\n"
      "Completeness: does the prediction contain every ground-truth item for this turn?\n"
      "No Hallucination: is every predicted item supported by the ground truth or the earlier profile?\n"
      "Informativeness: does the prediction say something, unless the ground truth is empty?\n"
      "Consistency: does the prediction avoid contradicting the earlier profile without cause?\n"
      "Reply with exactly four lines:\nCompleteness: yes|no\nNo Hallucination: yes|no\n"
      "Informativeness: yes|no\nConsistency: yes|no";
  std::string user = "Earlier profile:\n" + render_view(prior) + "\n\nGround truth for this turn:\n" +
                     render_delta(gt) + "\n\nPrediction for this turn:\n" + render_delta(pred);
  auto r = make_request(Role::kJudge, kTaskCriteria, std::move(system), std::move(user));
  r.attributes["pred"] = to_json(pred).dump();
  r.attributes["gt"] = to_json(gt).dump();
  r.attributes["prior"] = to_json(prior).dump();
  return r;
}

CompletionRequest build_alignment_prompt(const ProfileView& persona, std::string_view user_msg,
                                         std::string_view response) {
  std::string system =
      "You rate how well an assistant response fits a specific user. You see the full user persona, the user's "
      "utterance, and the candidate response. Rate preference alignment from 0 (ignores or contradicts the "
      "persona) to 100 (fully tailored to it). Reply with one line: Score: <integer 0-100>";
  std::string user = "User persona:\n" + render_view(persona) + "\n\nUser utterance:\n" + std::string(user_msg) +
                     "\n\nCandidate response:\n" + std::string(response);
  auto r = make_request(Role::kJudge, kTaskAlignment, std::move(system), std::move(user));
  r.attributes["persona"] = to_json(persona).dump();
  r.attributes["user_message"] = std::string(user_msg);
  r.attributes["response"] = std::string(response);
  return r;
}

CompletionRequest build_rubric_prompt(const ProfileView& ground_truth, const ProfileView& inferred) {
  std::string system =
      "You compare an inferred user profile with the ground-truth profile. Rate each dimension as poor, "
      "partial, or excellent. Reply with exactly seven lines, one per dimension:";
  for (const auto& d : kRubricDimensions) system += "\n" + std::string(d) + ": poor|partial|excellent";
  std::string user =
      "Ground-truth profile:\n" + render_view(ground_truth) + "\n\nInferred profile:\n" + render_view(inferred);
  auto r = make_request(Role::kJudge, kTaskRubric, std::move(system), std::move(user));
  r.attributes["gt"] = to_json(ground_truth).dump();
  r.attributes["inferred"] = to_json(inferred).dump();
  return r;
}

CompletionRequest build_generation_prompt(std::string_view question, const std::optional<std::string>& elicited,
                                          const std::vector<AttributeAssertion>& relevant) {
  std::string system =
      "You are a personal assistant. Answer the user's question, tailoring the answer to what you know about "
      "them. Use every listed preference that bears on the question.";
  std::string user = "Known relevant preferences:\n" + render_assertions(relevant);
  if (elicited) user += "\n\nThe user just told you:\n" + *elicited;
  user += "\n\nQuestion:\n" + std::string(question);
  auto r = make_request(Role::kGenerator, kTaskRespond, std::move(system), std::move(user));
  r.attributes["question"] = std::string(question);
  if (elicited) r.attributes["elicited"] = *elicited;
  r.attributes["relevant"] = assertions_json(relevant).dump();
  return r;
}

CompletionRequest build_query_prompt(std::string_view question, std::string_view topic) {
  std::string system =
      "You are a personal assistant. You cannot answer the user's question well without knowing one of their "
      "preferences. Ask one short, friendly question that elicits it. Do not answer yet.";
  std::string user = "Preference to ask about:\n" + std::string(topic) + "\n\nQuestion:\n" + std::string(question);
  auto r = make_request(Role::kGenerator, kTaskQuery, std::move(system), std::move(user));
  r.attributes["question"] = std::string(question);
  r.attributes["topic"] = std::string(topic);
  return r;
}

CompletionRequest build_selector_prompt(const SessionRecord& record,
                                        const std::vector<AttributeAssertion>& candidates) {
  std::string system =
      "Pick the candidate preference that is most strongly preference-related: one a helpful answer to some "
      "everyday request would have to respect. Reply with one line: Choice: <number>";
  std::string user = "Dialogue theme: " + (record.theme.empty() ? std::string("(none)") : record.theme) +
                     "\n\nCandidates:";
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    user += "\n" + std::to_string(i + 1) + ". " + candidates[i].normalized_path() + ": " + candidates[i].value;
  }
  auto r = make_request(Role::kJudge, kTaskSelect, std::move(system), std::move(user));
  r.attributes["candidates"] = assertions_json(candidates).dump();
  r.attributes["theme"] = record.theme;
  return r;
}

CompletionRequest build_question_prompt(const SessionRecord& record, const AttributeAssertion& chosen) {
  std::string system =
      "Write a user question that can only be answered well by knowing the given preference, without "
      "mentioning it, plus a one-sentence explanation of why the preference matters. Reply with two lines:\n"
      "Question: <text>\nExplanation: <text>";
  std::string user = "Dialogue theme: " + (record.theme.empty() ? std::string("(none)") : record.theme) +
                     "\nPreference: " + chosen.normalized_path() + ": " + chosen.value;
  auto r = make_request(Role::kGenerator, kTaskQuestion, std::move(system), std::move(user));
  r.attributes["theme"] = record.theme;
  r.attributes["path"] = chosen.normalized_path();
  r.attributes["value"] = chosen.value;
  return r;
}

CriteriaVerdict parse_verdict(std::string_view text) {
  static const std::pair<const char*, const char*> kLabels[] = {{"completeness", "Completeness"},
                                                                {"nohallucination", "No Hallucination"},
                                                                {"informativeness", "Informativeness"},
                                                                {"consistency", "Consistency"}};
  std::map<std::string, bool> seen;
  for (const auto& raw_line : split(text, '\n')) {
    std::string label;
    std::string value;
    if (!split_label(raw_line, label, value)) continue;
    const auto key = compact_label(label);
    const auto* match = std::find_if(std::begin(kLabels), std::end(kLabels),
                                     [&](const auto& l) { return key == l.first; });
    if (match == std::end(kLabels)) continue;
    const auto v = to_lower(value);
    bool flag;
    if (v == "yes" || v == "true") {
      flag = true;
    } else if (v == "no" || v == "false") {
      flag = false;
    } else {
      throw ParseError(std::string("verdict label '") + match->second + "' has value '" + value +
                       "' (expected yes or no)");
    }
    const auto [it, inserted] = seen.emplace(key, flag);
    if (!inserted && it->second != flag) {
      throw ParseError(std::string("verdict label '") + match->second + "' appears with conflicting values");
    }
  }
  for (const auto& [key, name] : kLabels) {
    if (!seen.count(key)) throw ParseError(std::string("verdict is missing label '") + name + "'");
  }
  return {seen["completeness"], seen["nohallucination"], seen["informativeness"], seen["consistency"]};
}

int parse_score(std::string_view text) {
  std::optional<long long> found;
  auto accept = [&](long long v) {
    if (found && *found != v) throw ParseError("score appears with conflicting values");
    found = v;
  };
  long long bare = 0;
  if (parse_int(text, bare)) {
    accept(bare);
  } else {
    for (const auto& line : split(text, '\n')) {
      std::string label;
      std::string value;
      if (!split_label(line, label, value) || compact_label(label) != "score") continue;
      long long v = 0;
      if (!parse_int(value, v)) throw ParseError("score value '" + value + "' is not an integer");
      accept(v);
    }
  }
  if (!found) throw ParseError("no 'Score: N' line in judge output");
  if (*found < 0 || *found > 100) throw ParseError("score " + std::to_string(*found) + " is outside 0..100");
  return static_cast<int>(*found);
}

std::size_t parse_choice(std::string_view text, std::size_t count) {
  for (const auto& line : split(text, '\n')) {
    std::string label;
    std::string value;
    if (!split_label(line, label, value) || compact_label(label) != "choice") continue;
    long long v = 0;
    if (!parse_int(value, v)) throw ParseError("choice value '" + value + "' is not an integer");
    if (v < 1 || static_cast<std::size_t>(v) > count) {
      throw ParseError("choice " + std::to_string(v) + " is outside 1.." + std::to_string(count));
    }
    return static_cast<std::size_t>(v - 1);
  }
  throw ParseError("no 'Choice: N' line in selector output");
}

GeneratedQuestion parse_generated_question(std::string_view text) {
  GeneratedQuestion g;
  for (const auto& line : split(text, '\n')) {
    std::string label;
    std::string value;
    if (!split_label(line, label, value)) continue;
    const auto key = compact_label(label);
    if (key == "question" && g.question.empty()) g.question = value;
    if (key == "explanation" && g.explanation.empty()) g.explanation = value;
  }
  if (g.question.empty()) throw ParseError("generator output has no 'Question:' line");
  if (g.explanation.empty()) throw ParseError("generator output has no 'Explanation:' line");
  return g;
}

CriteriaVerdict BackendCriteriaJudge::judge(const JudgeInput& input) {
  const auto result = backend_->complete(build_criteria_prompt(input.pred, input.gt, input.prior));
  return parse_verdict(result.text);
}

double BackendAlignmentJudge::score(const ProfileView& persona, std::string_view user_msg, std::string_view response,
                                    std::size_t turn) {
  auto request = build_alignment_prompt(persona, user_msg, response);
  request.attributes["turn"] = std::to_string(turn);
  return static_cast<double>(parse_score(backend_->complete(request).text));
}

RubricScore judge_rubric(CompletionBackend& backend, const ProfileView& ground_truth, const ProfileView& inferred) {
  return rubric_score(backend.complete(build_rubric_prompt(ground_truth, inferred)).text);
}

ColdStartSelector backend_selector(BackendPtr judge) {
  return [judge](const SessionRecord& record, const std::vector<AttributeAssertion>& candidates) {
    const auto text = judge->complete(build_selector_prompt(record, candidates)).text;
    return candidates.at(parse_choice(text, candidates.size()));
  };
}

QuestionGenerator backend_question_generator(BackendPtr generator) {
  return [generator](const SessionRecord& record, const AttributeAssertion& chosen) {
    return parse_generated_question(generator->complete(build_question_prompt(record, chosen)).text);
  };
}

}  // namespace persona
