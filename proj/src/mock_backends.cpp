#include "persona/mock_backends.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "persona/engine.hpp"
#include "persona/metrics.hpp"
#include "persona/prompts.hpp"
#include "persona/reward.hpp"
#include "persona/tagged_output.hpp"
#include "persona/text.hpp"

namespace persona {

double stable_unit(std::uint64_t seed, std::initializer_list<std::string_view> parts) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>((seed >> (8 * i)) & 0xFF));
  for (const auto part : parts) {
    for (char c : part) mix(static_cast<unsigned char>(c));
    mix(0x1F);
  }
  // Final avalanche (splitmix64) so nearby inputs spread over [0, 1).
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

namespace {

void require_task(const CompletionRequest& request, std::initializer_list<std::string_view> tasks,
                  std::string_view backend) {
  const auto task = request.attribute("task");
  if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) {
    throw BackendError(BackendErrorKind::kScripted,
                       std::string(backend) + " cannot handle task '" + task + "'");
  }
}

nlohmann::json attribute_json(const CompletionRequest& request, std::string_view name) {
  const auto text = request.attribute(name);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    throw BackendError(BackendErrorKind::kScripted, "request attribute '" + std::string(name) + "' is not JSON");
  }
}

std::string drop_closing_tags(std::string rendered, std::uint64_t seed, std::string_view msg, double rate) {
  if (rate <= 0.0) return rendered;
  for (const auto tag : kBlockTags) {
    if (stable_unit(seed, {msg, "#block", tag}) >= rate) continue;
    const std::string close = "</" + std::string(tag) + ">";
    const auto pos = rendered.find(close);
    if (pos != std::string::npos) rendered.erase(pos, close.size());
  }
  return rendered;
}

}  // namespace

// ---------------------------------------------------------------------------

OraclePolicyBackend::OraclePolicyBackend(const std::vector<SessionRecord>& records, double drop_rate,
                                         double block_drop_rate, std::uint64_t seed)
    : drop_rate_(drop_rate), block_drop_rate_(block_drop_rate), seed_(seed) {
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0) || !(block_drop_rate >= 0.0 && block_drop_rate <= 1.0)) {
    throw InvalidArgument("oracle policy rates must be in [0, 1]");
  }
  for (const auto& r : records) {
    for (const auto& t : r.turns) {
      if (t.gt_delta) by_message_.emplace(t.user, *t.gt_delta);
    }
  }
}

CompletionResult OraclePolicyBackend::complete(const CompletionRequest& request) {
  request.validate();
  require_task(request, {kTaskPolicy}, "oracle policy");
  const auto msg = request.attribute("user_message");
  InferredDelta out;
  if (const auto it = by_message_.find(msg); it != by_message_.end()) {
    const auto& gt = it->second;
    bool dropped_any = false;
    for (const auto& a : gt.assertions()) {
      if (drop_rate_ > 0.0 && stable_unit(seed_, {msg, a.normalized_path(), a.normalized_value()}) < drop_rate_) {
        dropped_any = true;
        continue;
      }
      out.add_assertion(a);
    }
    for (const auto& trait : gt.personality_traits()) {
      if (drop_rate_ > 0.0 && stable_unit(seed_, {msg, kTraitPath, trait}) < drop_rate_) continue;
      out.add_trait(trait);
    }
    if (dropped_any) {
      for (const auto& a : out.assertions()) out.add_classification(a.path.front());
    } else {
      for (const auto& id : gt.classification()) out.add_classification(id);
    }
  }
  return {drop_closing_tags(render_tagged_output(out), seed_, msg, block_drop_rate_), {}, 1};
}

// ---------------------------------------------------------------------------

namespace {

struct Cue {
  std::string_view phrase;
  std::string_view fallback;  // path used when the value matches no node keyword
};

constexpr Cue kCues[] = {
    {"i'm allergic to ", "lifestyle/diet/food_allergies"},
    {"i am allergic to ", "lifestyle/diet/food_allergies"},
    {"i live in ", "geography/residence/current_city"},
    {"i'm from ", "demographics/nationality"},
    {"i am from ", "demographics/nationality"},
    {"i work as an ", "career_finance/occupation/job_title"},
    {"i work as a ", "career_finance/occupation/job_title"},
    {"i work as ", "career_finance/occupation/job_title"},
    {"i don't eat ", "lifestyle/diet/dietary_restrictions"},
    {"i can't eat ", "lifestyle/diet/dietary_restrictions"},
    {"my favorite ", "scenario/stated_preferences"},
    {"i really love ", "scenario/stated_preferences"},
    {"i love ", "scenario/stated_preferences"},
    {"i really like ", "scenario/stated_preferences"},
    {"i like ", "scenario/stated_preferences"},
    {"i enjoy ", "scenario/stated_preferences"},
    {"i prefer ", "scenario/stated_preferences"},
    {"i hate ", "scenario/stated_preferences"},
    {"i dislike ", "scenario/stated_preferences"},
    {"i'm an ", "scenario/stated_preferences"},
    {"i'm a ", "scenario/stated_preferences"},
    {"i am an ", "scenario/stated_preferences"},
    {"i am a ", "scenario/stated_preferences"},
};

constexpr std::string_view kTraitWords[] = {
    "introvert", "introverted", "extrovert", "extroverted", "outgoing", "shy",      "curious",
    "organized", "adventurous", "cautious",  "creative",    "analytical", "patient", "impatient",
    "optimistic", "pessimistic", "sociable",  "reserved",   "spontaneous", "practical"};

std::vector<std::string> sentences_of(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?' || c == ';' || c == '\n') {
      if (!trim(current).empty()) out.push_back(trim(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!trim(current).empty()) out.push_back(trim(current));
  return out;
}

std::string ascii_apostrophes(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    // U+2019 RIGHT SINGLE QUOTATION MARK is E2 80 99 in UTF-8.
    if (i + 2 < text.size() && static_cast<unsigned char>(text[i]) == 0xE2 &&
        static_cast<unsigned char>(text[i + 1]) == 0x80 && static_cast<unsigned char>(text[i + 2]) == 0x99) {
      out += '\'';
      i += 2;
    } else {
      out += text[i];
    }
  }
  return out;
}

}  // namespace

KeywordPolicyBackend::KeywordPolicyBackend(const ProfileTaxonomy& taxonomy) : taxonomy_(&taxonomy) {}

InferredDelta KeywordPolicyBackend::extract(std::string_view message) const {
  InferredDelta d;
  const auto topics = taxonomy_topic_extractor(*taxonomy_);
  for (const auto& sentence : sentences_of(normalize_text(ascii_apostrophes(message)))) {
    const auto words = whitespace_tokens(sentence);
    const bool first_person_state = sentence.find("i'm ") != std::string::npos ||
                                    sentence.find("i am ") != std::string::npos;
    bool has_trait = false;
    if (first_person_state) {
      for (const auto& w : words) {
        if (std::find(std::begin(kTraitWords), std::end(kTraitWords), w) != std::end(kTraitWords)) {
          d.add_trait(w);
          has_trait = true;
        }
      }
    }
    for (const auto& cue : kCues) {
      const auto pos = sentence.find(cue.phrase);
      if (pos == std::string::npos) continue;
      if (pos != 0 && sentence[pos - 1] != ' ' && sentence[pos - 1] != ',') continue;
      std::string value = trim(sentence.substr(pos + cue.phrase.size()));
      while (!value.empty() && (value.back() == ',' || value.back() == ':')) value.pop_back();
      if (value.empty()) break;
      const bool generic_identity = cue.phrase.rfind("i'm a", 0) == 0 || cue.phrase.rfind("i am a", 0) == 0;
      if (generic_identity && has_trait) break;
      CategoryPath path;
      if (const auto topic = topics(value); topic && topic->size() >= 2) {
        path = *topic;
      } else {
        path = path_from_string(cue.fallback);
      }
      if (taxonomy_->contains(path)) {
        d.add_assertion(AttributeAssertion(path, value));
        d.add_classification(path.front());
      }
      break;
    }
  }
  if (!d.personality_traits().empty() && taxonomy_->find_id("personality")) d.add_classification("personality");
  return d;
}

CompletionResult KeywordPolicyBackend::complete(const CompletionRequest& request) {
  request.validate();
  require_task(request, {kTaskPolicy}, "keyword policy");
  return {render_tagged_output(extract(request.attribute("user_message"))), {}, 1};
}

// ---------------------------------------------------------------------------

TemplateGeneratorBackend::TemplateGeneratorBackend(const ProfileTaxonomy& taxonomy) : taxonomy_(&taxonomy) {}

CompletionResult TemplateGeneratorBackend::complete(const CompletionRequest& request) {
  request.validate();
  require_task(request, {kTaskRespond, kTaskQuery, kTaskQuestion}, "template generator");
  const auto task = request.attribute("task");
  std::string text;
  if (task == kTaskRespond) {
    text = "Here is my suggestion for \"" + request.attribute("question") + "\".";
    const auto relevant = attribute_json(request, "relevant");
    std::vector<std::string> values;
    for (const auto& a : relevant) values.push_back(a.at("value").get<std::string>());
    if (!values.empty()) text += " I took into account: " + join(values, "; ") + ".";
    if (request.attributes.count("elicited")) text += " You told me: " + request.attribute("elicited") + ".";
    if (values.empty() && !request.attributes.count("elicited")) {
      text += " I don't know your preferences yet, so this is a general answer.";
    }
  } else if (task == kTaskQuery) {
    text = "Before I answer, could you tell me about your " + to_lower(request.attribute("topic")) + "?";
  } else {
    SessionRecord record;
    record.theme = request.attribute("theme");
    const AttributeAssertion chosen(std::string_view(request.attribute("path")), request.attribute("value"));
    const auto g = template_question_generator(*taxonomy_)(record, chosen);
    text = "Question: " + g.question + "\nExplanation: " + g.explanation;
  }
  return {std::move(text), {}, 1};
}

// ---------------------------------------------------------------------------

namespace {

std::string_view level_name(double fraction) {
  if (fraction >= 0.8) return "excellent";
  if (fraction >= 0.4) return "partial";
  return "poor";
}

double ratio_or(std::size_t num, std::size_t den, double empty_value) {
  return den == 0 ? empty_value : static_cast<double>(num) / static_cast<double>(den);
}

std::string render_verdict(const CriteriaVerdict& v) {
  auto yn = [](bool b) { return b ? "yes" : "no"; };
  return std::string("Completeness: ") + yn(v.completeness) + "\nNo Hallucination: " + yn(v.no_hallucination) +
         "\nInformativeness: " + yn(v.informativeness) + "\nConsistency: " + yn(v.consistency);
}

std::string rubric_reply(const ProfileView& gt, const ProfileView& inferred) {
  const auto g = gt.keys();
  const auto i = inferred.keys();
  std::set<AssertionKey> gk;
  std::set<AssertionKey> ik;
  for (const auto& k : g) {
    if (k.path != kTraitPath) gk.insert(k);
  }
  for (const auto& k : i) {
    if (k.path != kTraitPath) ik.insert(k);
  }
  std::size_t shared = 0;
  for (const auto& k : ik) shared += gk.count(k);
  std::size_t known_paths = 0;
  std::size_t same_value = 0;
  for (const auto& [path, a] : inferred.assertions) {
    const auto* held = gt.find(path);
    if (held == nullptr) continue;
    ++known_paths;
    if (held->key() == a.key()) ++same_value;
  }
  const bool both_empty = gk.empty() && ik.empty();
  const double precision = ratio_or(shared, ik.size(), both_empty ? 1.0 : 0.0);
  const double recall = ratio_or(shared, gk.size(), 1.0);
  const double values[7] = {
      precision,
      recall,
      ratio_or(known_paths, inferred.assertions.size(), 1.0),
      f1_reward(inferred.traits, gt.traits),
      precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : (both_empty ? 1.0 : 0.0),
      ratio_or(same_value, known_paths, 1.0),
      1.0,
  };
  std::string out;
  for (std::size_t d = 0; d < kRubricDimensions.size(); ++d) {
    out += std::string(kRubricDimensions[d]) + ": " + std::string(level_name(values[d])) + "\n";
  }
  return out;
}

}  // namespace

int RuleJudgeBackend::alignment_score(const ProfileView& persona, std::string_view response) {
  if (persona.assertions.empty()) return 0;
  const auto text = normalize_text(response);
  std::size_t found = 0;
  for (const auto& [path, a] : persona.assertions) {
    const auto value = a.normalized_value();
    if (!value.empty() && text.find(value) != std::string::npos) ++found;
  }
  return static_cast<int>(std::lround(100.0 * static_cast<double>(found) /
                                      static_cast<double>(persona.assertions.size())));
}

CompletionResult RuleJudgeBackend::complete(const CompletionRequest& request) {
  request.validate();
  require_task(request, {kTaskCriteria, kTaskAlignment, kTaskRubric, kTaskSelect}, "rule judge");
  const auto task = request.attribute("task");
  try {
    if (task == kTaskCriteria) {
      const auto pred = delta_from_json(attribute_json(request, "pred"));
      const auto gt = delta_from_json(attribute_json(request, "gt"));
      const auto prior = view_from_json(attribute_json(request, "prior"));
      RuleBasedJudge judge;
      return {render_verdict(judge.judge(JudgeInput{pred, gt, prior})), {}, 1};
    }
    if (task == kTaskAlignment) {
      const auto persona = view_from_json(attribute_json(request, "persona"));
      return {"Score: " + std::to_string(alignment_score(persona, request.attribute("response"))), {}, 1};
    }
    if (task == kTaskRubric) {
      return {rubric_reply(view_from_json(attribute_json(request, "gt")),
                           view_from_json(attribute_json(request, "inferred"))),
              {},
              1};
    }
    const auto candidates = attribute_json(request, "candidates");
    if (!candidates.is_array() || candidates.empty()) {
      throw BackendError(BackendErrorKind::kScripted, "selector request has no candidates");
    }
    std::size_t best = 0;
    AssertionKey best_key;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const AttributeAssertion a(std::string_view(candidates[i].at("path").get<std::string>()),
                                 candidates[i].at("value").get<std::string>());
      if (i == 0 || a.key() < best_key) {
        best = i;
        best_key = a.key();
      }
    }
    return {"Choice: " + std::to_string(best + 1), {}, 1};
  } catch (const BackendError&) {
    throw;
  } catch (const std::exception& e) {
    throw BackendError(BackendErrorKind::kScripted, std::string("rule judge: ") + e.what());
  }
}

}  // namespace persona
