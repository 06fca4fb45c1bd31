#include "persona/dialogue.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json_util.hpp"
#include "persona/text.hpp"

namespace persona {

namespace {

constexpr std::string_view kDefaultPreferencePath = "scenario/stated_preferences";

void require_paths(const InferredDelta& delta, const ProfileTaxonomy& taxonomy) {
  for (const auto& a : delta.assertions()) {
    if (!taxonomy.contains(a.path)) throw ParseError("path '" + a.normalized_path() + "' is not in the taxonomy");
  }
}

ProfileView view_from_profile_map(const nlohmann::json& j, const ProfileTaxonomy& taxonomy) {
  if (!j.is_object()) throw ParseError("'profile' must be an object of path -> value");
  for (const auto& [path, value] : j.items()) {
    if (!value.is_string()) throw ParseError("profile value for '" + path + "' must be a string");
  }
  const auto delta = delta_from_path_map(j);
  require_paths(delta, taxonomy);
  ProfileView view;
  view.fold(delta);
  return view;
}

std::set<std::string> string_set(const nlohmann::json& j, std::string_view field) {
  std::set<std::string> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw ParseError("'" + std::string(field) + "' must be an array of strings");
  for (const auto& v : j) {
    if (!v.is_string()) throw ParseError("'" + std::string(field) + "' must be an array of strings");
    const auto t = normalize_text(v.get<std::string>());
    if (!t.empty()) out.insert(t);
  }
  return out;
}

std::optional<std::string> optional_text(const nlohmann::json& j, std::string_view field) {
  const auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError("field '" + std::string(field) + "' must be a string");
  return it->get<std::string>();
}

std::optional<InferredDelta> turn_delta_from_json(const nlohmann::json& t, const ProfileTaxonomy& taxonomy) {
  const bool has_profile = t.contains("inferred_profile") && !t["inferred_profile"].is_null();
  const bool has_traits = t.contains("inferred_personality") && !t["inferred_personality"].is_null();
  if (!has_profile && !has_traits) return std::nullopt;

  InferredDelta d = has_profile ? delta_from_path_map(t["inferred_profile"]) : InferredDelta{};
  require_paths(d, taxonomy);
  if (has_traits) {
    for (const auto& trait : string_set(t["inferred_personality"], "inferred_personality")) d.add_trait(trait);
  }
  if (const auto it = t.find("classification"); it != t.end() && !it->is_null()) {
    for (const auto& id : string_set(*it, "classification")) {
      if (!taxonomy.find_id(id)) throw ParseError("classification id '" + id + "' is not in the taxonomy");
      d.add_classification(id);
    }
  } else {
    for (const auto& a : d.assertions()) d.add_classification(a.path.front());
  }
  return d;
}

DialogueTurn turn_from_json(const nlohmann::json& t, CorpusFormat format, const ProfileTaxonomy& taxonomy) {
  if (!t.is_object()) throw ParseError("turn must be an object");
  DialogueTurn turn;
  turn.user = detail::require_string(t, "user");
  if (trim(turn.user).empty()) throw ParseError("turn 'user' must be nonempty");
  turn.distractor = t.value("distractor", false);

  if (format == CorpusFormat::kPrefEval) {
    turn.agent = detail::optional_string(t, "agent");
    return turn;
  }

  turn.preferred = optional_text(t, "preferred");
  turn.rejected = optional_text(t, "rejected");
  turn.chosen = optional_text(t, "chosen");
  if (turn.preferred || turn.rejected || turn.chosen) {
    if (!turn.chosen) throw ParseError("turn with candidate responses needs 'chosen'");
    if (*turn.chosen == "preferred") {
      if (!turn.preferred) throw ParseError("'chosen' names 'preferred' but the turn has none");
      turn.agent = *turn.preferred;
    } else if (*turn.chosen == "rejected") {
      if (!turn.rejected) throw ParseError("'chosen' names 'rejected' but the turn has none");
      turn.agent = *turn.rejected;
    } else {
      throw ParseError("'chosen' must be 'preferred' or 'rejected', got '" + *turn.chosen + "'");
    }
  } else {
    turn.agent = detail::optional_string(t, "agent");
  }
  turn.gt_delta = turn_delta_from_json(t, taxonomy);
  return turn;
}

nlohmann::json path_map(const std::vector<AttributeAssertion>& assertions) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& a : assertions) {
    const auto key = path_to_string(a.path);
    auto it = j.find(key);
    if (it == j.end()) {
      j[key] = a.value;
    } else {
      if (it->is_string()) *it = nlohmann::json::array({it->get<std::string>()});
      it->push_back(a.value);
    }
  }
  return j;
}

nlohmann::json turn_to_json(const DialogueTurn& turn, CorpusFormat format) {
  nlohmann::json t = {{"user", turn.user}};
  if (turn.preferred || turn.rejected || turn.chosen) {
    if (turn.preferred) t["preferred"] = *turn.preferred;
    if (turn.rejected) t["rejected"] = *turn.rejected;
    if (turn.chosen) t["chosen"] = *turn.chosen;
  } else {
    t["agent"] = turn.agent;
  }
  if (format != CorpusFormat::kPrefEval && turn.gt_delta) {
    t["inferred_profile"] = path_map(turn.gt_delta->assertions());
    t["inferred_personality"] = turn.gt_delta->personality_traits();
    t["classification"] = turn.gt_delta->classification();
  }
  if (turn.distractor) t["distractor"] = true;
  return t;
}

}  // namespace

std::string_view format_name(CorpusFormat format) {
  switch (format) {
    case CorpusFormat::kAloe:
      return "aloe";
    case CorpusFormat::kPrefEval:
      return "prefeval";
    case CorpusFormat::kUnseen:
      return "unseen";
  }
  return "aloe";
}

CorpusFormat format_from_name(std::string_view name) {
  const auto n = to_lower(trim(name));
  if (n == "aloe" || n == "aloe.v1") return CorpusFormat::kAloe;
  if (n == "prefeval" || n == "prefeval.v1") return CorpusFormat::kPrefEval;
  if (n == "unseen" || n == "unseen.v1") return CorpusFormat::kUnseen;
  throw InvalidArgument("unknown corpus format '" + std::string(name) + "' (expected aloe, prefeval, or unseen)");
}

ProfileView SessionRecord::inferable_view() const {
  ProfileView view;
  for (const auto& t : turns) {
    if (t.gt_delta) view.fold(*t.gt_delta);
  }
  return view;
}

SessionRecord record_from_json(const nlohmann::json& j, CorpusFormat format, const ProfileTaxonomy& taxonomy,
                               const LoadOptions& options) {
  if (!j.is_object()) throw ParseError("record must be a JSON object");
  SessionRecord r;
  r.format = format;
  r.id = detail::require_string(j, "id");
  if (trim(r.id).empty()) throw ParseError("record 'id' must be nonempty");

  const auto& turns = detail::require(j, "turns");
  if (!turns.is_array()) throw ParseError("'turns' must be an array");
  if (turns.empty()) throw ParseError("record has no turns");
  if (turns.size() > options.max_turns) {
    throw ParseError("record has " + std::to_string(turns.size()) + " turns, limit is " +
                     std::to_string(options.max_turns));
  }
  for (std::size_t i = 0; i < turns.size(); ++i) {
    try {
      r.turns.push_back(turn_from_json(turns[i], format, taxonomy));
    } catch (const ParseError& e) {
      throw ParseError("turn " + std::to_string(i + 1) + ": " + e.what());
    }
  }

  if (format == CorpusFormat::kPrefEval) {
    r.theme = detail::optional_string(j, "topic");
    const auto preference = detail::require_string(j, "preference");
    const auto path = detail::optional_string(j, "preference_path", std::string(kDefaultPreferencePath));
    AttributeAssertion a(std::string_view(path), preference);
    if (!taxonomy.contains(a.path)) throw ParseError("preference_path '" + path + "' is not in the taxonomy");
    r.gt_profile.assertions.emplace(a.normalized_path(), a);
    r.final_question = detail::require_string(j, "question");
    r.explanation = optional_text(j, "explanation");
    return r;
  }

  r.theme = detail::optional_string(j, "theme", detail::optional_string(j, "topic"));
  r.gt_profile = view_from_profile_map(detail::require(j, "profile"), taxonomy);
  if (j.contains("personality")) r.gt_profile.traits = string_set(j["personality"], "personality");
  r.final_question = optional_text(j, "question");
  r.explanation = optional_text(j, "explanation");

  if (format == CorpusFormat::kUnseen) {
    const auto& p = detail::require(j, "cold_start_preference");
    AttributeAssertion pref(std::string_view(detail::require_string(p, "path")), detail::require_string(p, "value"));
    if (!taxonomy.contains(pref.path)) {
      throw ParseError("cold_start_preference path '" + pref.normalized_path() + "' is not in the taxonomy");
    }
    if (!r.final_question) throw ParseError("missing field 'question'");
    if (!r.explanation) throw ParseError("missing field 'explanation'");
    const auto candidates = profile_diff(r.gt_profile, r.inferable_view());
    const bool valid = std::any_of(candidates.begin(), candidates.end(),
                                   [&](const AttributeAssertion& c) { return c.key() == pref.key(); });
    if (!valid) {
      throw ParseError("cold_start_preference " + pref.normalized_path() +
                       " is not a profile preference left unrevealed by the turns");
    }
    r.cold_start_preference = pref;
  }
  return r;
}

nlohmann::json record_to_json(const SessionRecord& r) {
  nlohmann::json j = {{"id", r.id}};
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : r.turns) turns.push_back(turn_to_json(t, r.format));

  if (r.format == CorpusFormat::kPrefEval) {
    j["topic"] = r.theme;
    const auto it = r.gt_profile.assertions.begin();
    if (it != r.gt_profile.assertions.end()) {
      j["preference"] = it->second.value;
      if (it->first != kDefaultPreferencePath) j["preference_path"] = it->first;
    } else {
      j["preference"] = "";
    }
    j["question"] = r.final_question.value_or("");
    if (r.explanation) j["explanation"] = *r.explanation;
    j["turns"] = std::move(turns);
    return j;
  }

  if (!r.theme.empty()) j["theme"] = r.theme;
  std::vector<AttributeAssertion> profile;
  for (const auto& [path, a] : r.gt_profile.assertions) profile.push_back(a);
  j["profile"] = path_map(profile);
  j["personality"] = r.gt_profile.traits;
  j["turns"] = std::move(turns);
  if (r.final_question) j["question"] = *r.final_question;
  if (r.explanation) j["explanation"] = *r.explanation;
  if (r.cold_start_preference) {
    j["cold_start_preference"] = {{"path", path_to_string(r.cold_start_preference->path)},
                                  {"value", r.cold_start_preference->value}};
  }
  return j;
}

LoadResult parse_corpus(std::string_view jsonl, CorpusFormat format, const ProfileTaxonomy& taxonomy,
                        const LoadOptions& options) {
  LoadResult result;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    const auto end = jsonl.find('\n', pos);
    const auto line = jsonl.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? jsonl.size() : end + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    ++result.lines_read;
    try {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line.begin(), line.end());
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what());
      }
      auto record = record_from_json(j, format, taxonomy, options);
      if (!ids.insert(record.id).second) throw ParseError("duplicate record id '" + record.id + "'");
      result.records.push_back(std::move(record));
    } catch (const Error& e) {
      if (options.strict) throw ParseError(e.what(), line_no);
      result.errors.push_back({line_no, e.what()});
    }
  }
  return result;
}

LoadResult load_corpus(const std::filesystem::path& path, CorpusFormat format, const ProfileTaxonomy& taxonomy,
                       const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str(), format, taxonomy, options);
}

std::string serialize_corpus(const std::vector<SessionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<SessionRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write corpus file " + path.string());
  out << serialize_corpus(records);
}

std::vector<TurnUnit> decompose(const SessionRecord& record) {
  std::vector<TurnUnit> units;
  units.reserve(record.turns.size());
  ProfileView prior;
  for (std::size_t i = 0; i < record.turns.size(); ++i) {
    const auto& t = record.turns[i];
    units.push_back({i + 1, t.user, t.gt_delta, prior});
    if (t.gt_delta) prior.fold(*t.gt_delta);
  }
  return units;
}

std::vector<DialogueTurn> recompose(const std::vector<TurnUnit>& units) {
  std::vector<DialogueTurn> turns;
  turns.reserve(units.size());
  for (const auto& u : units) {
    DialogueTurn t;
    t.user = u.user;
    t.gt_delta = u.gt_delta;
    turns.push_back(std::move(t));
  }
  return turns;
}

Tokenizer whitespace_tokenizer() {
  return [](std::string_view text) { return whitespace_token_count(text); };
}

DistractorPool DistractorPool::from_turns(std::vector<DialogueTurn> turns) {
  DistractorPool pool;
  for (auto& t : turns) {
    t.distractor = true;
    t.gt_delta.reset();
  }
  pool.turns = std::move(turns);
  return pool;
}

DistractorPool DistractorPool::parse(std::string_view jsonl) {
  std::vector<DialogueTurn> turns;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    const auto end = jsonl.find('\n', pos);
    const auto line = jsonl.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? jsonl.size() : end + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line.begin(), line.end());
      DialogueTurn t;
      t.user = detail::require_string(j, "user");
      t.agent = detail::optional_string(j, "agent");
      turns.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("distractor pool: ") + e.what(), line_no);
    } catch (const ParseError& e) {
      throw ParseError(std::string("distractor pool: ") + e.what(), line_no);
    }
  }
  return from_turns(std::move(turns));
}

DistractorPool DistractorPool::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open distractor pool " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

DistractorPool DistractorPool::synthetic() {
  static const std::pair<const char*, const char*> kTurns[] = {
      {"What is the tallest mountain in the world?",
       "Mount Everest is the tallest mountain above sea level at about 8,849 meters."},
      {"How many planets are in the solar system?",
       "There are eight planets: Mercury, Venus, Earth, Mars, Jupiter, Saturn, Uranus, and Neptune."},
      {"Can you explain what photosynthesis is?",
       "Photosynthesis is the process plants use to turn light, water, and carbon dioxide into sugar and oxygen."},
      {"What year did the first person walk on the moon?",
       "Neil Armstrong walked on the moon in July 1969 during the Apollo 11 mission."},
      {"How does a rainbow form?",
       "Sunlight is refracted, reflected, and dispersed inside raindrops, splitting it into its colors."},
      {"What is the boiling point of water at sea level?",
       "Water boils at 100 degrees Celsius, or 212 degrees Fahrenheit, at standard sea-level pressure."},
      {"Who wrote the play Hamlet?", "Hamlet was written by William Shakespeare around the year 1600."},
      {"Why is the sky blue during the day?",
       "Air molecules scatter short blue wavelengths of sunlight more strongly than longer red ones."},
      {"How long does light from the sun take to reach the earth?",
       "Sunlight takes a little over eight minutes to travel the roughly 150 million kilometers to Earth."},
      {"What is the largest ocean on the planet?",
       "The Pacific Ocean is the largest, covering about a third of the surface of the Earth."},
      {"How many bones are in the adult human body?", "An adult human skeleton usually has 206 bones."},
      {"What causes the seasons to change?",
       "The tilt of the Earth's axis changes how directly sunlight hits each hemisphere over the year."},
  };
  std::vector<DialogueTurn> turns;
  for (const auto& [user, agent] : kTurns) {
    DialogueTurn t;
    t.user = user;
    t.agent = agent;
    turns.push_back(std::move(t));
  }
  return from_turns(std::move(turns));
}

std::size_t DistractorPool::turn_tokens(std::size_t index, const Tokenizer& tokenizer) const {
  const auto& t = turns.at(index);
  return tokenizer(t.user) + tokenizer(t.agent);
}

std::size_t DistractorPool::max_turn_tokens(const Tokenizer& tokenizer) const {
  std::size_t m = 0;
  for (std::size_t i = 0; i < turns.size(); ++i) m = std::max(m, turn_tokens(i, tokenizer));
  return m;
}

DistractorPosition position_from_name(std::string_view name) {
  const auto n = to_lower(trim(name));
  if (n == "after_pref" || n == "after-pref") return DistractorPosition::kAfterPreference;
  if (n == "interleave") return DistractorPosition::kInterleave;
  throw InvalidArgument("unknown distractor position '" + std::string(name) + "' (expected after_pref or interleave)");
}

DistractorInsertion insert_distractors(const SessionRecord& record, const DistractorPool& pool,
                                       std::size_t token_budget, DistractorPosition position,
                                       const Tokenizer& tokenizer, std::size_t start) {
  DistractorInsertion out{record, 0, 0};
  if (token_budget == 0) return out;
  if (pool.turns.empty()) throw InvalidArgument("distractor pool is empty but the token budget is positive");
  if (pool.max_turn_tokens(tokenizer) == 0) {
    throw InvalidArgument("every distractor pool turn has zero tokens; the budget cannot be met");
  }

  std::vector<DialogueTurn> inserted;
  for (std::size_t k = start; out.inserted_tokens < token_budget; ++k) {
    const std::size_t idx = k % pool.turns.size();
    const auto tokens = pool.turn_tokens(idx, tokenizer);
    if (tokens == 0) continue;
    auto t = pool.turns[idx];
    t.distractor = true;
    inserted.push_back(std::move(t));
    out.inserted_tokens += tokens;
  }
  out.inserted_turns = inserted.size();

  const auto& orig = record.turns;
  std::vector<DialogueTurn> merged;
  merged.reserve(orig.size() + inserted.size());
  if (position == DistractorPosition::kAfterPreference) {
    std::size_t cut = orig.size();
    for (std::size_t i = orig.size(); i-- > 0;) {
      if (orig[i].gt_delta && !orig[i].gt_delta->empty()) {
        cut = i + 1;
        break;
      }
    }
    merged.insert(merged.end(), orig.begin(), orig.begin() + static_cast<std::ptrdiff_t>(cut));
    merged.insert(merged.end(), inserted.begin(), inserted.end());
    merged.insert(merged.end(), orig.begin() + static_cast<std::ptrdiff_t>(cut), orig.end());
  } else {
    // Gap g (after original turn g, g = 1..n) receives the distractors with
    // index j where floor(j * n / m) + 1 == g.
    const std::size_t n = orig.size();
    const std::size_t m = inserted.size();
    std::size_t j = 0;
    for (std::size_t g = 0; g < n; ++g) {
      merged.push_back(orig[g]);
      while (j < m && (j * n) / m == g) merged.push_back(inserted[j++]);
    }
  }
  out.record.turns = std::move(merged);
  return out;
}

ColdStartSelector lexical_first_selector() {
  return [](const SessionRecord&, const std::vector<AttributeAssertion>& candidates) {
    return *std::min_element(candidates.begin(), candidates.end(),
                             [](const AttributeAssertion& a, const AttributeAssertion& b) { return a.key() < b.key(); });
  };
}

QuestionGenerator template_question_generator(const ProfileTaxonomy& taxonomy) {
  return [&taxonomy](const SessionRecord& record, const AttributeAssertion& chosen) {
    const auto chain = taxonomy.display_chain(chosen.path);
    const std::string category = chain.empty() ? chosen.normalized_path() : chain.back();
    GeneratedQuestion g;
    if (!trim(record.theme).empty()) {
      g.question = "I'm looking for " + trim(record.theme) + " recommendations. What would you suggest for me?";
    } else {
      g.question = "Can you give me a recommendation related to " + to_lower(category) + "?";
    }
    g.explanation = "A good answer depends on the user's " + to_lower(category) + ": " + chosen.value + ".";
    return g;
  };
}

UnseenRecord build_unseen(const SessionRecord& record, const ColdStartSelector& selector,
                          const QuestionGenerator& question_gen) {
  const auto candidates = profile_diff(record.gt_profile, record.inferable_view());
  if (candidates.empty()) throw NoCandidateError(record.id);

  AttributeAssertion chosen;
  GeneratedQuestion generated;
  try {
    chosen = selector(record, candidates);
    generated = question_gen(record, chosen);
  } catch (const std::exception& e) {
    throw Error("record '" + record.id + "': " + e.what());
  }
  const bool valid = std::any_of(candidates.begin(), candidates.end(),
                                 [&](const AttributeAssertion& c) { return c.key() == chosen.key(); });
  if (!valid) {
    throw Error("record '" + record.id + "': selector chose " + chosen.normalized_path() +
                ", which is not a cold-start candidate");
  }
  if (trim(generated.question).empty()) throw Error("record '" + record.id + "': generated question is empty");

  UnseenRecord out;
  out.session = record;
  out.session.format = CorpusFormat::kUnseen;
  out.session.final_question = generated.question;
  out.session.explanation = generated.explanation;
  out.session.cold_start_preference = chosen;
  out.cold_start_preference = std::move(chosen);
  out.question = std::move(generated.question);
  out.explanation = std::move(generated.explanation);
  return out;
}

std::pair<std::vector<SessionRecord>, std::vector<SessionRecord>> split_corpus(std::vector<SessionRecord> records,
                                                                               double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split ratio must be in (0, 1)");
  // Explicit Fisher-Yates so the permutation does not depend on the
  // standard library's distribution implementation.
  std::mt19937_64 rng(seed);
  for (std::size_t i = records.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(records[i - 1], records[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(records.size())));
  std::vector<SessionRecord> train(std::make_move_iterator(records.begin()),
                                   std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>(n_train)));
  std::vector<SessionRecord> test(std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>(n_train)),
                                  std::make_move_iterator(records.end()));
  return {std::move(train), std::move(test)};
}

}  // namespace persona
