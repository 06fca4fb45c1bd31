#include "persona/profile.hpp"

#include <algorithm>
#include <cmath>

#include "json_util.hpp"
#include "persona/error.hpp"
#include "persona/text.hpp"

namespace persona {

namespace {

CategoryPath normalize_path(CategoryPath path) {
  for (auto& segment : path) segment = to_lower(trim(segment));
  return path;
}

}  // namespace

std::string AttributeAssertion::normalized_path() const { return path_to_string(normalize_path(path)); }

std::string AttributeAssertion::normalized_value() const { return normalize_text(value); }

// ---------------------------------------------------------------------------
// InferredDelta

bool InferredDelta::add_assertion(AttributeAssertion assertion) {
  assertion.path = normalize_path(std::move(assertion.path));
  assertion.value = normalize_text(assertion.value);
  if (assertion.path.empty() || assertion.value.empty()) return false;
  const auto key = assertion.key();
  const bool seen = std::any_of(assertions_.begin(), assertions_.end(),
                                [&](const AttributeAssertion& a) { return a.key() == key; });
  if (seen) return false;
  assertions_.push_back(std::move(assertion));
  return true;
}

bool InferredDelta::add_trait(std::string_view trait) {
  auto t = normalize_text(trait);
  if (t.empty()) return false;
  return traits_.insert(std::move(t)).second;
}

bool InferredDelta::add_classification(std::string_view category_id) {
  auto id = to_lower(trim(category_id));
  if (id.empty()) return false;
  return classification_.insert(std::move(id)).second;
}

std::set<AssertionKey> InferredDelta::keys() const {
  std::set<AssertionKey> out;
  for (const auto& a : assertions_) out.insert(a.key());
  for (const auto& t : traits_) out.insert({std::string(kTraitPath), t});
  return out;
}

InferredDelta InferredDelta::stamped(Provenance prov) const {
  InferredDelta copy = *this;
  for (auto& a : copy.assertions_) a.provenance = prov;
  return copy;
}

// ---------------------------------------------------------------------------
// ProfileView

std::set<AssertionKey> ProfileView::keys() const {
  std::set<AssertionKey> out;
  for (const auto& [path, a] : assertions) out.insert(a.key());
  for (const auto& t : traits) out.insert({std::string(kTraitPath), t});
  return out;
}

const AttributeAssertion* ProfileView::find(std::string_view normalized_path) const {
  const auto it = assertions.find(std::string(normalized_path));
  return it == assertions.end() ? nullptr : &it->second;
}

void ProfileView::fold(const InferredDelta& delta) {
  for (const auto& a : delta.assertions()) assertions.insert_or_assign(a.normalized_path(), a);
  traits.insert(delta.personality_traits().begin(), delta.personality_traits().end());
}

// ---------------------------------------------------------------------------
// UserProfile

void UserProfile::apply_delta(const InferredDelta& delta, Provenance provenance,
                              const ProfileTaxonomy& taxonomy) {
  if (!provenance.stamped()) {
    throw InvalidArgument("provenance indices must be >= 1");
  }
  if (!log_.empty() && !(log_.back().provenance < provenance)) {
    throw StateError("provenance (" + std::to_string(provenance.session) + "," +
                     std::to_string(provenance.turn) + ") is not after the last log entry");
  }
  for (const auto& a : delta.assertions()) {
    if (!taxonomy.contains(a.path)) throw UnknownPathError(a.normalized_path());
  }
  auto stamped = delta.stamped(provenance);
  current_.fold(stamped);
  log_.push_back({provenance, std::move(stamped)});
}

const ProfileSnapshot& UserProfile::snapshot(std::uint32_t session) {
  if (session < 1) throw InvalidArgument("session index must be >= 1");
  auto [it, inserted] = snapshots_.try_emplace(session, current_);
  if (!inserted) throw StateError("session " + std::to_string(session) + " already has a snapshot");
  return it->second;
}

ProfileView UserProfile::replay() const {
  ProfileView view;
  for (const auto& entry : log_) view.fold(entry.delta);
  return view;
}

// ---------------------------------------------------------------------------
// Set operations and retrieval

std::vector<AttributeAssertion> profile_diff(const ProfileView& gt, const ProfileView& inferred) {
  const auto known = inferred.keys();
  std::vector<AttributeAssertion> out;
  for (const auto& [path, a] : gt.assertions) {
    if (known.count(a.key()) == 0) out.push_back(a);
  }
  return out;
}

std::vector<ScoredAssertion> lookup_relevant(const ProfileView& view, std::string_view query,
                                             const RelevanceFunction& relevance, double threshold) {
  std::vector<ScoredAssertion> hits;
  for (const auto& [path, a] : view.assertions) {
    const double score = relevance(a, query);
    if (score >= threshold) hits.push_back({a, score});
  }
  std::sort(hits.begin(), hits.end(), [](const ScoredAssertion& x, const ScoredAssertion& y) {
    if (x.score != y.score) return x.score > y.score;
    const auto px = x.assertion.normalized_path();
    const auto py = y.assertion.normalized_path();
    if (px != py) return px < py;
    return x.assertion.provenance < y.assertion.provenance;
  });
  return hits;
}

std::size_t lexical_overlap(const ProfileTaxonomy& taxonomy, const AttributeAssertion& assertion,
                            std::string_view query) {
  auto terms = taxonomy.lexical_terms(assertion.path);
  for (auto& t : keyword_tokens(assertion.value)) terms.push_back(std::move(t));
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

  auto q = keyword_tokens(query);
  std::sort(q.begin(), q.end());
  q.erase(std::unique(q.begin(), q.end()), q.end());

  std::vector<std::string> shared;
  std::set_intersection(terms.begin(), terms.end(), q.begin(), q.end(), std::back_inserter(shared));
  return shared.size();
}

RelevanceFunction lexical_relevance(const ProfileTaxonomy& taxonomy) {
  return [&taxonomy](const AttributeAssertion& a, std::string_view query) {
    const auto overlap = lexical_overlap(taxonomy, a, query);
    return 1.0 - std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(overlap, 1000)));
  };
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const Provenance& p) { return {{"session", p.session}, {"turn", p.turn}}; }

nlohmann::json to_json(const AttributeAssertion& a) {
  return {{"path", a.normalized_path()}, {"value", a.value}, {"provenance", to_json(a.provenance)}};
}

nlohmann::json to_json(const InferredDelta& d) {
  nlohmann::json assertions = nlohmann::json::array();
  for (const auto& a : d.assertions()) assertions.push_back(to_json(a));
  return {{"assertions", std::move(assertions)},
          {"personality_traits", d.personality_traits()},
          {"classification", d.classification()}};
}

nlohmann::json to_json(const ProfileView& v) {
  nlohmann::json assertions = nlohmann::json::object();
  for (const auto& [path, a] : v.assertions) assertions[path] = to_json(a);
  return {{"assertions", std::move(assertions)}, {"traits", v.traits}};
}

nlohmann::json to_json(const UserProfile& p) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : p.log()) log.push_back({{"provenance", to_json(e.provenance)}, {"delta", to_json(e.delta)}});
  nlohmann::json snapshots = nlohmann::json::object();
  for (const auto& [session, view] : p.snapshots()) snapshots[std::to_string(session)] = to_json(view);
  return {{"log", std::move(log)}, {"current", to_json(p.current())}, {"snapshots", std::move(snapshots)}};
}

Provenance provenance_from_json(const nlohmann::json& j) {
  if (j.is_null()) return {};
  return {detail::require_index(j, "session"), detail::require_index(j, "turn")};
}

AttributeAssertion assertion_from_json(const nlohmann::json& j) {
  AttributeAssertion a(std::string_view(detail::require_string(j, "path")),
                       normalize_text(detail::require_string(j, "value")));
  if (const auto it = j.find("provenance"); it != j.end()) a.provenance = provenance_from_json(*it);
  return a;
}

namespace {

template <typename Fn>
void for_each_string(const nlohmann::json& j, std::string_view field, Fn&& fn) {
  const auto it = j.find(field);
  if (it == j.end() || it->is_null()) return;
  if (!it->is_array()) throw ParseError("field '" + std::string(field) + "' must be an array of strings");
  for (const auto& item : *it) {
    if (!item.is_string()) throw ParseError("field '" + std::string(field) + "' must be an array of strings");
    fn(item.get<std::string>());
  }
}

}  // namespace

InferredDelta delta_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("delta must be an object");
  InferredDelta d;
  if (const auto it = j.find("assertions"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError("field 'assertions' must be an array");
    for (const auto& a : *it) d.add_assertion(assertion_from_json(a));
  }
  for_each_string(j, "personality_traits", [&](const std::string& t) { d.add_trait(t); });
  for_each_string(j, "classification", [&](const std::string& c) { d.add_classification(c); });
  return d;
}

ProfileView view_from_json(const nlohmann::json& j) {
  ProfileView v;
  const auto& assertions = detail::require(j, "assertions");
  if (!assertions.is_object()) throw ParseError("view 'assertions' must be an object");
  for (const auto& [path, aj] : assertions.items()) {
    auto a = assertion_from_json(aj);
    if (a.normalized_path() != path) {
      throw ParseError("view key '" + path + "' does not match assertion path '" + a.normalized_path() + "'");
    }
    v.assertions.emplace(path, std::move(a));
  }
  for_each_string(j, "traits", [&](const std::string& t) {
    auto n = normalize_text(t);
    if (!n.empty()) v.traits.insert(std::move(n));
  });
  return v;
}

InferredDelta delta_from_path_map(const nlohmann::json& j) {
  InferredDelta d;
  if (j.is_null()) return d;
  if (!j.is_object()) throw ParseError("profile map must be an object of path -> value");
  for (const auto& [path, value] : j.items()) {
    if (value.is_string()) {
      d.add_assertion(AttributeAssertion(std::string_view(path), value.get<std::string>()));
    } else if (value.is_array()) {
      for (const auto& v : value) {
        if (!v.is_string()) throw ParseError("profile value for '" + path + "' must be a string");
        d.add_assertion(AttributeAssertion(std::string_view(path), v.get<std::string>()));
      }
    } else {
      throw ParseError("profile value for '" + path + "' must be a string or array of strings");
    }
  }
  return d;
}

std::string serialize_profile(const UserProfile& profile) { return to_json(profile).dump(2) + "\n"; }

UserProfile deserialize_profile(std::string_view document, const ProfileTaxonomy* taxonomy) {
  const auto j = detail::parse_json(document, "profile");
  UserProfile p;
  const auto& log = detail::require(j, "log");
  if (!log.is_array()) throw ParseError("'log' must be an array");
  for (const auto& entry : log) {
    const auto prov = provenance_from_json(detail::require(entry, "provenance"));
    auto delta = delta_from_json(detail::require(entry, "delta"));
    if (!prov.stamped()) throw ParseError("log provenance indices must be >= 1");
    if (!p.log_.empty() && !(p.log_.back().provenance < prov)) throw ParseError("log provenance out of order");
    for (const auto& a : delta.assertions()) {
      if (taxonomy != nullptr && !taxonomy->contains(a.path)) throw UnknownPathError(a.normalized_path());
      if (a.provenance != prov) throw ParseError("assertion provenance disagrees with its log entry");
    }
    p.current_.fold(delta);
    p.log_.push_back({prov, std::move(delta)});
  }
  if (view_from_json(detail::require(j, "current")) != p.current_) {
    throw ParseError("'current' does not match a replay of 'log'");
  }
  const auto& snaps = detail::require(j, "snapshots");
  if (!snaps.is_object()) throw ParseError("'snapshots' must be an object");
  for (const auto& [key, view] : snaps.items()) {
    std::uint32_t session = 0;
    try {
      std::size_t used = 0;
      const auto parsed = std::stoul(key, &used);
      if (used != key.size() || parsed < 1) throw std::invalid_argument(key);
      session = static_cast<std::uint32_t>(parsed);
    } catch (const std::exception&) {
      throw ParseError("snapshot key '" + key + "' is not a session index >= 1");
    }
    p.snapshots_.emplace(session, view_from_json(view));
  }
  return p;
}

}  // namespace persona
