#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/taxonomy.hpp"

namespace persona {

/// (session i, turn n). Both are 1-based once stamped onto a profile; a
/// delta fresh out of the parser carries {0, 0}.
struct Provenance {
  std::uint32_t session = 0;
  std::uint32_t turn = 0;

  auto operator<=>(const Provenance&) const = default;
  bool stamped() const noexcept { return session >= 1 && turn >= 1; }
};

/// Identity of an assertion for set operations: normalized path plus
/// normalized value.
struct AssertionKey {
  std::string path;
  std::string value;

  auto operator<=>(const AssertionKey&) const = default;
};

struct AttributeAssertion {
  CategoryPath path;
  std::string value;
  Provenance provenance;

  AttributeAssertion() = default;
  AttributeAssertion(CategoryPath p, std::string v, Provenance prov = {})
      : path(std::move(p)), value(std::move(v)), provenance(prov) {}
  AttributeAssertion(std::string_view p, std::string v, Provenance prov = {})
      : path(path_from_string(p)), value(std::move(v)), provenance(prov) {}

  std::string normalized_path() const;
  std::string normalized_value() const;
  AssertionKey key() const { return {normalized_path(), normalized_value()}; }

  bool operator==(const AttributeAssertion&) const = default;
};

/// One turn's action: what the policy inferred from a single user message.
class InferredDelta {
 public:
  InferredDelta() = default;

  /// Adds unless an assertion with the same key is already present.
  bool add_assertion(AttributeAssertion assertion);
  bool add_trait(std::string_view trait);
  bool add_classification(std::string_view category_id);

  const std::vector<AttributeAssertion>& assertions() const noexcept { return assertions_; }
  const std::set<std::string>& personality_traits() const noexcept { return traits_; }
  const std::set<std::string>& classification() const noexcept { return classification_; }

  bool empty() const noexcept {
    return assertions_.empty() && traits_.empty() && classification_.empty();
  }

  /// Keys of assertions plus personality traits (traits use the reserved
  /// path "#personality").
  std::set<AssertionKey> keys() const;

  /// Copy with every assertion's provenance set to `prov`.
  InferredDelta stamped(Provenance prov) const;

  bool operator==(const InferredDelta&) const = default;

 private:
  std::vector<AttributeAssertion> assertions_;
  std::set<std::string> traits_;
  std::set<std::string> classification_;
};

inline constexpr std::string_view kTraitPath = "#personality";

/// Current-view of a profile: one assertion per normalized path and the
/// accumulated personality-trait set. Also used for ground-truth personas and
/// frozen session snapshots.
struct ProfileView {
  std::map<std::string, AttributeAssertion> assertions;
  std::set<std::string> traits;

  bool empty() const noexcept { return assertions.empty() && traits.empty(); }
  std::set<AssertionKey> keys() const;
  const AttributeAssertion* find(std::string_view normalized_path) const;

  /// Folds a delta in: later assertions override earlier ones path-by-path,
  /// traits accumulate.
  void fold(const InferredDelta& delta);

  bool operator==(const ProfileView&) const = default;
};

using ProfileSnapshot = ProfileView;

struct LogEntry {
  Provenance provenance;
  InferredDelta delta;

  bool operator==(const LogEntry&) const = default;
};

class UserProfile;
UserProfile deserialize_profile(std::string_view document, const ProfileTaxonomy* taxonomy);

/// Lifelong user profile: append-only delta log, the current view (always
/// the in-order fold of the log), and immutable per-session snapshots.
///
/// Single-owner mutable state; pass snapshots or views to concurrent readers.
class UserProfile {
 public:
  UserProfile() = default;

  /// Appends `delta` to the log and folds it into the current view. Every
  /// assertion path must resolve in `taxonomy`; provenance must be stamped and
  /// strictly later than the previous log entry.
  ///
  /// Nothing is modified if validation fails.
  void apply_delta(const InferredDelta& delta, Provenance provenance, const ProfileTaxonomy& taxonomy);

  /// Freezes the current view under `session`. Throws StateError if that
  /// session already has a snapshot.
  const ProfileSnapshot& snapshot(std::uint32_t session);

  const std::vector<LogEntry>& log() const noexcept { return log_; }
  const ProfileView& current() const noexcept { return current_; }
  const std::map<std::uint32_t, ProfileSnapshot>& snapshots() const noexcept { return snapshots_; }

  /// Folds the log from an empty view. Equals current() by construction; kept
  /// as an independent check for deserialization and tests.
  ProfileView replay() const;

  bool operator==(const UserProfile&) const = default;

 private:
  friend UserProfile deserialize_profile(std::string_view, const ProfileTaxonomy*);

  std::vector<LogEntry> log_;
  ProfileView current_;
  std::map<std::uint32_t, ProfileSnapshot> snapshots_;
};

/// Assertions of `gt` whose (path, value) key is absent from `inferred`.
/// Traits are not part of the diff.
std::vector<AttributeAssertion> profile_diff(const ProfileView& gt, const ProfileView& inferred);

/// Score in [0, 1] of how relevant an assertion is to a query.
using RelevanceFunction = std::function<double(const AttributeAssertion&, std::string_view query)>;

inline constexpr double kDefaultRelevanceThreshold = 0.5;

struct ScoredAssertion {
  AttributeAssertion assertion;
  double score = 0.0;
};

/// Assertions scoring >= threshold, by descending score, ties broken by
/// (path, provenance).
std::vector<ScoredAssertion> lookup_relevant(const ProfileView& view, std::string_view query,
                                             const RelevanceFunction& relevance,
                                             double threshold = kDefaultRelevanceThreshold);

/// Keyword-overlap relevance: counts query keyword tokens shared with the
/// assertion's category display names, category keywords, and value. Score is
/// 1 - 2^-overlap, so one shared keyword scores exactly 0.5 and no score
/// ever reaches 1.
RelevanceFunction lexical_relevance(const ProfileTaxonomy& taxonomy);

std::size_t lexical_overlap(const ProfileTaxonomy& taxonomy, const AttributeAssertion& assertion,
                            std::string_view query);

// JSON forms. Schemas are documented in docs/formats.md.
nlohmann::json to_json(const Provenance& p);
nlohmann::json to_json(const AttributeAssertion& a);
nlohmann::json to_json(const InferredDelta& d);
nlohmann::json to_json(const ProfileView& v);
nlohmann::json to_json(const UserProfile& p);

Provenance provenance_from_json(const nlohmann::json& j);
AttributeAssertion assertion_from_json(const nlohmann::json& j);
InferredDelta delta_from_json(const nlohmann::json& j);
ProfileView view_from_json(const nlohmann::json& j);

/// Object-form assertions, `{"interests/music": "jazz", ...}`, as used in the
/// corpus schemas. A value may also be an array of strings.
InferredDelta delta_from_path_map(const nlohmann::json& j);

std::string serialize_profile(const UserProfile& profile);

/// Rebuilds a profile from `serialize_profile` output. Throws ParseError on
/// malformed JSON (with position) or when `current` disagrees with a replay of
/// `log`. If `taxonomy` is given, every path is validated against it.
UserProfile deserialize_profile(std::string_view document, const ProfileTaxonomy* taxonomy = nullptr);

}  // namespace persona
