#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "persona/backend.hpp"
#include "persona/dialogue.hpp"
#include "persona/taxonomy.hpp"

namespace persona {

/// Deterministic stand-ins for every backend role. Each is a pure function of
/// the request (and its constructor arguments), so identical requests always
/// get identical replies and runs are reproducible.

/// Policy that knows the corpus: for a user message that occurs in `records`
/// it replies with that turn's ground-truth delta in tagged form. With
/// `drop_rate` > 0 each assertion and trait is independently omitted with
/// that probability, and with `block_drop_rate` > 0 each block's closing tag
/// is omitted with that probability; both decisions hash (seed, message,
/// item), never a shared RNG. Unknown messages get three empty blocks.
class OraclePolicyBackend final : public CompletionBackend {
 public:
  OraclePolicyBackend(const std::vector<SessionRecord>& records, double drop_rate = 0.0,
                      double block_drop_rate = 0.0, std::uint64_t seed = 0);
  CompletionResult complete(const CompletionRequest& request) override;

 private:
  std::map<std::string, InferredDelta> by_message_;
  double drop_rate_;
  double block_drop_rate_;
  std::uint64_t seed_;
};

/// Policy with no corpus knowledge: finds first-person cue phrases ("I love",
/// "I'm allergic to", "I live in", ...) and files the rest of the sentence
/// under the taxonomy node whose keywords best match it.
class KeywordPolicyBackend final : public CompletionBackend {
 public:
  explicit KeywordPolicyBackend(const ProfileTaxonomy& taxonomy);
  CompletionResult complete(const CompletionRequest& request) override;

  InferredDelta extract(std::string_view message) const;

 private:
  const ProfileTaxonomy* taxonomy_;
};

/// Generator role: template replies for response generation (embeds the
/// question, p*, and every relevant value verbatim), proactive queries, and
/// unseen-question generation.
class TemplateGeneratorBackend final : public CompletionBackend {
 public:
  explicit TemplateGeneratorBackend(const ProfileTaxonomy& taxonomy);
  CompletionResult complete(const CompletionRequest& request) override;

 private:
  const ProfileTaxonomy* taxonomy_;
};

/// Judge role:
///  - criteria: RuleBasedJudge over the structured attributes
///  - alignment: round(100 * persona values found verbatim in the response /
///    persona values); a persona without assertions scores 0
///  - rubric: set-overlap levels per dimension
///  - select: the lexically first candidate
class RuleJudgeBackend final : public CompletionBackend {
 public:
  CompletionResult complete(const CompletionRequest& request) override;

  static int alignment_score(const ProfileView& persona, std::string_view response);
};

/// Uniform in [0, 1) from a 64-bit FNV-1a hash of seed and parts.
double stable_unit(std::uint64_t seed, std::initializer_list<std::string_view> parts);

}  // namespace persona
