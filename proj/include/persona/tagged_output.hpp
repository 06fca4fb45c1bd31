#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "persona/profile.hpp"

namespace persona {

enum class OutputBlock : std::size_t { kProfile = 0, kPersonality = 1, kClassification = 2 };

inline constexpr std::array<std::string_view, 3> kBlockTags = {"inferred_profile", "inferred_personality",
                                                               "classification"};

struct BlockStatus {
  bool present = false;     // at least one open or close tag for the block was seen
  bool well_formed = false; // exactly one open, one close, in order, no other block tag between

  bool operator==(const BlockStatus&) const = default;
};

struct FormatReport {
  std::array<BlockStatus, 3> blocks{};
  std::size_t skipped_lines = 0;  // lines inside well-formed blocks that did not parse

  const BlockStatus& operator[](OutputBlock b) const { return blocks[static_cast<std::size_t>(b)]; }
  std::size_t well_formed_count() const;
  double format_score() const { return static_cast<double>(well_formed_count()) / 3.0; }
  /// No block survived; the turn contributes an empty delta.
  bool parse_error() const { return well_formed_count() == 0; }

  bool operator==(const FormatReport&) const = default;
};

struct ParsedOutput {
  InferredDelta delta;
  FormatReport report;
};

/// Extracts the three tagged blocks from raw policy text. Total: never throws.
///
/// Block contents:
///  - inferred_profile: one `path: value` per line (a leading "- " is allowed),
///    or a JSON object mapping path to a string or array of strings.
///  - inferred_personality: traits separated by commas or newlines.
///  - classification: category ids separated by commas or newlines.
///
/// Text outside blocks is ignored. A block that is missing, repeated,
/// unclosed, or has another block's tag inside it contributes nothing and is
/// flagged in the report. A well-formed block nested inside a malformed one
/// still counts.
ParsedOutput parse_tagged_output(std::string_view raw);

/// Inverse rendering used by scripted policies and prompt examples.
std::string render_tagged_output(const InferredDelta& delta);

nlohmann::json to_json(const FormatReport& r);
FormatReport format_report_from_json(const nlohmann::json& j);

}  // namespace persona
