#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace persona {

/// AL(1..K): per-turn mean judge score in [0, 100] and how many cases fed it.
struct AlignmentSeries {
  std::vector<double> values;
  std::vector<std::size_t> counts;

  double average() const;
};

/// Scores indexed [case][turn]. Rows may be ragged; absent or nullopt cells
/// are excluded from that turn's mean. Throws InvalidArgument on an empty
/// matrix, an out-of-range score, or a turn with no scores at all.
using ScoreMatrix = std::vector<std::vector<std::optional<double>>>;
AlignmentSeries alignment_level(const ScoreMatrix& scores);

struct RegressionResult {
  double slope = 0.0;      // IR
  double intercept = 0.0;  // a
  std::optional<double> r_squared;  // empty when degenerate
  bool degenerate = false;          // the series has zero variance
};

/// Least-squares fit of values[k-1] on k = 1..K. Requires K >= 2.
RegressionResult improvement_rate(std::span<const double> series);

/// Prefix min-max normalization: (AL(k) - min_{i<=k}) / (max_{i<=k} - min_{i<=k}),
/// 0 where the prefix range is zero (always at k = 1).
std::vector<double> normalize_series(std::span<const double> series);

/// improvement_rate of normalize_series: slope is N-IR, r_squared is N-R^2.
RegressionResult normalized_metrics(std::span<const double> series);

/// Percentage of true verdicts. Throws on empty input.
double accuracy(const std::vector<bool>& verdicts);

inline constexpr std::array<std::string_view, 7> kRubricDimensions = {
    "Attribute Accuracy", "Completeness", "No Hallucination", "Personality Alignment",
    "Overall Similarity", "Consistency",  "Safety"};

struct RubricScore {
  // Order follows kRubricDimensions. Each value is 0, 0.5, or 1.
  std::array<double, 7> values{};

  double attribute_accuracy() const { return values[0]; }
  double completeness() const { return values[1]; }
  double no_hallucination() const { return values[2]; }
  double personality_alignment() const { return values[3]; }
  double overall_similarity() const { return values[4]; }
  double consistency() const { return values[5]; }
  double safety() const { return values[6]; }
  double mean() const;
};

/// Parses seven `Dimension: level` lines (levels poor/partial/excellent,
/// case-insensitive; dimension names match with case, spaces, underscores and
/// hyphens ignored). Throws ParseError naming the dimension on a missing,
/// unknown-level, or conflicting entry.
RubricScore rubric_score(std::string_view judge_output);

struct KappaInput {
  std::vector<int> rater1;
  std::vector<int> rater2;
  int categories = 5;  // ratings are 1..categories
};

/// Cohen's kappa. P_e == 1 (both raters constant and equal) yields 1.
double cohen_kappa(const KappaInput& input);

struct MetricsReport {
  AlignmentSeries series;
  RegressionResult raw;
  std::vector<double> normalized;
  RegressionResult norm;
  std::optional<double> accuracy;
};

MetricsReport compute_metrics(const AlignmentSeries& series, std::optional<double> accuracy = std::nullopt);

nlohmann::json to_json(const MetricsReport& report);

/// One header line and one data row laid out like a results table:
/// label, k=1..k=K, Average, IR, N-IR, R2, N-R2.
std::string metrics_csv(const MetricsReport& report, std::string_view label);

/// Lines of "k,AL" pairs for external plotting.
std::string plot_data_csv(const AlignmentSeries& series);

}  // namespace persona
