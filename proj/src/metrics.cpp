#include "persona/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "persona/error.hpp"
#include "persona/text.hpp"

namespace persona {

double AlignmentSeries::average() const {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

AlignmentSeries alignment_level(const ScoreMatrix& scores) {
  std::size_t turns = 0;
  for (const auto& row : scores) turns = std::max(turns, row.size());
  if (scores.empty() || turns == 0) throw InvalidArgument("alignment_level: empty score matrix");

  AlignmentSeries s;
  s.values.assign(turns, 0.0);
  s.counts.assign(turns, 0);
  for (std::size_t c = 0; c < scores.size(); ++c) {
    for (std::size_t k = 0; k < scores[c].size(); ++k) {
      if (!scores[c][k]) continue;
      const double v = *scores[c][k];
      if (!(v >= 0.0 && v <= 100.0)) {
        throw InvalidArgument("alignment_level: score " + std::to_string(v) + " at case " + std::to_string(c) +
                              ", turn " + std::to_string(k + 1) + " is outside [0, 100]");
      }
      s.values[k] += v;
      ++s.counts[k];
    }
  }
  for (std::size_t k = 0; k < turns; ++k) {
    if (s.counts[k] == 0) throw InvalidArgument("alignment_level: turn " + std::to_string(k + 1) + " has no scores");
    s.values[k] /= static_cast<double>(s.counts[k]);
  }
  return s;
}

RegressionResult improvement_rate(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 2) throw InvalidArgument("improvement_rate: need at least two turns");
  const double dn = static_cast<double>(n);
  const double mean_k = (dn + 1.0) / 2.0;
  const double mean_y = std::accumulate(series.begin(), series.end(), 0.0) / dn;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dk = static_cast<double>(i + 1) - mean_k;
    const double dy = series[i] - mean_y;
    sxy += dk * dy;
    sxx += dk * dk;
    syy += dy * dy;
  }
  RegressionResult r;
  r.slope = sxy / sxx;
  r.intercept = mean_y - r.slope * mean_k;
  if (syy == 0.0) {
    r.slope = 0.0;
    r.intercept = mean_y;
    r.degenerate = true;
    return r;
  }
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = series[i] - (r.slope * static_cast<double>(i + 1) + r.intercept);
    ss_res += e * e;
  }
  r.r_squared = 1.0 - ss_res / syy;
  return r;
}

std::vector<double> normalize_series(std::span<const double> series) {
  std::vector<double> out;
  out.reserve(series.size());
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (k == 0) {
      lo = hi = series[0];
    } else {
      lo = std::min(lo, series[k]);
      hi = std::max(hi, series[k]);
    }
    out.push_back(hi == lo ? 0.0 : (series[k] - lo) / (hi - lo));
  }
  return out;
}

RegressionResult normalized_metrics(std::span<const double> series) {
  const auto normalized = normalize_series(series);
  return improvement_rate(normalized);
}

double accuracy(const std::vector<bool>& verdicts) {
  if (verdicts.empty()) throw InvalidArgument("accuracy: no verdicts");
  const auto hits = std::count(verdicts.begin(), verdicts.end(), true);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(verdicts.size());
}

double RubricScore::mean() const {
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

namespace {

std::string squash(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' || c == '_' || c == '-' || c == '*' || c == '\t') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

RubricScore rubric_score(std::string_view judge_output) {
  std::array<std::optional<double>, 7> seen{};
  for (const auto& raw_line : split(judge_output, '\n')) {
    const auto line = trim(raw_line);
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const auto name = squash(line.substr(0, colon));
    std::size_t dim = kRubricDimensions.size();
    for (std::size_t d = 0; d < kRubricDimensions.size(); ++d) {
      if (squash(kRubricDimensions[d]) == name) dim = d;
    }
    if (dim == kRubricDimensions.size()) continue;

    auto level_text = to_lower(trim(line.substr(colon + 1)));
    // Allow an annotated level such as "partial (0.5)".
    if (const auto cut = level_text.find_first_of(" (.,;"); cut != std::string::npos) level_text.resize(cut);
    double level = 0.0;
    if (level_text == "poor") {
      level = 0.0;
    } else if (level_text == "partial") {
      level = 0.5;
    } else if (level_text == "excellent") {
      level = 1.0;
    } else {
      throw ParseError("rubric dimension '" + std::string(kRubricDimensions[dim]) + "' has unknown level '" +
                       trim(line.substr(colon + 1)) + "'");
    }
    if (seen[dim] && *seen[dim] != level) {
      throw ParseError("rubric dimension '" + std::string(kRubricDimensions[dim]) + "' appears with conflicting levels");
    }
    seen[dim] = level;
  }
  RubricScore score;
  for (std::size_t d = 0; d < seen.size(); ++d) {
    if (!seen[d]) throw ParseError("rubric dimension '" + std::string(kRubricDimensions[d]) + "' is missing");
    score.values[d] = *seen[d];
  }
  return score;
}

double cohen_kappa(const KappaInput& input) {
  const auto& a = input.rater1;
  const auto& b = input.rater2;
  if (a.size() != b.size()) {
    throw InvalidArgument("cohen_kappa: rater vectors differ in length (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw InvalidArgument("cohen_kappa: no ratings");
  if (input.categories < 1) throw InvalidArgument("cohen_kappa: need at least one category");
  const auto k = static_cast<std::size_t>(input.categories);
  std::vector<double> pa(k, 0.0);
  std::vector<double> pb(k, 0.0);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 1 || a[i] > input.categories || b[i] < 1 || b[i] > input.categories) {
      throw InvalidArgument("cohen_kappa: rating at index " + std::to_string(i) + " is outside 1.." +
                            std::to_string(input.categories));
    }
    pa[static_cast<std::size_t>(a[i] - 1)] += 1.0;
    pb[static_cast<std::size_t>(b[i] - 1)] += 1.0;
    if (a[i] == b[i]) ++agree;
  }
  const double n = static_cast<double>(a.size());
  const double po = static_cast<double>(agree) / n;
  double pe = 0.0;
  for (std::size_t c = 0; c < k; ++c) pe += (pa[c] / n) * (pb[c] / n);
  if (pe >= 1.0) return 1.0;
  return (po - pe) / (1.0 - pe);
}

MetricsReport compute_metrics(const AlignmentSeries& series, std::optional<double> acc) {
  MetricsReport r;
  r.series = series;
  r.raw = improvement_rate(series.values);
  r.normalized = normalize_series(series.values);
  r.norm = improvement_rate(r.normalized);
  r.accuracy = acc;
  return r;
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

nlohmann::json to_json(const MetricsReport& r) {
  return {{"per_turn_AL", r.series.values},
          {"case_counts", r.series.counts},
          {"average_AL", r.series.average()},
          {"IR", r.raw.slope},
          {"a", r.raw.intercept},
          {"R2", optional_number(r.raw.r_squared)},
          {"N_AL", r.normalized},
          {"N_IR", r.norm.slope},
          {"N_R2", optional_number(r.norm.r_squared)},
          {"accuracy", optional_number(r.accuracy)},
          {"degenerate_flags", {{"raw", r.raw.degenerate}, {"normalized", r.norm.degenerate}}}};
}

std::string metrics_csv(const MetricsReport& r, std::string_view label) {
  std::ostringstream out;
  out << "label";
  for (std::size_t k = 1; k <= r.series.values.size(); ++k) out << ",k=" << k;
  out << ",Average,IR,N-IR,R2,N-R2\n";
  out << label;
  for (double v : r.series.values) out << "," << fixed(v, 2);
  out << "," << fixed(r.series.average(), 2) << "," << fixed(r.raw.slope, 3) << "," << fixed(r.norm.slope, 3) << ","
      << (r.raw.r_squared ? fixed(*r.raw.r_squared, 3) : "") << ","
      << (r.norm.r_squared ? fixed(*r.norm.r_squared, 3) : "") << "\n";
  return out.str();
}

std::string plot_data_csv(const AlignmentSeries& series) {
  std::ostringstream out;
  out << "k,AL\n";
  for (std::size_t k = 0; k < series.values.size(); ++k) out << (k + 1) << "," << fixed(series.values[k], 6) << "\n";
  return out.str();
}

}  // namespace persona
