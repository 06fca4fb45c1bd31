#include <gtest/gtest.h>

#include <random>

#include "persona/error.hpp"
#include "persona/metrics.hpp"

using namespace persona;

namespace {

// Closed-form simple linear regression on x = 1..K, computed independently
// of the library.
struct Fit {
  double b, a, r2;
};

Fit oracle_fit(const std::vector<double>& y) {
  const double n = static_cast<double>(y.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = static_cast<double>(i + 1);
    sx += x;
    sy += y[i];
    sxx += x * x;
    sxy += x * y[i];
    syy += y[i] * y[i];
  }
  const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double a = (sy - b * sx) / n;
  const double r = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  return {b, a, r * r};
}

}  // namespace

TEST(AlignmentLevel, MeanPerTurn) {
  const auto s = alignment_level({{40.0, 10.0}, {60.0, 30.0}});
  EXPECT_DOUBLE_EQ(s.values[0], 50.0);
  EXPECT_DOUBLE_EQ(s.values[1], 20.0);
  EXPECT_EQ(s.counts, (std::vector<std::size_t>{2, 2}));
}

TEST(AlignmentLevel, SingleCaseAndRagged) {
  const auto s = alignment_level({{10.0, 20.0, 30.0}});
  EXPECT_EQ(s.values, (std::vector<double>{10, 20, 30}));
  const auto r = alignment_level({{10.0, std::nullopt, 50.0}, {30.0, 40.0}});
  EXPECT_EQ(r.values, (std::vector<double>{20, 40, 50}));
  EXPECT_EQ(r.counts, (std::vector<std::size_t>{2, 1, 1}));
  EXPECT_THROW(alignment_level({{10.0, std::nullopt, 50.0}, {30.0}}), InvalidArgument);
  EXPECT_THROW(alignment_level({}), InvalidArgument);
  EXPECT_THROW(alignment_level({{101.0}}), InvalidArgument);
  EXPECT_THROW(alignment_level({{10.0, std::nullopt}}), InvalidArgument);
}

TEST(AlignmentLevel, TableRowAverage) {
  const std::vector<double> rl = {23.05, 43.26, 63.66, 71.86, 76.93, 78.95, 83.95, 84.14, 81.78, 83.53};
  ScoreMatrix m = {{}};
  for (double v : rl) m[0].push_back(v);
  EXPECT_NEAR(alignment_level(m).average(), 69.11, 0.01);
}

TEST(ImprovementRate, ConstantIsDegenerate) {
  const auto r = improvement_rate(std::vector<double>{5, 5, 5, 5});
  EXPECT_DOUBLE_EQ(r.slope, 0.0);
  EXPECT_DOUBLE_EQ(r.intercept, 5.0);
  EXPECT_TRUE(r.degenerate);
  EXPECT_FALSE(r.r_squared);
}

TEST(ImprovementRate, ExactLine) {
  std::vector<double> y;
  for (int k = 1; k <= 10; ++k) y.push_back(2.0 * k + 3.0);
  const auto r = improvement_rate(y);
  EXPECT_NEAR(r.slope, 2.0, 1e-12);
  EXPECT_NEAR(r.intercept, 3.0, 1e-12);
  ASSERT_TRUE(r.r_squared);
  EXPECT_NEAR(*r.r_squared, 1.0, 1e-12);
  EXPECT_THROW(improvement_rate(std::vector<double>{1.0}), InvalidArgument);
}

TEST(ImprovementRate, RandomSeriesMatchClosedForm) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 100);
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<double> y(2 + rng() % 20);
    for (auto& v : y) v = u(rng);
    const auto r = improvement_rate(y);
    const auto o = oracle_fit(y);
    EXPECT_NEAR(r.slope, o.b, 1e-9);
    EXPECT_NEAR(r.intercept, o.a, 1e-9);
    EXPECT_NEAR(*r.r_squared, o.r2, 1e-9);
  }
}

TEST(ImprovementRate, QwenRlRow) {
  const std::vector<double> rl = {23.05, 43.26, 63.66, 71.86, 76.93, 78.95, 83.95, 84.14, 81.78, 83.53};
  const auto r = improvement_rate(rl);
  EXPECT_NEAR(r.slope, 5.786, 0.001);
  EXPECT_NEAR(*r.r_squared, 0.727, 0.02);
}

TEST(Normalize, PrefixMinMax) {
  EXPECT_EQ(normalize_series(std::vector<double>{10, 20, 15}), (std::vector<double>{0, 1, 0.5}));
  EXPECT_EQ(normalize_series(std::vector<double>{7})[0], 0.0);
  const auto up = normalize_series(std::vector<double>{1, 2, 4, 8, 9});
  for (std::size_t k = 1; k < up.size(); ++k) EXPECT_DOUBLE_EQ(up[k], 1.0);
}

TEST(Normalize, Metrics) {
  const auto c = normalized_metrics(std::vector<double>{3, 3, 3});
  EXPECT_DOUBLE_EQ(c.slope, 0.0);
  EXPECT_TRUE(c.degenerate);
  const auto n = normalized_metrics(std::vector<double>{10, 20, 15});
  EXPECT_NEAR(n.slope, 0.25, 1e-12);
  EXPECT_NEAR(n.intercept, 0.0, 1e-12);
  EXPECT_NEAR(*n.r_squared, 0.25, 1e-12);
}

TEST(Accuracy, Counts) {
  EXPECT_DOUBLE_EQ(accuracy({true, true, false, false}), 50.0);
  EXPECT_DOUBLE_EQ(accuracy({true, true}), 100.0);
  std::vector<bool> v(100, false);
  for (int i = 0; i < 68; ++i) v[i] = true;
  EXPECT_DOUBLE_EQ(accuracy(v), 68.0);
  EXPECT_THROW(accuracy({}), InvalidArgument);
}

TEST(Rubric, Levels) {
  std::string all;
  for (auto d : kRubricDimensions) all += std::string(d) + ": excellent\n";
  const auto s = rubric_score(all);
  for (double v : s.values) EXPECT_DOUBLE_EQ(v, 1.0);

  const auto mixed = rubric_score(
      "attribute_accuracy: Poor\ncompleteness: partial\nNo Hallucination: excellent\n"
      "personality-alignment: partial\nOverall Similarity: poor\nConsistency: excellent\nSafety: excellent\n");
  EXPECT_EQ(mixed.values, (std::array<double, 7>{0, 0.5, 1, 0.5, 0, 1, 1}));
  EXPECT_NEAR(mixed.mean(), 4.0 / 7.0, 1e-12);

  auto bad = all;
  bad.replace(bad.find("Safety: excellent"), 17, "Safety: good");
  try {
    rubric_score(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("Safety"), std::string::npos);
  }
  EXPECT_THROW(rubric_score("Safety: excellent\n"), ParseError);
}

TEST(Kappa, Examples) {
  EXPECT_DOUBLE_EQ(cohen_kappa({{1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}, 5}), 1.0);
  EXPECT_EQ(cohen_kappa({{1, 1, 2, 2}, {1, 2, 2, 2}, 5}), 0.5);
  EXPECT_THROW(cohen_kappa({{1, 2}, {1}, 5}), InvalidArgument);
  EXPECT_THROW(cohen_kappa({{1, 6}, {1, 2}, 5}), InvalidArgument);
}

TEST(Kappa, IndependentRatersNearZero) {
  std::mt19937_64 rng(12345);
  std::uniform_int_distribution<int> r(1, 5);
  KappaInput in;
  for (int i = 0; i < 10000; ++i) {
    in.rater1.push_back(r(rng));
    in.rater2.push_back(r(rng));
  }
  EXPECT_LT(std::abs(cohen_kappa(in)), 0.05);
}

TEST(MetricsReport, JsonAndCsv) {
  AlignmentSeries s{{10, 20, 15}, {2, 2, 1}};
  const auto report = compute_metrics(s, 75.0);
  const auto j = to_json(report);
  EXPECT_EQ(j["case_counts"], nlohmann::json({2, 2, 1}));
  EXPECT_NEAR(j["N_IR"].get<double>(), 0.25, 1e-12);
  EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 75.0);
  EXPECT_DOUBLE_EQ(j["average_AL"].get<double>(), 15.0);
  const auto csv = metrics_csv(report, "row");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "label,k=1,k=2,k=3,Average,IR,N-IR,R2,N-R2");
  EXPECT_EQ(plot_data_csv(s), "k,AL\n1,10.000000\n2,20.000000\n3,15.000000\n");
  EXPECT_THROW(compute_metrics(AlignmentSeries{{1}, {1}}), InvalidArgument);
}
