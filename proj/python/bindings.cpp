#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <set>
#include <string>
#include <vector>

#include "persona/engine.hpp"
#include "persona/error.hpp"
#include "persona/metrics.hpp"
#include "persona/profile.hpp"
#include "persona/reward.hpp"
#include "persona/tagged_output.hpp"
#include "persona/taxonomy.hpp"

namespace py = pybind11;
using namespace persona;

namespace {

// Structured results cross the boundary as JSON text; the Python package
// decodes them into dicts.
std::string metrics_json(const std::vector<double>& series, std::optional<double> acc) {
  AlignmentSeries s;
  s.values = series;
  s.counts.assign(series.size(), 1);
  return to_json(compute_metrics(s, acc)).dump();
}

py::dict regression(const std::vector<double>& series) {
  const auto r = improvement_rate(series);
  py::dict d;
  d["slope"] = r.slope;
  d["intercept"] = r.intercept;
  d["r_squared"] = r.r_squared ? py::object(py::float_(*r.r_squared)) : py::object(py::none());
  d["degenerate"] = r.degenerate;
  return d;
}

std::string parse_tagged(const std::string& raw) {
  const auto parsed = parse_tagged_output(raw);
  return nlohmann::json{{"delta", to_json(parsed.delta)}, {"format_report", to_json(parsed.report)}}.dump();
}

py::dict cold_start(const std::string& profile_view_json, const std::string& question, double tau) {
  const auto& taxonomy = ProfileTaxonomy::default_taxonomy();
  const auto view = view_from_json(nlohmann::json::parse(profile_view_json));
  const auto decision =
      decide_cold_start(view, question, lexical_relevance(taxonomy), tau, taxonomy_topic_extractor(taxonomy), &taxonomy);
  py::dict d;
  d["kind"] = decision.kind == DecisionKind::kAnswer ? "answer" : "query";
  std::vector<std::string> relevant;
  for (const auto& s : decision.relevant) relevant.push_back(s.assertion.normalized_path());
  d["relevant"] = relevant;
  d["topic"] = decision.topic;
  d["topic_path"] = decision.topic_path ? py::object(py::str(path_to_string(*decision.topic_path))) : py::object(py::none());
  return d;
}

}  // namespace

PYBIND11_MODULE(_persona, m) {
  m.doc() = "Native kernels of the persona inference engine";
  m.attr("__version__") = "0.1.0";

  py::register_exception<Error>(m, "PersonaError");

  m.def("improvement_rate", &regression, py::arg("series"),
        "Least-squares slope, intercept, and R^2 of a per-turn alignment series over k = 1..K.");
  m.def("normalize_series", [](const std::vector<double>& s) { return normalize_series(s); }, py::arg("series"));
  m.def("metrics_json", &metrics_json, py::arg("series"), py::arg("accuracy") = py::none());
  m.def("group_advantages", [](const std::vector<double>& r) { return group_advantages(r).advantages; },
        py::arg("rewards"));
  m.def(
      "grpo_objective",
      [](const std::vector<std::tuple<double, double, double>>& samples, double epsilon, double beta) {
        std::vector<GrpoSample> s;
        for (const auto& [ratio, advantage, kl] : samples) s.push_back({ratio, advantage, kl});
        return grpo_objective(s, epsilon, beta);
      },
      py::arg("samples"), py::arg("epsilon") = kDefaultClipEpsilon, py::arg("beta") = kDefaultKlBeta);
  m.def("kl_estimate", &kl_estimate, py::arg("logp_theta"), py::arg("logp_ref"));
  m.def(
      "f1_reward",
      [](const std::set<std::string>& pred, const std::set<std::string>& gt) { return f1_reward(pred, gt); },
      py::arg("predicted"), py::arg("ground_truth"));
  m.def("bleu_reward", [](const std::string& c, const std::string& r) { return bleu_reward(c, r); },
        py::arg("candidate"), py::arg("reference"));
  m.def(
      "cohen_kappa",
      [](const std::vector<int>& a, const std::vector<int>& b, int levels) { return cohen_kappa({a, b, levels}); },
      py::arg("rater1"), py::arg("rater2"), py::arg("levels") = 5);
  m.def("parse_tagged_output_json", &parse_tagged, py::arg("raw"));
  m.def("decide_cold_start", &cold_start, py::arg("profile_view_json"), py::arg("question"),
        py::arg("tau") = kDefaultRelevanceThreshold);
}
