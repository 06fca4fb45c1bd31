#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "persona/engine.hpp"
#include "persona/metrics.hpp"
#include "persona/pipeline.hpp"
#include "persona/service.hpp"
#include "persona/text.hpp"

namespace {

namespace fs = std::filesystem;
using namespace persona;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  bool strict = false;
  std::string corpus;
  std::string format;
  std::string output_dir;
};

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig config;
  std::string path = g.config;
  if (path.empty()) {
    if (const char* env = std::getenv(std::string(kConfigEnvVar).c_str()); env != nullptr && *env != '\0') path = env;
  }
  if (!path.empty()) config = load_run_config(path);
  if (!g.corpus.empty()) config.corpus = g.corpus;
  if (!g.format.empty()) config.format = format_from_name(g.format);
  if (!g.output_dir.empty()) config.output_dir = g.output_dir;
  if (g.seed) config.seed = *g.seed;
  if (g.strict) config.strict = true;
  return config;
}

int report(const RunSummary& summary) {
  std::cout << to_json(summary).dump(2) << "\n";
  for (const auto& f : summary.fatal) std::cerr << "error: " << f << "\n";
  return summary.ok() ? 0 : 1;
}

std::vector<double> parse_series(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) {
    const auto t = trim(part);
    if (t.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw InvalidArgument("series value '" + t + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::vector<double> read_series_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const auto j = nlohmann::json::parse(buf.str());
  const auto& arr = j.is_object() ? j.at("series") : j;
  return arr.get<std::vector<double>>();
}

PersonaService* g_service = nullptr;

void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

int run_chat(const RunConfig& config) {
  const auto taxonomy = load_taxonomy(config);
  RunConfig chat_config = config;
  if (chat_config.policy.kind == "oracle") chat_config.policy.kind = "keyword";
  const auto backends = make_backends(chat_config, taxonomy, {});
  LiveSession session("chat", "local", taxonomy, backends.policy, backends.generator, config.engine);
  std::cout << "Type a message. Commands: /profile, /quit\n";
  std::string line;
  while (std::cout << (session.pending() ? "answer> " : "you> ") << std::flush && std::getline(std::cin, line)) {
    const auto text = trim(line);
    if (text.empty()) continue;
    if (text == "/quit" || text == "/exit") break;
    if (text == "/profile") {
      std::cout << to_json(session.profile().current()).dump(2) << "\n";
      continue;
    }
    try {
      const auto result = session.pending() ? session.answer(text) : session.send_message(text);
      for (const auto& a : result.delta.assertions()) {
        std::cout << "  + " << a.normalized_path() << ": " << a.value << "\n";
      }
      std::cout << (result.cold_start_query ? "agent (question)> " : "agent> ") << result.response << "\n";
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-turn personalization engine: inference, rewards, metrics, and a live session service"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "Run config JSON (default: $PERSONA_ENGINE_CONFIG)");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--jobs", g.jobs, "Worker threads for batch commands")->check(CLI::PositiveNumber);
  app.add_flag("--strict", g.strict, "Treat corpus schema errors as fatal");
  app.add_option("--corpus", g.corpus, "Corpus JSONL override");
  app.add_option("--format", g.format, "Corpus format override: aloe, prefeval, unseen");
  app.add_option("--output-dir", g.output_dir, "Output directory override");

  auto* infer = app.add_subcommand("infer", "Run the policy over every record and write trajectories");

  auto* evaluate = app.add_subcommand("evaluate", "Score trajectories and write metrics");
  std::string traj_dir;
  evaluate->add_option("--trajectories", traj_dir, "Trajectory directory (default: <output-dir>/trajectories)");

  auto* unseen = app.add_subcommand("build-unseen", "Build cold-start records from a corpus");
  std::string unseen_out;
  unseen->add_option("-o,--output", unseen_out, "Output unseen JSONL")->required();

  auto* distract = app.add_subcommand("distract", "Insert distractor turns into every record");
  std::string distract_out;
  std::optional<std::size_t> budget;
  std::string position;
  std::string pool;
  distract->add_option("-o,--output", distract_out, "Output JSONL")->required();
  distract->add_option("--budget", budget, "Token budget per record (default 3000)");
  distract->add_option("--position", position, "after_pref or interleave");
  distract->add_option("--pool", pool, "Distractor pool JSONL (default: built-in)");

  auto* metrics = app.add_subcommand("metrics", "Compute AL/IR/N-IR/R2 for a series");
  std::string series_text;
  std::string series_file;
  std::string label = "series";
  bool csv = false;
  auto* series_opt = metrics->add_option("--series", series_text, "Comma-separated AL(1..K)");
  metrics->add_option("--input", series_file, "JSON file: array or {\"series\": [...]}")->excludes(series_opt);
  metrics->add_option("--label", label, "Row label for CSV output");
  metrics->add_flag("--csv", csv, "Print the CSV table row instead of JSON");

  auto* chat = app.add_subcommand("chat", "Interactive terminal session");

  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  ServiceConfig svc;
  std::string profile_dir;
  std::string static_dir;
  serve->add_option("--host", svc.host, "Bind address");
  serve->add_option("--port", svc.port, "Port (0 picks a free one)");
  serve->add_option("--profile-dir", profile_dir, "Directory for per-user profile files");
  serve->add_option("--static-dir", static_dir, "Directory of UI files served at /");

  CLI11_PARSE(app, argc, argv);

  try {
    if (metrics->parsed()) {
      const auto series = !series_file.empty() ? read_series_file(series_file) : parse_series(series_text);
      if (series.empty()) throw InvalidArgument("metrics needs --series or --input");
      AlignmentSeries s;
      s.values = series;
      s.counts.assign(series.size(), 1);
      const auto report = compute_metrics(s);
      if (csv) {
        std::cout << metrics_csv(report, label);
      } else {
        std::cout << to_json(report).dump(2) << "\n";
      }
      return 0;
    }

    auto config = resolve_config(g);
    if (infer->parsed()) return report(run_infer(config, g.jobs));
    if (evaluate->parsed()) {
      const fs::path dir = traj_dir.empty() ? config.output_dir / "trajectories" : fs::path(traj_dir);
      return report(run_evaluate(config, dir, g.jobs).summary);
    }
    if (unseen->parsed()) return report(run_build_unseen(config, unseen_out));
    if (distract->parsed()) {
      if (budget) config.distractor.budget = *budget;
      if (!position.empty()) config.distractor.position = position_from_name(position);
      if (!pool.empty()) config.distractor.pool = pool;
      return report(run_distract(config, distract_out));
    }
    if (chat->parsed()) return run_chat(config);
    if (serve->parsed()) {
      const auto taxonomy = load_taxonomy(config);
      RunConfig live = config;
      if (live.policy.kind == "oracle") live.policy.kind = "keyword";
      svc.engine = config.engine;
      if (!profile_dir.empty()) svc.profile_dir = profile_dir;
      if (!static_dir.empty()) svc.static_dir = static_dir;
      PersonaService service(taxonomy, make_backends(live, taxonomy, {}), svc);
      const int port = service.bind();
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << svc.host << ":" << port << std::endl;
      service.run();
      g_service = nullptr;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
