#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "persona/dialogue.hpp"
#include "persona/profile.hpp"
#include "persona/taxonomy.hpp"

namespace persona::testing {

inline const ProfileTaxonomy& tax() { return ProfileTaxonomy::default_taxonomy(); }

inline std::filesystem::path source_dir() { return PERSONA_SOURCE_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("persona_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Every node path of the default taxonomy, as strings.
inline std::vector<std::string> all_paths() {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tax().size(); ++i) out.push_back(path_to_string(tax().path_of(i)));
  return out;
}

inline InferredDelta delta_of(std::initializer_list<std::pair<const char*, const char*>> items,
                              std::initializer_list<const char*> traits = {}) {
  InferredDelta d;
  for (const auto& [p, v] : items) d.add_assertion(AttributeAssertion(std::string_view(p), v));
  for (const auto* t : traits) d.add_trait(t);
  return d;
}

/// Random session record over real taxonomy paths. Every user message is
/// unique ("<tag> message <i> ...") so oracle policies can look turns up.
inline SessionRecord random_record(std::mt19937_64& rng, const std::string& id, std::size_t turns,
                                   double reveal_prob = 0.6) {
  static const std::vector<std::string> paths = all_paths();
  static const std::vector<std::string> values = {"jazz", "vegan", "seattle", "nurse", "hiking", "cats",
                                                  "green tea", "remote", "spicy food", "history"};
  static const std::vector<std::string> traits = {"curious", "introverted", "adventurous", "calm"};
  std::uniform_int_distribution<std::size_t> pick_path(0, paths.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_value(0, values.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_trait(0, traits.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SessionRecord r;
  r.id = id;
  r.theme = "general";
  for (std::size_t t = 0; t < turns; ++t) {
    DialogueTurn turn;
    turn.user = id + " message " + std::to_string(t + 1) + " about things";
    turn.agent = "ok";
    if (unit(rng) < reveal_prob) {
      InferredDelta d;
      const std::size_t n = 1 + rng() % 2;
      for (std::size_t k = 0; k < n; ++k) {
        d.add_assertion(AttributeAssertion(std::string_view(paths[pick_path(rng)]), values[pick_value(rng)]));
      }
      if (unit(rng) < 0.3) d.add_trait(traits[pick_trait(rng)]);
      for (const auto& a : d.assertions()) d.add_classification(a.path.front());
      turn.gt_delta = d;
    } else if (unit(rng) < 0.5) {
      turn.gt_delta = InferredDelta{};
    }
    r.turns.push_back(std::move(turn));
  }
  r.gt_profile = r.inferable_view();
  return r;
}

}  // namespace persona::testing
