#include "persona/tagged_output.hpp"

#include <algorithm>
#include <optional>
#include <vector>

#include "persona/text.hpp"

namespace persona {

std::size_t FormatReport::well_formed_count() const {
  return static_cast<std::size_t>(
      std::count_if(blocks.begin(), blocks.end(), [](const BlockStatus& b) { return b.well_formed; }));
}

namespace {

struct TagEvent {
  std::size_t block;
  bool closing;
  std::size_t begin;  // position of '<'
  std::size_t end;    // one past '>'
};

std::vector<TagEvent> scan_tags(std::string_view raw) {
  std::vector<TagEvent> events;
  std::size_t pos = 0;
  while ((pos = raw.find('<', pos)) != std::string_view::npos) {
    const bool closing = pos + 1 < raw.size() && raw[pos + 1] == '/';
    const std::size_t name_at = pos + (closing ? 2 : 1);
    bool matched = false;
    for (std::size_t b = 0; b < kBlockTags.size(); ++b) {
      const auto tag = kBlockTags[b];
      if (raw.substr(name_at, tag.size()) == tag && name_at + tag.size() < raw.size() &&
          raw[name_at + tag.size()] == '>') {
        events.push_back({b, closing, pos, name_at + tag.size() + 1});
        pos = name_at + tag.size() + 1;
        matched = true;
        break;
      }
    }
    if (!matched) ++pos;
  }
  return events;
}

std::vector<std::string> split_list(std::string_view body) {
  std::vector<std::string> items;
  std::string current;
  auto flush = [&] {
    auto t = trim(current);
    if (!t.empty() && t != "-") {
      if (t.rfind("- ", 0) == 0) t = trim(t.substr(2));
      if (!t.empty()) items.push_back(std::move(t));
    }
    current.clear();
  };
  for (char c : body) {
    if (c == ',' || c == '\n' || c == ';') {
      flush();
    } else {
      current.push_back(c);
    }
  }
  flush();
  return items;
}

void parse_profile_block(std::string_view body, InferredDelta& delta, std::size_t& skipped) {
  const auto trimmed = trim(body);
  if (trimmed.empty()) return;
  if (trimmed.front() == '{') {
    try {
      const auto parsed = delta_from_path_map(nlohmann::json::parse(trimmed));
      for (const auto& a : parsed.assertions()) delta.add_assertion(a);
    } catch (const std::exception&) {
      ++skipped;
    }
    return;
  }
  for (const auto& raw_line : split(body, '\n')) {
    auto line = trim(raw_line);
    if (line.empty()) continue;
    if (line.rfind("- ", 0) == 0 || line.rfind("* ", 0) == 0) line = trim(line.substr(2));
    const auto sep = line.find(':');
    if (sep == std::string::npos) {
      ++skipped;
      continue;
    }
    auto path = path_from_string(line.substr(0, sep));
    auto value = trim(line.substr(sep + 1));
    if (path.empty() || value.empty()) {
      ++skipped;
      continue;
    }
    delta.add_assertion(AttributeAssertion(std::move(path), std::move(value)));
  }
}

}  // namespace

ParsedOutput parse_tagged_output(std::string_view raw) {
  ParsedOutput out;
  const auto events = scan_tags(raw);

  for (std::size_t b = 0; b < kBlockTags.size(); ++b) {
    std::vector<std::size_t> opens;
    std::vector<std::size_t> closes;
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (events[i].block != b) continue;
      (events[i].closing ? closes : opens).push_back(i);
    }
    auto& status = out.report.blocks[b];
    status.present = !opens.empty() || !closes.empty();
    if (opens.size() != 1 || closes.size() != 1 || closes[0] < opens[0]) continue;
    // Adjacent in the event stream means no other block tag sits inside.
    if (closes[0] != opens[0] + 1) continue;
    status.well_formed = true;

    const auto& open = events[opens[0]];
    const auto& close = events[closes[0]];
    const auto body = raw.substr(open.end, close.begin - open.end);
    switch (static_cast<OutputBlock>(b)) {
      case OutputBlock::kProfile:
        parse_profile_block(body, out.delta, out.report.skipped_lines);
        break;
      case OutputBlock::kPersonality:
        for (const auto& t : split_list(body)) out.delta.add_trait(t);
        break;
      case OutputBlock::kClassification:
        for (const auto& c : split_list(body)) out.delta.add_classification(c);
        break;
    }
  }
  return out;
}

std::string render_tagged_output(const InferredDelta& delta) {
  std::string out = "<inferred_profile>\n";
  for (const auto& a : delta.assertions()) out += a.normalized_path() + ": " + a.value + "\n";
  out += "</inferred_profile>\n<inferred_personality>\n";
  out += join(std::vector<std::string>(delta.personality_traits().begin(), delta.personality_traits().end()), ", ");
  out += "\n</inferred_personality>\n<classification>\n";
  out += join(std::vector<std::string>(delta.classification().begin(), delta.classification().end()), ", ");
  out += "\n</classification>";
  return out;
}

nlohmann::json to_json(const FormatReport& r) {
  nlohmann::json blocks = nlohmann::json::object();
  for (std::size_t b = 0; b < kBlockTags.size(); ++b) {
    blocks[std::string(kBlockTags[b])] = {{"present", r.blocks[b].present}, {"well_formed", r.blocks[b].well_formed}};
  }
  return {{"blocks", std::move(blocks)},
          {"well_formed", r.well_formed_count()},
          {"skipped_lines", r.skipped_lines},
          {"parse_error", r.parse_error()}};
}

FormatReport format_report_from_json(const nlohmann::json& j) {
  FormatReport r;
  const auto& blocks = j.at("blocks");
  for (std::size_t b = 0; b < kBlockTags.size(); ++b) {
    const auto& s = blocks.at(std::string(kBlockTags[b]));
    r.blocks[b].present = s.at("present").get<bool>();
    r.blocks[b].well_formed = s.at("well_formed").get<bool>();
  }
  r.skipped_lines = j.value("skipped_lines", std::size_t{0});
  return r;
}

}  // namespace persona
