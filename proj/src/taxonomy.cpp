#include "persona/taxonomy.hpp"

#include <algorithm>

#include "persona/error.hpp"
#include "persona/text.hpp"

namespace persona {

namespace default_taxonomy_data {
extern const char* const kDocument;
}

std::string path_to_string(const CategoryPath& path) { return join(path, "/"); }

CategoryPath path_from_string(std::string_view text) {
  CategoryPath path;
  for (const auto& part : split(text, '/')) {
    auto segment = to_lower(trim(part));
    if (!segment.empty()) path.push_back(std::move(segment));
  }
  return path;
}

namespace {

bool valid_id(std::string_view id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

}  // namespace

ProfileTaxonomy ProfileTaxonomy::parse(std::string_view document) {
  ProfileTaxonomy tax;
  // Stack of node indices for the currently open ancestors.
  std::vector<std::size_t> open;

  std::size_t line_no = 0;
  for (const auto& raw : split(document, '\n')) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto first = line.find_first_not_of(' ');
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    if (const auto tab = line.find('\t'); tab != std::string::npos && tab <= first) {
      throw ParseError("tab in indentation", line_no, tab + 1);
    }
    if (first % 2 != 0) throw ParseError("indentation must be a multiple of two spaces", line_no, first + 1);

    const int depth = static_cast<int>(first / 2) + 1;
    if (depth > kMaxDepth) {
      throw ParseError("nesting deeper than " + std::to_string(kMaxDepth) + " levels", line_no, first + 1);
    }
    if (depth > static_cast<int>(open.size()) + 1) {
      throw ParseError("indentation skips a level", line_no, first + 1);
    }

    const std::string body = line.substr(first);
    const auto colon = body.find(':');
    if (colon == std::string::npos) throw ParseError("expected 'id: Display Name'", line_no, first + 1);

    std::string id = trim(body.substr(0, colon));
    if (!valid_id(id)) throw ParseError("invalid id '" + id + "' (allowed: a-z 0-9 _)", line_no, first + 1);

    std::string rest = body.substr(colon + 1);
    std::vector<std::string> keywords;
    if (const auto bar = rest.find('|'); bar != std::string::npos) {
      for (const auto& kw : split(std::string_view(rest).substr(bar + 1), ',')) {
        auto k = normalize_text(kw);
        if (!k.empty()) keywords.push_back(std::move(k));
      }
      rest = rest.substr(0, bar);
    }
    std::string display = trim(rest);
    if (display.empty()) throw ParseError("missing display name for '" + id + "'", line_no, first + colon + 2);

    if (tax.by_id_.count(id) != 0) throw DuplicateIdError(id);

    open.resize(static_cast<std::size_t>(depth - 1));
    CategoryNode node;
    node.id = id;
    node.display_name = std::move(display);
    node.keywords = std::move(keywords);
    node.depth = depth;
    const std::size_t index = tax.nodes_.size();
    if (!open.empty()) {
      node.parent = open.back();
      tax.nodes_[open.back()].children.push_back(index);
    } else {
      tax.roots_.push_back(index);
    }
    tax.nodes_.push_back(std::move(node));
    tax.by_id_.emplace(id, index);
    open.push_back(index);
  }
  if (tax.nodes_.empty()) throw ParseError("taxonomy document has no categories");
  return tax;
}

std::string_view ProfileTaxonomy::default_document() { return default_taxonomy_data::kDocument; }

const ProfileTaxonomy& ProfileTaxonomy::default_taxonomy() {
  static const ProfileTaxonomy instance = parse(default_document());
  return instance;
}

std::optional<std::size_t> ProfileTaxonomy::find_id(std::string_view id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> ProfileTaxonomy::resolve(const CategoryPath& path) const {
  if (path.empty()) return std::nullopt;
  std::optional<std::size_t> current;
  for (const auto& segment : path) {
    const auto idx = find_id(segment);
    if (!idx) return std::nullopt;
    if (nodes_[*idx].parent != current) return std::nullopt;
    current = idx;
  }
  return current;
}

CategoryPath ProfileTaxonomy::path_of(std::size_t index) const {
  CategoryPath path;
  std::optional<std::size_t> cur = index;
  while (cur) {
    path.push_back(nodes_.at(*cur).id);
    cur = nodes_[*cur].parent;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<std::string> ProfileTaxonomy::display_chain(const CategoryPath& path) const {
  std::vector<std::string> names;
  if (!resolve(path)) return names;
  for (const auto& segment : path) names.push_back(nodes_[*find_id(segment)].display_name);
  return names;
}

std::vector<std::string> ProfileTaxonomy::lexical_terms(const CategoryPath& path) const {
  std::vector<std::string> terms;
  if (!resolve(path)) return terms;
  for (const auto& segment : path) {
    const auto& n = nodes_[*find_id(segment)];
    for (auto& t : keyword_tokens(n.display_name)) terms.push_back(std::move(t));
    for (const auto& kw : n.keywords) {
      for (auto& t : keyword_tokens(kw)) terms.push_back(std::move(t));
    }
  }
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
  return terms;
}

}  // namespace persona
