#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace persona {

/// Path through the taxonomy, root id first.
using CategoryPath = std::vector<std::string>;

std::string path_to_string(const CategoryPath& path);

/// Splits "a/b/c" into segments; segments are trimmed and lowercased.
CategoryPath path_from_string(std::string_view text);

struct CategoryNode {
  std::string id;
  std::string display_name;
  std::vector<std::string> keywords;
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;
  int depth = 0;  // roots are depth 1
};

/// Hierarchical preference taxonomy (category / subcategory / sub-subcategory).
///
/// Document format, one node per line:
///
///     # comment
///     interests: Interests & Preferences | hobby, hobbies
///       music: Music | song, songs, band, concert
///         music_genres: Music Genres | jazz, rock
///
/// Indentation is two spaces per level, tabs are rejected, and a node may be
/// at most one level deeper than the line before it. Ids match
/// `[a-z0-9_]+` and are unique across the whole document. The text after `|`
/// is an optional comma-separated keyword list used by lexical matching.
class ProfileTaxonomy {
 public:
  static constexpr int kMaxDepth = 3;

  static ProfileTaxonomy parse(std::string_view document);
  static const ProfileTaxonomy& default_taxonomy();
  static std::string_view default_document();

  const std::vector<CategoryNode>& nodes() const noexcept { return nodes_; }
  const std::vector<std::size_t>& roots() const noexcept { return roots_; }
  const CategoryNode& node(std::size_t index) const { return nodes_.at(index); }

  std::optional<std::size_t> find_id(std::string_view id) const;

  /// Index of the node the path ends at, if every segment is a child of the
  /// previous one and the first is a root.
  std::optional<std::size_t> resolve(const CategoryPath& path) const;
  bool contains(const CategoryPath& path) const { return resolve(path).has_value(); }

  CategoryPath path_of(std::size_t index) const;

  /// Display names from root to the node the path ends at. Empty if the path
  /// does not resolve.
  std::vector<std::string> display_chain(const CategoryPath& path) const;

  /// Keyword tokens for every node along the path: display-name words plus
  /// declared keywords.
  std::vector<std::string> lexical_terms(const CategoryPath& path) const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  std::vector<CategoryNode> nodes_;
  std::vector<std::size_t> roots_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

}  // namespace persona
