#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ktts::syntax {

/// Half-open code-point range into the detokenized sentence.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

/// Constituency tree node. Terminals have an empty label and a non-empty
/// token; phrasal nodes have a label and at least one child.
struct ParseTree {
  std::string label;
  std::string token;
  std::vector<ParseTree> children;
  Span span;

  bool is_terminal() const { return label.empty(); }
  /// Terminal tokens joined with single spaces.
  std::string sentence() const;
  void collect_tokens(std::vector<std::string>& out) const;
};

/// Reads a Penn-style bracketed tree, e.g. "(S (NP 아버지가) (VP 방에 들어가신다))".
/// Throws ParseError with the code-point offset of the problem.
ParseTree parse_bracketed(std::string_view text);

struct BoundarySet {
  std::set<std::size_t> positions;
  std::map<std::size_t, std::set<std::string>> categories;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
};

inline const std::set<std::string>& default_categories() {
  static const std::set<std::string> cats = {"NP", "VP"};
  return cats;
}

/// End offsets of every phrasal node whose category is in `categories`.
/// Function tags are ignored when matching ("NP-SBJ" counts as "NP").
BoundarySet extract_boundaries(const ParseTree& tree, const std::set<std::string>& categories);

/// Inserts '|' right after each boundary offset. Offsets index the text with
/// existing pipes skipped, so re-applying the same set is a no-op. Throws
/// RangeError for offsets past the end of the text.
std::string inject_pipes(std::string_view text, const BoundarySet& boundaries);

/// Moves boundaries from tree-sentence offsets onto `text` by aligning
/// non-whitespace characters in order, so a tree whose tokenization differs
/// in spacing from the transcript can still mark it. Throws RangeError when
/// the two disagree on non-whitespace content.
BoundarySet project_boundaries(const BoundarySet& boundaries, std::string_view tree_sentence, std::string_view text);

/// Convenience for the preprocessing path: parse, extract, project, inject.
std::string mark_text(std::string_view text, std::string_view bracketed,
                      const std::set<std::string>& categories = default_categories());

/// Removes every '|' from text.
std::string strip_pipes(std::string_view text);

}  // namespace ktts::syntax
