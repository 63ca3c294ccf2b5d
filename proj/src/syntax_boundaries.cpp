#include "ktts/syntax_boundaries.hpp"

#include "ktts/errors.hpp"
#include "ktts/utf8.hpp"

namespace ktts::syntax {

namespace {

class BracketReader {
 public:
  explicit BracketReader(std::u32string_view in) : in_(in) {}

  ParseTree read_root() {
    skip_space();
    if (pos_ >= in_.size()) throw ParseError(pos_, "empty input");
    if (in_[pos_] != U'(') throw ParseError(pos_, "expected '('");
    ParseTree t = read_node();
    skip_space();
    if (pos_ != in_.size()) throw ParseError(pos_, "trailing characters after tree");
    return t;
  }

 private:
  void skip_space() {
    while (pos_ < in_.size() && utf8::is_space(in_[pos_])) ++pos_;
  }

  bool is_delim(char32_t c) const { return c == U'(' || c == U')' || utf8::is_space(c); }

  std::u32string read_atom() {
    const std::size_t begin = pos_;
    while (pos_ < in_.size() && !is_delim(in_[pos_])) ++pos_;
    return std::u32string(in_.substr(begin, pos_ - begin));
  }

  ParseTree read_node() {
    const std::size_t open = pos_;
    ++pos_;  // '('
    if (pos_ >= in_.size()) throw ParseError(pos_, "unexpected end of input after '('");
    if (utf8::is_space(in_[pos_]) || in_[pos_] == U'(' || in_[pos_] == U')') {
      throw ParseError(pos_, "empty constituent label");
    }
    ParseTree node;
    node.label = utf8::encode(read_atom());
    for (;;) {
      skip_space();
      if (pos_ >= in_.size()) throw ParseError(pos_, "unbalanced parentheses: missing ')'");
      const char32_t c = in_[pos_];
      if (c == U')') {
        ++pos_;
        break;
      }
      if (c == U'(') {
        node.children.push_back(read_node());
      } else {
        ParseTree leaf;
        leaf.token = utf8::encode(read_atom());
        node.children.push_back(std::move(leaf));
      }
    }
    if (node.children.empty()) throw ParseError(open, "constituent '" + node.label + "' has no children");
    return node;
  }

  std::u32string_view in_;
  std::size_t pos_ = 0;
};

// Assigns spans assuming tokens are joined by single spaces; returns the end offset.
std::size_t assign_spans(ParseTree& t, std::size_t cursor, bool& first) {
  if (t.is_terminal()) {
    if (!first) ++cursor;
    first = false;
    const std::size_t len = utf8::decode(t.token).size();
    t.span = {cursor, cursor + len};
    return cursor + len;
  }
  std::size_t start = 0;
  for (std::size_t i = 0; i < t.children.size(); ++i) {
    cursor = assign_spans(t.children[i], cursor, first);
    if (i == 0) start = t.children[0].span.start;
  }
  t.span = {start, cursor};
  return cursor;
}

std::string base_category(const std::string& label) {
  const auto cut = label.find_first_of("-=");
  if (cut == std::string::npos || cut == 0) return label;
  return label.substr(0, cut);
}

void collect_ends(const ParseTree& t, const std::set<std::string>& cats, BoundarySet& out) {
  if (t.is_terminal()) return;
  if (cats.count(t.label) || cats.count(base_category(t.label))) {
    out.positions.insert(t.span.end);
    out.categories[t.span.end].insert(t.label);
  }
  for (const auto& c : t.children) collect_ends(c, cats, out);
}

}  // namespace

void ParseTree::collect_tokens(std::vector<std::string>& out) const {
  if (is_terminal()) {
    out.push_back(token);
    return;
  }
  for (const auto& c : children) c.collect_tokens(out);
}

std::string ParseTree::sentence() const {
  std::vector<std::string> toks;
  collect_tokens(toks);
  std::string s;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) s += ' ';
    s += toks[i];
  }
  return s;
}

ParseTree parse_bracketed(std::string_view text) {
  const std::u32string cps = utf8::decode(text);
  BracketReader reader(cps);
  ParseTree tree = reader.read_root();
  bool first = true;
  assign_spans(tree, 0, first);
  return tree;
}

BoundarySet extract_boundaries(const ParseTree& tree, const std::set<std::string>& categories) {
  BoundarySet out;
  collect_ends(tree, categories, out);
  return out;
}

std::string inject_pipes(std::string_view text, const BoundarySet& boundaries) {
  const std::u32string in = utf8::decode(text);
  std::size_t plain_len = 0;
  for (char32_t c : in) plain_len += (c != U'|');
  if (!boundaries.positions.empty() && *boundaries.positions.rbegin() > plain_len) {
    throw RangeError("boundary offset " + std::to_string(*boundaries.positions.rbegin()) +
                     " beyond text length " + std::to_string(plain_len));
  }

  std::u32string out;
  out.reserve(in.size() + boundaries.size());
  std::size_t plain = 0;  // plain characters emitted so far
  auto emit_boundary = [&](std::size_t next_index) {
    if (!boundaries.positions.count(plain)) return;
    if (next_index < in.size() && in[next_index] == U'|') return;  // already marked
    if (!out.empty() && out.back() == U'|') return;
    out.push_back(U'|');
  };
  for (std::size_t i = 0; i < in.size(); ++i) {
    const char32_t c = in[i];
    if (c == U'|') {
      out.push_back(c);
      continue;
    }
    if (plain > 0) emit_boundary(i);
    out.push_back(c);
    ++plain;
  }
  if (plain > 0) emit_boundary(in.size());
  return utf8::encode(out);
}

BoundarySet project_boundaries(const BoundarySet& boundaries, std::string_view tree_sentence, std::string_view text) {
  const std::u32string src = utf8::decode(tree_sentence);
  const std::u32string dst = utf8::decode(text);
  // For every source offset p (end of the char at p-1), find the destination
  // offset just after the matching non-space char.
  std::vector<std::size_t> map_end(src.size() + 1, 0);
  std::size_t j = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (utf8::is_space(src[i])) {
      map_end[i + 1] = map_end[i];
      continue;
    }
    while (j < dst.size() && (utf8::is_space(dst[j]) || dst[j] == U'|')) ++j;
    if (j >= dst.size() || dst[j] != src[i]) {
      throw RangeError("parse tokens do not match the transcript at tree offset " + std::to_string(i));
    }
    ++j;
    map_end[i + 1] = j;
  }
  // Trailing transcript characters the parser dropped are tolerated.
  BoundarySet out;
  // Destination offsets count plain (non-pipe) characters.
  std::vector<std::size_t> plain_index(dst.size() + 1, 0);
  for (std::size_t k = 0; k < dst.size(); ++k) plain_index[k + 1] = plain_index[k] + (dst[k] != U'|');
  for (std::size_t p : boundaries.positions) {
    if (p > src.size()) throw RangeError("boundary offset beyond tree sentence");
    const std::size_t q = plain_index[map_end[p]];
    out.positions.insert(q);
    auto it = boundaries.categories.find(p);
    if (it != boundaries.categories.end()) out.categories[q].insert(it->second.begin(), it->second.end());
  }
  return out;
}

std::string mark_text(std::string_view text, std::string_view bracketed, const std::set<std::string>& categories) {
  const ParseTree tree = parse_bracketed(bracketed);
  const BoundarySet b = extract_boundaries(tree, categories);
  return inject_pipes(text, project_boundaries(b, tree.sentence(), text));
}

std::string strip_pipes(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c != '|') out.push_back(c);
  }
  return out;
}

}  // namespace ktts::syntax
