#include "ktts/text_frontend.hpp"

#include <fstream>
#include <sstream>

#include "ktts/errors.hpp"
#include "ktts/hash.hpp"
#include "ktts/utf8.hpp"

namespace ktts::text {

namespace {

constexpr int kTailsPerLead = kVowelCount * kTailCount;  // 588

bool is_lead(char32_t c) { return c >= kLeadBase && c < kLeadBase + kLeadCount; }
bool is_vowel(char32_t c) { return c >= kVowelBase && c < kVowelBase + kVowelCount; }
bool is_tail(char32_t c) { return c > kTailBase && c < kTailBase + kTailCount; }

void append_syllable(char32_t c, JamoSequence& out) {
  const int offset = static_cast<int>(c - kSyllableBase);
  const int lead = offset / kTailsPerLead;
  const int vowel = (offset % kTailsPerLead) / kTailCount;
  const int tail = offset % kTailCount;
  out.push_back(JamoSymbol::lead(lead));
  out.push_back(JamoSymbol::vowel(vowel));
  if (tail != 0) out.push_back(JamoSymbol::tail(tail));
}

}  // namespace

JamoSymbol classify(char32_t c) {
  if (is_lead(c)) return JamoSymbol::lead(static_cast<int>(c - kLeadBase));
  if (is_vowel(c)) return JamoSymbol::vowel(static_cast<int>(c - kVowelBase));
  if (is_tail(c)) return JamoSymbol::tail(static_cast<int>(c - kTailBase));
  return JamoSymbol::other(c);
}

JamoSequence decompose_hangul(std::u32string_view text) {
  JamoSequence out;
  out.reserve(text.size() * 3);
  for (char32_t c : text) {
    if (is_syllable(c)) {
      append_syllable(c, out);
    } else {
      out.push_back(JamoSymbol::other(c));
    }
  }
  return out;
}

JamoSequence decompose_hangul(std::string_view utf8_text) { return decompose_hangul(utf8::decode(utf8_text)); }

std::string compose_jamo(const JamoSequence& seq) {
  std::u32string out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size();) {
    const JamoSymbol& s = seq[i];
    switch (s.kind) {
      case JamoKind::NonHangul:
        out.push_back(s.literal);
        ++i;
        break;
      case JamoKind::Vowel:
        throw CompositionError(i, "vowel without a preceding lead consonant");
      case JamoKind::Tail:
        throw CompositionError(i, "tail consonant without a preceding lead+vowel");
      case JamoKind::Lead: {
        if (s.index < 0 || s.index >= kLeadCount) throw CompositionError(i, "lead index out of range");
        if (i + 1 >= seq.size() || seq[i + 1].kind != JamoKind::Vowel) {
          throw CompositionError(i, "lead consonant not followed by a vowel");
        }
        const int vowel = seq[i + 1].index;
        if (vowel < 0 || vowel >= kVowelCount) throw CompositionError(i + 1, "vowel index out of range");
        int tail = 0;
        std::size_t next = i + 2;
        if (next < seq.size() && seq[next].kind == JamoKind::Tail) {
          tail = seq[next].index;
          if (tail < 1 || tail >= kTailCount) throw CompositionError(next, "tail index out of range");
          ++next;
        }
        out.push_back(kSyllableBase + static_cast<char32_t>(s.index * kTailsPerLead + vowel * kTailCount + tail));
        i = next;
        break;
      }
    }
  }
  return utf8::encode(out);
}

std::string to_utf8(const JamoSequence& seq) {
  std::u32string cps;
  cps.reserve(seq.size());
  for (const auto& s : seq) cps.push_back(s.literal);
  return utf8::encode(cps);
}

JamoSequence from_utf8(std::string_view jamo_text) {
  JamoSequence out;
  for (char32_t c : utf8::decode(jamo_text)) out.push_back(classify(c));
  return out;
}

// ---------------------------------------------------------------------------

SymbolTable::SymbolTable(const std::vector<std::string>& symbols) {
  entries_.reserve(symbols.size() + 2);
  entries_.emplace_back(kPadToken);
  entries_.emplace_back(kEosToken);
  for (const auto& s : symbols) {
    if (s.empty()) throw ConfigError("symbol table: empty symbol");
    entries_.push_back(s);
  }
  int pipes = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!ids_.emplace(entries_[i], static_cast<int>(i)).second) {
      throw ConfigError("symbol table: duplicate symbol '" + entries_[i] + "'");
    }
    if (entries_[i] == "|") ++pipes;
  }
  if (pipes != 1) throw ConfigError("symbol table: must contain exactly one boundary pipe");
}

SymbolTable SymbolTable::default_table() {
  std::vector<std::string> symbols = {" ", "|", ".", ",", "?", "!", "'", "\"", "-", ":", ";", "~", "(", ")"};
  for (int i = 0; i < kLeadCount; ++i) symbols.push_back(utf8::encode(JamoSymbol::lead(i).literal));
  for (int i = 0; i < kVowelCount; ++i) symbols.push_back(utf8::encode(JamoSymbol::vowel(i).literal));
  for (int i = 1; i < kTailCount; ++i) symbols.push_back(utf8::encode(JamoSymbol::tail(i).literal));
  for (char c = '0'; c <= '9'; ++c) symbols.emplace_back(1, c);
  for (char c = 'a'; c <= 'z'; ++c) symbols.emplace_back(1, c);
  for (char c = 'A'; c <= 'Z'; ++c) symbols.emplace_back(1, c);
  return SymbolTable(symbols);
}

SymbolTable SymbolTable::from_text(std::string_view contents) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    std::string line(contents.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  // A trailing newline yields one empty final entry.
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kEosToken) {
    throw ConfigError("symbol table file must start with the padding and end-of-sequence lines");
  }
  // The space symbol is stored as a literal single space line.
  return SymbolTable(std::vector<std::string>(lines.begin() + 2, lines.end()));
}

SymbolTable SymbolTable::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open symbol table " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::string SymbolTable::to_text() const {
  std::string out;
  for (const auto& e : entries_) {
    out += e;
    out += '\n';
  }
  return out;
}

void SymbolTable::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write symbol table " + path);
  out << to_text();
}

const std::string& SymbolTable::symbol(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= entries_.size()) {
    throw RangeError("symbol id " + std::to_string(id) + " outside table of size " + std::to_string(entries_.size()));
  }
  return entries_[static_cast<std::size_t>(id)];
}

int SymbolTable::find(std::string_view symbol) const {
  auto it = ids_.find(symbol);
  return it == ids_.end() ? -1 : it->second;
}

int SymbolTable::find(char32_t cp) const { return find(utf8::encode(cp)); }

int SymbolTable::pipe_id() const { return find("|"); }

std::uint64_t SymbolTable::hash() const { return fnv1a(to_text()); }

std::vector<int> encode_symbols(std::string_view jamo_text, const SymbolTable& table) {
  const std::u32string cps = utf8::decode(jamo_text);
  std::vector<int> ids;
  ids.reserve(cps.size() + 1);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const std::string sym = utf8::encode(cps[i]);
    const int id = table.find(sym);
    if (id <= table.eos_id()) throw EncodingError(sym, i);
    ids.push_back(id);
  }
  ids.push_back(table.eos_id());
  return ids;
}

std::string decode_symbols(const std::vector<int>& ids, const SymbolTable& table) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    const std::string& sym = table.symbol(id);
    if (id == table.pad_id()) continue;
    if (id == table.eos_id()) {
      if (i + 1 == ids.size()) break;
      throw RangeError("end-of-sequence id before the end of the sequence at position " + std::to_string(i));
    }
    out += sym;
  }
  return out;
}

NormalizedText normalize_text(std::string_view utf8_text, const SymbolTable& table) {
  const std::u32string in = utf8::decode(utf8_text);

  // Canonical composition of conjoining jamo.
  std::u32string composed;
  composed.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const char32_t c = in[i];
    if (is_lead(c) && i + 1 < in.size() && is_vowel(in[i + 1])) {
      char32_t s = kSyllableBase + static_cast<char32_t>((c - kLeadBase) * kTailsPerLead + (in[i + 1] - kVowelBase) * kTailCount);
      ++i;
      if (i + 1 < in.size() && is_tail(in[i + 1])) {
        s += in[i + 1] - kTailBase;
        ++i;
      }
      composed.push_back(s);
    } else if (is_syllable(c) && (c - kSyllableBase) % kTailCount == 0 && i + 1 < in.size() && is_tail(in[i + 1])) {
      composed.push_back(c + (in[i + 1] - kTailBase));
      ++i;
    } else {
      composed.push_back(c);
    }
  }

  NormalizedText result;
  std::u32string kept;
  kept.reserve(composed.size());
  for (char32_t c : composed) {
    if (utf8::is_space(c)) {
      kept.push_back(U' ');
    } else if (is_syllable(c) || table.contains(c)) {
      kept.push_back(c);
    } else {
      result.stripped.push_back(utf8::encode(c));
    }
  }

  std::u32string collapsed;
  collapsed.reserve(kept.size());
  for (char32_t c : kept) {
    if (c == U' ' && (collapsed.empty() || collapsed.back() == U' ')) continue;
    collapsed.push_back(c);
  }
  while (!collapsed.empty() && collapsed.back() == U' ') collapsed.pop_back();
  result.text = utf8::encode(collapsed);
  return result;
}

std::string to_model_text(std::string_view utf8_text, const SymbolTable& table, std::vector<std::string>* stripped) {
  NormalizedText norm = normalize_text(utf8_text, table);
  if (stripped) *stripped = std::move(norm.stripped);
  return to_utf8(decompose_hangul(norm.text));
}

}  // namespace ktts::text
