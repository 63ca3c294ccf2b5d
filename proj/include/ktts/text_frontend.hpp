#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ktts::text {

// Precomposed Hangul syllable block U+AC00..U+D7A3.
inline constexpr char32_t kSyllableBase = 0xAC00;
inline constexpr char32_t kSyllableLast = 0xD7A3;
inline constexpr int kLeadCount = 19;
inline constexpr int kVowelCount = 21;
inline constexpr int kTailCount = 28;  // includes the "no tail" slot 0
inline constexpr int kSyllableCount = kLeadCount * kVowelCount * kTailCount;  // 11,172

// Positional (conjoining) jamo blocks.
inline constexpr char32_t kLeadBase = 0x1100;
inline constexpr char32_t kVowelBase = 0x1161;
inline constexpr char32_t kTailBase = 0x11A7;  // tail index 1 is U+11A8

inline constexpr char32_t kBoundaryPipe = U'|';

inline bool is_syllable(char32_t c) { return c >= kSyllableBase && c <= kSyllableLast; }

enum class JamoKind : std::uint8_t { Lead, Vowel, Tail, NonHangul };

/// One input unit. `index` is the position in the lead (0..18), vowel (0..20)
/// or tail (1..27) inventory; tail indices follow the syllable arithmetic, where
/// 0 means "no tail" and never appears as a symbol. Non-Hangul symbols carry
/// index 0 and their code point in `literal`.
struct JamoSymbol {
  JamoKind kind = JamoKind::NonHangul;
  int index = 0;
  char32_t literal = 0;

  static JamoSymbol lead(int i) { return {JamoKind::Lead, i, kLeadBase + static_cast<char32_t>(i)}; }
  static JamoSymbol vowel(int i) { return {JamoKind::Vowel, i, kVowelBase + static_cast<char32_t>(i)}; }
  static JamoSymbol tail(int i) { return {JamoKind::Tail, i, kTailBase + static_cast<char32_t>(i)}; }
  static JamoSymbol other(char32_t c) { return {JamoKind::NonHangul, 0, c}; }

  friend bool operator==(const JamoSymbol&, const JamoSymbol&) = default;
};

using JamoSequence = std::vector<JamoSymbol>;

/// Classify a single code point as a symbol (positional jamo map to their
/// kind, anything else is non-Hangul).
JamoSymbol classify(char32_t c);

/// Replace every precomposed syllable by its 2-3 positional jamo; everything
/// else passes through unchanged.
JamoSequence decompose_hangul(std::string_view utf8_text);
JamoSequence decompose_hangul(std::u32string_view text);

/// Inverse of decompose_hangul. Throws CompositionError naming the offending
/// symbol index for a vowel without a lead, a lead without a vowel, or a
/// tail that does not close a lead+vowel run.
std::string compose_jamo(const JamoSequence& seq);

/// Render a sequence as UTF-8 using each symbol's literal.
std::string to_utf8(const JamoSequence& seq);

/// Parse rendered jamo text back into symbols (no composition happens).
JamoSequence from_utf8(std::string_view jamo_text);

// ---------------------------------------------------------------------------
// Symbol table

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kEosToken = "<eos>";

/// Ordered, bijective symbol <-> id mapping. Id 0 is padding, id 1 end of
/// sequence. Entries are UTF-8 strings; ordinary entries hold one code point.
class SymbolTable {
 public:
  SymbolTable() = default;
  /// Builds a table from `symbols`, which must not contain the pad or eos
  /// tokens; they are prepended. Throws ConfigError on duplicates or when the
  /// boundary pipe is missing.
  explicit SymbolTable(const std::vector<std::string>& symbols);

  /// Jamo inventories, punctuation, space, the boundary pipe, digits, Latin.
  static SymbolTable default_table();

  static SymbolTable from_text(std::string_view file_contents);
  static SymbolTable load(const std::string& path);
  std::string to_text() const;
  void save(const std::string& path) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }
  const std::string& symbol(int id) const;
  /// -1 when absent.
  int find(std::string_view symbol) const;
  int find(char32_t cp) const;
  bool contains(char32_t cp) const { return find(cp) >= 0; }

  int pad_id() const { return 0; }
  int eos_id() const { return 1; }
  int pipe_id() const;

  std::uint64_t hash() const;

  friend bool operator==(const SymbolTable& a, const SymbolTable& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<std::string> entries_;
  std::map<std::string, int, std::less<>> ids_;
};

/// One id per code point of `jamo_text`, followed by the end-of-sequence id.
/// Throws EncodingError naming the symbol and its code-point position.
std::vector<int> encode_symbols(std::string_view jamo_text, const SymbolTable& table);

/// Inverse of encode_symbols (a trailing end-of-sequence id is dropped; padding
/// ids are skipped). Throws RangeError for ids outside the table.
std::string decode_symbols(const std::vector<int>& ids, const SymbolTable& table);

struct NormalizedText {
  std::string text;
  /// Code points removed because the symbol table cannot represent them, in
  /// order of appearance (one entry per occurrence).
  std::vector<std::string> stripped;
};

/// Compose conjoining jamo into precomposed syllables, collapse whitespace
/// runs to one space (trimmed at both ends) and drop characters the table
/// cannot encode.
NormalizedText normalize_text(std::string_view utf8_text, const SymbolTable& table);

/// Full text path: normalize, decompose, render. The result is ready for
/// encode_symbols.
std::string to_model_text(std::string_view utf8_text, const SymbolTable& table,
                          std::vector<std::string>* stripped = nullptr);

}  // namespace ktts::text
