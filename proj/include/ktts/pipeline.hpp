#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ktts/config.hpp"
#include "ktts/dataset.hpp"
#include "ktts/model.hpp"
#include "ktts/text_frontend.hpp"

namespace ktts::pipeline {

/// Key of a preprocess cache: everything that changes ids or mels.
std::uint64_t cache_key(const FullConfig& cfg, const text::SymbolTable& symbols);

/// Front-end for one utterance: normalize, mark boundaries from the parse
/// (when given), decompose and encode. A parse that cannot be aligned to the
/// text is dropped with a warning appended to `warnings`.
struct EncodedText {
  std::string marked;      // normalized text with boundary pipes
  std::string model_text;  // jamo rendering fed to the encoder
  std::vector<int> ids;    // ends with the eos id
  std::vector<std::string> stripped;
};
EncodedText encode_text(const std::string& text, const std::optional<std::string>& parse, const FullConfig& cfg,
                        const text::SymbolTable& symbols, std::vector<std::string>* warnings = nullptr);

struct PreprocessReport {
  std::size_t utterances = 0;
  std::size_t computed = 0;
  std::size_t cache_hits = 0;
  std::size_t missing_parses = 0;
  std::vector<std::string> stripped;  // "utt: char" entries
  std::vector<std::string> warnings;
  double mean_seconds = 0.0;
  double min_seconds = 0.0;
  double max_seconds = 0.0;
  std::uint64_t cache_key = 0;
  std::string index_path;
};

/// Reads metadata (and an optional parse sidecar), computes ids and mels and
/// writes them under `out_dir/cache/`. Entries whose inputs and config are
/// unchanged are reused without recomputation. Module errors are rethrown
/// with the utterance named.
PreprocessReport preprocess(const std::string& metadata_path, const std::optional<std::string>& sidecar_path,
                            const std::string& out_dir, const FullConfig& cfg, const text::SymbolTable& symbols);

/// Loads a preprocessed corpus. Throws DatasetError when the cache was built
/// with a different config or symbol table.
std::vector<data::UtteranceRecord> load_prepared(const std::string& out_dir, const FullConfig& cfg,
                                                 const text::SymbolTable& symbols);

/// Training examples (ids and mel) from prepared records.
std::vector<model::Example> to_examples(const std::vector<data::UtteranceRecord>& records);

}  // namespace ktts::pipeline
