#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ktts/audio_features.hpp"

namespace ktts::fixtures {

struct FixtureUtterance {
  std::string id;
  std::string text;
  std::string parse;  // bracketed tree over the same words
};

/// Short Korean phrases with hand-written constituency trees. At most 10.
std::vector<FixtureUtterance> fixture_sentences(std::size_t n);

/// Renders text as a deterministic tone sequence: every jamo becomes a short
/// two-partial tone whose pitch depends on the jamo, spaces become 80 ms of
/// silence and punctuation 160 ms. Not speech, but the text-to-spectrum map
/// is learnable, which is all an overfit check needs.
audio::Waveform render_tones(const std::string& text, int sample_rate = audio::kCorpusSampleRate,
                             std::uint64_t seed = 7);

/// Writes `dir/wavs/*.wav`, `dir/metadata.csv` and, when `parses` is set,
/// `dir/parses.txt`. Returns the metadata path.
std::string write_fixture_corpus(const std::string& dir, std::size_t n, bool parses = true);

}  // namespace ktts::fixtures
