#include "ktts/fixtures.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

#include "ktts/dataset.hpp"
#include "ktts/errors.hpp"
#include "ktts/layers.hpp"
#include "ktts/text_frontend.hpp"
#include "ktts/utf8.hpp"

namespace ktts::fixtures {

std::vector<FixtureUtterance> fixture_sentences(std::size_t n) {
  static const std::vector<FixtureUtterance> all = {
      {"fx01", "가방", "(S (NP 가방))"},
      {"fx02", "아버지", "(S (NP 아버지))"},
      {"fx03", "방에 가", "(S (NP 방에) (VP 가))"},
      {"fx04", "안녕", "(S (NP 안녕))"},
      {"fx05", "나무 아래", "(S (NP (NP 나무) (NP 아래)))"},
      {"fx06", "바다로", "(S (NP 바다로))"},
      {"fx07", "들어가신다", "(S (VP 들어가신다))"},
      {"fx08", "하늘 봐", "(S (NP 하늘) (VP 봐))"},
      {"fx09", "안녕하세요.", "(S (VP 안녕하세요.))"},
      {"fx10", "아버지가 방에 들어가신다", "(S (NP 아버지가) (VP (NP 방에) (VP 들어가신다)))"},
  };
  if (n > all.size()) throw RangeError("at most " + std::to_string(all.size()) + " fixture sentences exist");
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n)};
}

audio::Waveform render_tones(const std::string& text, int sample_rate, std::uint64_t seed) {
  using text::JamoKind;
  nn::Rng rng(seed);
  audio::Waveform w;
  w.sample_rate = sample_rate;
  auto silence = [&](double seconds) {
    const auto n = static_cast<std::size_t>(seconds * sample_rate);
    for (std::size_t i = 0; i < n; ++i) w.samples.push_back(1e-4 * (rng.uniform() - 0.5));
  };
  auto tone = [&](double freq, double seconds, double amp) {
    const auto n = static_cast<std::size_t>(seconds * sample_rate);
    const double ramp = 0.005 * sample_rate;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      const double env = std::min({1.0, i / ramp, (n - i) / ramp});
      const double s = std::sin(2 * std::numbers::pi * freq * t) + 0.5 * std::sin(2 * std::numbers::pi * 2 * freq * t);
      w.samples.push_back(amp * env * s + 1e-4 * (rng.uniform() - 0.5));
    }
  };
  silence(0.05);
  for (const auto& j : text::decompose_hangul(text)) {
    switch (j.kind) {
      case JamoKind::Lead: tone(150.0 + 40.0 * j.index, 0.045, 0.3); break;
      case JamoKind::Vowel: tone(1000.0 + 60.0 * j.index, 0.09, 0.4); break;
      case JamoKind::Tail: tone(300.0 + 50.0 * j.index, 0.045, 0.3); break;
      case JamoKind::NonHangul:
        if (utf8::is_space(j.literal)) silence(0.08);
        else silence(0.16);
        break;
    }
  }
  silence(0.05);
  return w;
}

std::string write_fixture_corpus(const std::string& dir, std::size_t n, bool parses) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "wavs");
  std::string meta, trees;
  for (const auto& u : fixture_sentences(n)) {
    const std::string rel = "wavs/" + u.id + ".wav";
    audio::write_wav((fs::path(dir) / rel).string(), render_tones(u.text));
    meta += rel + "|" + u.text + "\n";
    trees += u.parse + "\n";
  }
  const std::string meta_path = (fs::path(dir) / "metadata.csv").string();
  data::write_file(meta_path, meta);
  if (parses) data::write_file((fs::path(dir) / "parses.txt").string(), trees);
  return meta_path;
}

}  // namespace ktts::fixtures
