#include "ktts/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "ktts/audio_features.hpp"
#include "ktts/errors.hpp"
#include "ktts/hash.hpp"
#include "ktts/syntax_boundaries.hpp"

namespace ktts::pipeline {

namespace fs = std::filesystem;

std::uint64_t cache_key(const FullConfig& cfg, const text::SymbolTable& symbols) {
  std::string key = cfg.mel.canonical() + "\n" + hex64(symbols.hash()) + "\n";
  for (const auto& c : cfg.categories) key += c + ",";
  return fnv1a(key);
}

EncodedText encode_text(const std::string& text, const std::optional<std::string>& parse, const FullConfig& cfg,
                        const text::SymbolTable& symbols, std::vector<std::string>* warnings) {
  EncodedText out;
  auto norm = text::normalize_text(text, symbols);
  out.stripped = std::move(norm.stripped);
  out.marked = norm.text;
  if (parse) {
    try {
      out.marked = syntax::mark_text(norm.text, *parse, cfg.categories);
    } catch (const Error& e) {
      if (warnings) warnings->push_back(std::string("parse ignored, degraded mode: ") + e.what());
    }
  }
  out.model_text = text::to_model_text(out.marked, symbols);
  if (out.model_text.empty()) throw EncodingError(text, 0);
  out.ids = text::encode_symbols(out.model_text, symbols);
  return out;
}

namespace {

std::string cache_dir(const std::string& out_dir, std::uint64_t key) {
  return (fs::path(out_dir) / "cache" / hex64(key)).string();
}

std::string ids_to_text(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? " " : "") + std::to_string(ids[i]);
  return s;
}

std::vector<int> ids_from_text(const std::string& s) {
  std::vector<int> ids;
  std::istringstream is(s);
  int v;
  while (is >> v) ids.push_back(v);
  return ids;
}

// Tabs and newlines cannot appear in metadata fields, so TSV is safe.
std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

PreprocessReport preprocess(const std::string& metadata_path, const std::optional<std::string>& sidecar_path,
                            const std::string& out_dir, const FullConfig& cfg, const text::SymbolTable& symbols) {
  cfg.mel.validate();
  PreprocessReport rep;
  auto meta = data::load_metadata(metadata_path);
  rep.warnings = meta.warnings;
  auto& records = meta.records;
  if (sidecar_path) {
    auto w = data::attach_parses(records, data::read_file(*sidecar_path));
    rep.missing_parses = w.size();
    rep.warnings.insert(rep.warnings.end(), w.begin(), w.end());
  } else {
    rep.missing_parses = records.size();
    rep.warnings.push_back("no parse sidecar given: all utterances in degraded mode (no boundary pipes)");
  }

  rep.cache_key = cache_key(cfg, symbols);
  const std::string dir = cache_dir(out_dir, rep.cache_key);
  fs::create_directories(dir);
  const fs::path base = fs::path(metadata_path).parent_path();

  std::string index;
  std::vector<double> seconds;
  for (auto& r : records) {
    const std::string utt = r.wav_path;
    try {
      const fs::path wav = fs::path(r.wav_path).is_absolute() ? fs::path(r.wav_path) : base / r.wav_path;
      const std::string wav_bytes = data::read_file(wav.string());
      std::vector<std::string> w;
      EncodedText enc = encode_text(r.text, r.parse, cfg, symbols, &w);
      for (const auto& s : w) rep.warnings.push_back("utterance " + utt + ": " + s);
      for (const auto& s : enc.stripped) rep.stripped.push_back(utt + ": " + s);

      const std::uint64_t entry = fnv1a(r.text + "\x1f" + r.parse.value_or("") + "\x1f" + wav_bytes, rep.cache_key);
      const std::string stem = (fs::path(dir) / hex64(entry)).string();
      double secs = 0.0;
      if (fs::exists(stem + ".mel") && fs::exists(stem + ".ids") && fs::exists(stem + ".sec")) {
        ++rep.cache_hits;
        secs = std::stod(data::read_file(stem + ".sec"));
      } else {
        audio::Waveform wf = audio::load_wav(wav.string(), cfg.mel.sample_rate);
        audio::MelSpectrogram mel = audio::mel_spectrogram(wf, cfg.mel);
        data::save_matrix(stem + ".mel", mel.frames, cfg.mel.hash());
        data::write_file(stem + ".ids", ids_to_text(enc.ids) + "\n");
        secs = wf.seconds();
        data::write_file(stem + ".sec", std::to_string(secs) + "\n");
        ++rep.computed;
      }
      seconds.push_back(secs);
      index += hex64(entry) + "\t" + r.wav_path + "\t" + r.text + "\t" + enc.marked + "\t" + r.parse.value_or("") + "\n";
    } catch (const Error& e) {
      throw DatasetError("utterance " + utt + " (metadata line " + std::to_string(r.line) + "): " + e.what());
    }
  }
  rep.utterances = records.size();
  if (!seconds.empty()) {
    double total = 0.0;
    for (double s : seconds) total += s;
    rep.mean_seconds = total / static_cast<double>(seconds.size());
    rep.min_seconds = *std::min_element(seconds.begin(), seconds.end());
    rep.max_seconds = *std::max_element(seconds.begin(), seconds.end());
  }
  rep.index_path = (fs::path(dir) / "index.tsv").string();
  data::write_file(rep.index_path, index);
  data::write_file((fs::path(dir) / "config.txt").string(), cfg.to_text());
  symbols.save((fs::path(dir) / "symbols.txt").string());
  return rep;
}

std::vector<data::UtteranceRecord> load_prepared(const std::string& out_dir, const FullConfig& cfg,
                                                 const text::SymbolTable& symbols) {
  const std::uint64_t key = cache_key(cfg, symbols);
  const std::string dir = cache_dir(out_dir, key);
  const fs::path index_path = fs::path(dir) / "index.tsv";
  if (!fs::exists(index_path)) {
    std::string found;
    if (fs::exists(fs::path(out_dir) / "cache")) {
      for (const auto& e : fs::directory_iterator(fs::path(out_dir) / "cache")) found += " " + e.path().filename().string();
    }
    throw DatasetError("no preprocessed cache for config hash " + hex64(key) + " under " + out_dir +
                       (found.empty() ? std::string(" (run preprocess first)") : "; caches present:" + found));
  }
  std::vector<data::UtteranceRecord> out;
  std::istringstream is(data::read_file(index_path.string()));
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 5) throw DatasetError("corrupt cache index " + index_path.string());
    data::UtteranceRecord r;
    r.wav_path = f[1];
    r.text = f[2];
    if (!f[4].empty()) r.parse = f[4];
    r.line = out.size() + 1;
    const std::string stem = (fs::path(dir) / f[0]).string();
    r.ids = ids_from_text(data::read_file(stem + ".ids"));
    r.mel = data::load_matrix(stem + ".mel", &r.mel_config_hash);
    if (r.mel_config_hash != cfg.mel.hash()) throw DatasetError("cached mel " + stem + " was built with another mel config");
    for (int id : r.ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= symbols.size()) throw DatasetError("cached ids out of range in " + stem);
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DatasetError("cache index " + index_path.string() + " is empty");
  return out;
}

std::vector<model::Example> to_examples(const std::vector<data::UtteranceRecord>& records) {
  std::vector<model::Example> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.ids, r.mel});
  return out;
}

}  // namespace ktts::pipeline
