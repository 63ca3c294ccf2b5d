// ktts command-line tool: fixture corpus, preprocessing, training, synthesis
// and pause analysis. Every command writes a <command>_manifest.json into
// --out describing inputs, outputs and the config hash.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ktts/audio_features.hpp"
#include "ktts/checkpoint.hpp"
#include "ktts/config.hpp"
#include "ktts/dataset.hpp"
#include "ktts/errors.hpp"
#include "ktts/fixtures.hpp"
#include "ktts/pipeline.hpp"
#include "ktts/training.hpp"

#ifndef KTTS_VERSION
#define KTTS_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ktts;
using Matrix = Eigen::MatrixXd;

namespace {

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // runtime error in a module
constexpr int kExitUsage = 2;    // bad flags or config

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, const Globals& g) : command_(std::move(command)), out_(g.out) {
    start_ = std::chrono::steady_clock::now();
  }
  void config(const FullConfig& c) { config_hash_ = hex64(c.hash()); }
  void seed(std::uint64_t s) { seed_ = s; }
  void input(const std::string& p) { inputs_.push_back(p); }
  void output(const std::string& p) { outputs_.push_back(p); }
  void extra(const std::string& key, json v) { extra_[key] = std::move(v); }

  void write() const {
    json j;
    j["command"] = command_;
    j["config_hash"] = config_hash_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["seed"] = seed_;
    j["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j["version"] = KTTS_VERSION;
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    data::write_file((fs::path(out_) / (command_ + "_manifest.json")).string(), j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string out_;
  std::string config_hash_;
  std::uint64_t seed_ = 0;
  std::vector<std::string> inputs_, outputs_;
  json extra_ = json::object();
  std::chrono::steady_clock::time_point start_;
};

FullConfig load_config(const Globals& g) {
  FullConfig c = g.config_path.empty() ? FullConfig::from_preset("default") : FullConfig::load(g.config_path);
  if (g.seed) c.train.seed = *g.seed;
  c.validate();
  return c;
}

std::string out_file(const Globals& g, const std::string& name) { return (fs::path(g.out) / name).string(); }

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

// ---------------------------------------------------------------------------

struct FixtureArgs {
  std::size_t count = 8;
  bool no_parses = false;
};

int cmd_fixture(const Globals& g, const FixtureArgs& a) {
  Manifest man("fixture", g);
  const auto cfg = load_config(g);
  man.config(cfg);
  man.seed(cfg.train.seed);
  const auto meta = fixtures::write_fixture_corpus(g.out, a.count, !a.no_parses);
  man.output(meta);
  if (!a.no_parses) man.output(out_file(g, "parses.txt"));
  man.output(out_file(g, "wavs"));
  man.write();
  std::cout << meta << "\n";
  return kExitOk;
}

struct PreprocessArgs {
  std::string metadata;
  std::string parses;
};

int cmd_preprocess(const Globals& g, const PreprocessArgs& a) {
  Manifest man("preprocess", g);
  const auto cfg = load_config(g);
  man.config(cfg);
  man.seed(cfg.train.seed);
  man.input(a.metadata);
  std::optional<std::string> sidecar;
  if (!a.parses.empty()) {
    sidecar = a.parses;
    man.input(a.parses);
  }
  const auto symbols = text::SymbolTable::default_table();
  const auto r = pipeline::preprocess(a.metadata, sidecar, g.out, cfg, symbols);
  for (const auto& w : r.warnings) warn(w);

  json report;
  report["utterances"] = r.utterances;
  report["computed"] = r.computed;
  report["cache_hits"] = r.cache_hits;
  report["missing_parses"] = r.missing_parses;
  report["stripped"] = r.stripped;
  report["warnings"] = r.warnings;
  report["mean_seconds"] = r.mean_seconds;
  report["min_seconds"] = r.min_seconds;
  report["max_seconds"] = r.max_seconds;
  report["cache_key"] = hex64(r.cache_key);
  const auto report_path = out_file(g, "preprocess_report.json");
  data::write_file(report_path, report.dump(2) + "\n");
  man.output(r.index_path);
  man.output(report_path);
  man.extra("report", report);
  man.write();
  std::cout << report.dump() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data_dir;
  std::optional<long> max_iters;
  std::optional<double> lambda;
  bool resume = false;
  bool all_data = false;
};

json loss_json(const training::LossBreakdown& l) {
  return {{"mel_pre", l.mel_pre}, {"mel_post", l.mel_post}, {"gate", l.gate}, {"tpgst", l.tpgst}, {"total", l.total}};
}

training::LossBreakdown validation_loss(const model::Model& m, const std::vector<model::Example>& valid,
                                        const training::TrainConfig& tc) {
  nn::NoGradGuard no_grad;
  nn::Rng rng(tc.seed);
  training::LossBreakdown sum;
  for (const auto& ex : valid) {
    const auto fwd = m.forward_train({ex}, rng);
    const auto g = training::compute_loss(fwd.decodes, {ex.mel}, {training::stop_labels(ex.mel.rows())}, fwd.tae, fwd.tpae,
                                          tc.lambda, tc.gate_loss, tc.gate_pos_weight);
    sum.mel_pre += g.values.mel_pre;
    sum.mel_post += g.values.mel_post;
    sum.gate += g.values.gate;
    sum.tpgst += g.values.tpgst;
    sum.total += g.values.total;
  }
  const double n = static_cast<double>(valid.size());
  return {sum.mel_pre / n, sum.mel_post / n, sum.gate / n, sum.tpgst / n, sum.total / n};
}

int cmd_train(const Globals& g, const TrainArgs& a) {
  Manifest man("train", g);
  auto cfg = load_config(g);
  if (a.lambda) cfg.train.lambda = *a.lambda;
  if (a.max_iters) cfg.train.max_iterations = *a.max_iters;
  cfg.validate();
  man.config(cfg);
  man.seed(cfg.train.seed);
  man.input(a.data_dir);

  const auto symbols_path = fs::path(a.data_dir) / "symbols.txt";
  const auto symbols =
      fs::exists(symbols_path) ? text::SymbolTable::load(symbols_path.string()) : text::SymbolTable::default_table();
  // Refuses to start when the cache was built under another config.
  const auto records = pipeline::load_prepared(a.data_dir, cfg, symbols);

  std::vector<model::Example> train_set, valid_set;
  if (a.all_data || records.size() < 2) {
    train_set = pipeline::to_examples(records);
  } else {
    auto [tr, va] = data::split_dataset(records, cfg.train.valid_fraction, cfg.train.seed);
    train_set = pipeline::to_examples(tr);
    valid_set = pipeline::to_examples(va);
  }

  const auto latest = out_file(g, "latest.ckpt");
  std::optional<model::Model> model;
  std::optional<training::Checkpoint> resumed;
  if (a.resume && fs::exists(latest)) {
    resumed = training::load_checkpoint(latest);
    // The iteration limit may grow between runs; everything else must match.
    auto expect = cfg;
    expect.train.max_iterations = resumed->config.train.max_iterations;
    if (resumed->config.hash() != expect.hash()) {
      throw ConfigError("checkpoint " + latest + " was written with a different config (hash " +
                        hex64(resumed->config.hash()) + ", current " + hex64(expect.hash()) + ")");
    }
    model.emplace(training::model_from_checkpoint(*resumed));
    man.input(latest);
  } else {
    model.emplace(cfg.model, symbols, cfg.train.seed);
  }
  training::Trainer trainer(*model, cfg.train);
  if (resumed) training::restore_trainer(*resumed, trainer);

  const auto log_path = out_file(g, "train_log.jsonl");
  const auto valid_path = out_file(g, "valid_log.jsonl");
  std::ofstream log(log_path, resumed ? std::ios::app : std::ios::trunc);
  std::ofstream vlog(valid_path, resumed ? std::ios::app : std::ios::trunc);
  if (!log || !vlog) throw DatasetError("cannot write training logs under " + g.out);

  auto save = [&](long iteration) {
    const auto ckpt = training::capture(*model, cfg, &trainer);
    const auto path = out_file(g, "ckpt_" + std::to_string(iteration) + ".ckpt");
    training::save_checkpoint(path, ckpt);
    training::save_checkpoint(latest, ckpt);
    man.output(path);
    if (!valid_set.empty()) {
      json v = loss_json(validation_loss(*model, valid_set, cfg.train));
      v["iteration"] = iteration;
      vlog << v.dump() << "\n" << std::flush;
    }
  };

  long skipped = 0;
  while (trainer.iteration() < cfg.train.max_iterations) {
    std::vector<model::Example> batch;
    for (auto i : trainer.next_batch(train_set.size())) batch.push_back(train_set[i]);
    const auto r = trainer.train_step(batch);
    json line = loss_json(r.loss);
    line["iteration"] = r.iteration;
    line["lr"] = r.lr;
    line["grad_norm"] = r.grad_norm;
    line["skipped"] = r.skipped;
    if (r.skipped) {
      line["skip_reason"] = r.skip_reason;
      ++skipped;
      warn("iteration " + std::to_string(r.iteration) + " skipped: " + r.skip_reason);
    }
    log << line.dump() << "\n" << std::flush;
    if (trainer.iteration() % cfg.train.checkpoint_interval == 0) save(trainer.iteration());
  }
  if (!fs::exists(out_file(g, "ckpt_" + std::to_string(trainer.iteration()) + ".ckpt"))) save(trainer.iteration());

  man.output(log_path);
  man.output(latest);
  if (!valid_set.empty()) man.output(valid_path);
  man.extra("iterations", trainer.iteration());
  man.extra("skipped_steps", skipped);
  man.extra("train_utterances", train_set.size());
  man.extra("valid_utterances", valid_set.size());
  man.write();
  std::cout << json{{"iteration", trainer.iteration()}, {"checkpoint", latest}}.dump() << "\n";
  return kExitOk;
}

struct SynthArgs {
  std::string checkpoint;
  std::string text;
  std::string parse;
  std::string prefix = "synth";
  int gl_iters = 60;
};

int cmd_synth(const Globals& g, const SynthArgs& a) {
  Manifest man("synth", g);
  man.input(a.checkpoint);
  const auto ck = training::load_checkpoint(a.checkpoint);
  auto cfg = ck.config;
  if (g.seed) cfg.train.seed = *g.seed;
  man.config(ck.config);
  man.seed(cfg.train.seed);
  const auto model = training::model_from_checkpoint(ck);

  std::vector<std::string> warnings;
  std::optional<std::string> parse;
  if (a.parse.empty()) {
    warnings.push_back("no parse supplied; synthesizing without boundary pipes");
  } else {
    parse = a.parse;
  }
  const auto enc = pipeline::encode_text(a.text, parse, cfg, ck.symbols, &warnings);
  for (const auto& s : enc.stripped) warnings.push_back("dropped unsupported character '" + s + "'");
  for (const auto& w : warnings) warn(w);

  nn::Rng rng(cfg.train.seed);
  const auto syn = model.synthesize(enc.ids, rng);
  const Matrix& mel = syn.decode.mel_post->value;
  const Matrix& align = syn.decode.alignments->value;
  const auto path = model::alignment_path(align);
  if (!model::is_monotonic_path(path)) throw NumericError("hard alignment (non-monotonic path)");

  const auto mel_path = out_file(g, a.prefix + ".mel");
  const auto align_path = out_file(g, a.prefix + "_alignment.mel");
  const auto align_csv = out_file(g, a.prefix + "_alignment.csv");
  const auto gate_csv = out_file(g, a.prefix + "_gate.csv");
  const auto wav_path = out_file(g, a.prefix + ".wav");
  data::save_matrix(mel_path, mel, cfg.mel.hash());
  data::save_matrix(align_path, align, cfg.mel.hash());
  {
    std::ofstream f(align_csv);
    f << "frame,position\n";
    for (std::size_t t = 0; t < path.size(); ++t) f << t << "," << path[t] << "\n";
  }
  {
    std::ofstream f(gate_csv);
    f << "frame,gate_logit,gate_probability\n";
    const Matrix& gl = syn.decode.gate_logits->value;
    for (Eigen::Index t = 0; t < gl.rows(); ++t) f << t << "," << gl(t, 0) << "," << 1.0 / (1.0 + std::exp(-gl(t, 0))) << "\n";
  }
  audio::MelSpectrogram spec{mel, cfg.mel};
  audio::write_wav(wav_path, audio::griffin_lim_invert(spec, a.gl_iters, cfg.train.seed));

  for (const auto& p : {mel_path, align_path, align_csv, gate_csv, wav_path}) man.output(p);
  json info = {{"text", a.text},
               {"marked", enc.marked},
               {"ids", enc.ids.size()},
               {"frames", mel.rows()},
               {"stop_reason", model::to_string(syn.decode.stop_reason)},
               {"final_position", path.empty() ? 0 : path.back()},
               {"warnings", warnings}};
  man.extra("synthesis", info);
  man.write();
  std::cout << info.dump() << "\n";
  return kExitOk;
}

struct PauseArgs {
  std::vector<std::string> inputs;
  std::optional<double> threshold;  // default: per-file energy percentile
  double percentile = 0.2;
  double min_ms = 58.0;
  std::vector<double> sweep;
};

Eigen::MatrixXd load_frames(const std::string& path, const audio::MelConfig& mc) {
  std::ifstream f(path, std::ios::binary);
  char magic[8] = {};
  f.read(magic, 8);
  if (f.gcount() == 8 && std::string(magic, 8) == "KTTSMAT1") return data::load_matrix(path);
  return audio::mel_spectrogram(audio::load_wav(path, mc.sample_rate), mc).frames;
}

int cmd_analyze_pauses(const Globals& g, const PauseArgs& a) {
  Manifest man("analyze-pauses", g);
  const auto cfg = load_config(g);
  man.config(cfg);
  man.seed(cfg.train.seed);
  const int min_frames = std::max(1, static_cast<int>(std::ceil(a.min_ms / 1000.0 / cfg.mel.frame_seconds() - 1e-9)));

  const auto jsonl_path = out_file(g, "pauses.jsonl");
  const auto plot_path = out_file(g, "pause_plot.csv");
  const auto summary_path = out_file(g, "pause_summary.json");
  std::ofstream jl(jsonl_path), plot(plot_path);
  plot << "file,pause_count,mean_pause_seconds\n";

  std::vector<Eigen::MatrixXd> loaded;
  std::size_t errors = 0, total_pauses = 0;
  double total_pause_seconds = 0.0, total_seconds = 0.0;
  for (const auto& path : a.inputs) {
    man.input(path);
    json rec;
    rec["file"] = path;
    try {
      auto frames = load_frames(path, cfg.mel);
      const double threshold = a.threshold ? *a.threshold : audio::energy_percentile(frames, a.percentile);
      rec["threshold"] = threshold;
      const auto det = audio::detect_pauses(frames, threshold, min_frames, cfg.mel.frame_seconds());
      const auto stats = audio::pause_statistics(det.pauses, frames.rows(), cfg.mel);
      json segs = json::array();
      for (const auto& s : det.pauses) segs.push_back({{"start", s.start}, {"end", s.end}, {"seconds", s.seconds}});
      rec["pauses"] = segs;
      if (det.leading) rec["leading_silence_seconds"] = det.leading->seconds;
      if (det.trailing) rec["trailing_silence_seconds"] = det.trailing->seconds;
      rec["count"] = stats.count;
      rec["mean_seconds"] = stats.mean_seconds;
      rec["total_seconds"] = stats.total_seconds;
      rec["rate_per_second"] = stats.rate_per_second;
      rec["frames"] = frames.rows();
      plot << path << "," << stats.count << "," << stats.mean_seconds << "\n";
      total_pauses += stats.count;
      total_pause_seconds += stats.total_seconds;
      total_seconds += static_cast<double>(frames.rows()) * cfg.mel.frame_seconds();
      loaded.push_back(std::move(frames));
    } catch (const Error& e) {
      rec["error"] = e.what();
      ++errors;
      warn(path + ": " + e.what());
    }
    jl << rec.dump() << "\n";
  }

  json summary;
  summary["files"] = a.inputs.size();
  summary["analyzed"] = loaded.size();
  summary["errors"] = errors;
  if (a.threshold) {
    summary["threshold"] = *a.threshold;
  } else {
    summary["threshold_percentile"] = a.percentile;
  }
  summary["min_frames"] = min_frames;
  summary["pause_count"] = total_pauses;
  summary["mean_pause_seconds"] = total_pauses ? total_pause_seconds / static_cast<double>(total_pauses) : 0.0;
  summary["total_pause_seconds"] = total_pause_seconds;
  summary["pauses_per_second"] = total_seconds > 0 ? static_cast<double>(total_pauses) / total_seconds : 0.0;
  data::write_file(summary_path, summary.dump(2) + "\n");
  for (const auto& p : {jsonl_path, plot_path, summary_path}) man.output(p);

  if (!a.sweep.empty()) {
    // Total detected silence, edges included, per threshold.
    const auto sweep_path = out_file(g, "pause_sweep.csv");
    std::ofstream sw(sweep_path);
    sw << "threshold,pause_count,pause_seconds,detected_silence_seconds\n";
    auto thresholds = a.sweep;
    std::sort(thresholds.begin(), thresholds.end());
    for (double th : thresholds) {
      std::size_t count = 0;
      double pause_s = 0.0, silence_s = 0.0;
      for (const auto& frames : loaded) {
        const auto det = audio::detect_pauses(frames, th, min_frames, cfg.mel.frame_seconds());
        count += det.pauses.size();
        for (const auto& s : det.pauses) pause_s += s.seconds;
        silence_s += det.detected_silence_seconds();
      }
      sw << th << "," << count << "," << pause_s << "," << silence_s << "\n";
    }
    man.output(sweep_path);
  }
  man.extra("summary", summary);
  man.write();
  std::cout << summary.dump() << "\n";
  return kExitOk;
}

std::vector<double> parse_sweep(const std::string& spec) {
  // "lo:hi:step"
  std::vector<double> out;
  if (spec.empty()) return out;
  double lo = 0, hi = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream is(spec);
  if (!(is >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !(step > 0) || hi < lo) {
    throw ConfigError("--sweep expects lo:hi:step with step > 0, got '" + spec + "'");
  }
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Korean syntax-aware TTS toolkit"};
  app.set_version_flag("--version", KTTS_VERSION);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Config file (key = value lines)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  FixtureArgs fa;
  auto* fixture = app.add_subcommand("fixture", "Write the synthetic fixture corpus");
  fixture->add_option("-n,--count", fa.count, "Number of utterances (1-10)")->capture_default_str();
  fixture->add_flag("--no-parses", fa.no_parses, "Skip the parse sidecar");

  PreprocessArgs pa;
  auto* prep = app.add_subcommand("preprocess", "Compute and cache ids and mel spectrograms");
  prep->add_option("--metadata", pa.metadata, "wav_path|text metadata file")->required();
  prep->add_option("--parses", pa.parses, "Bracketed parse sidecar, one tree per metadata line");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train from a preprocessed directory");
  train->add_option("--data", ta.data_dir, "Directory written by preprocess")->required();
  train->add_option("--max-iters", ta.max_iters, "Stop after this many iterations");
  train->add_option("--lambda", ta.lambda, "Weight of the TP-GST term");
  train->add_flag("--resume", ta.resume, "Continue from <out>/latest.ckpt when present");
  train->add_flag("--all", ta.all_data, "Train on every utterance (no validation split)");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Synthesize one sentence from a checkpoint");
  synth->add_option("--checkpoint", sa.checkpoint, "Checkpoint file")->required();
  synth->add_option("--text", sa.text, "Sentence to synthesize")->required();
  synth->add_option("--parse", sa.parse, "Bracketed parse of the sentence");
  synth->add_option("--prefix", sa.prefix, "Output file prefix")->capture_default_str();
  synth->add_option("--griffin-lim-iters", sa.gl_iters, "Griffin-Lim iterations")->capture_default_str();

  PauseArgs pz;
  std::string sweep;
  auto* pauses = app.add_subcommand("analyze-pauses", "Detect pauses in WAV or mel files");
  pauses->add_option("inputs", pz.inputs, "WAV or mel matrix files");
  auto* thr = pauses->add_option("--threshold", pz.threshold, "Mean log-mel energy below which a frame is silent");
  pauses->add_option("--percentile", pz.percentile, "Per-file energy quantile used when --threshold is absent")
      ->check(CLI::Range(0.0, 1.0))
      ->excludes(thr)
      ->capture_default_str();
  pauses->add_option("--min-ms", pz.min_ms, "Shortest pause in milliseconds")->capture_default_str();
  pauses->add_option("--sweep", sweep, "Threshold sweep lo:hi:step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    fs::create_directories(g.out);
    if (*fixture) return cmd_fixture(g, fa);
    if (*prep) return cmd_preprocess(g, pa);
    if (*train) return cmd_train(g, ta);
    if (*synth) return cmd_synth(g, sa);
    if (*pauses) {
      pz.sweep = parse_sweep(sweep);
      return cmd_analyze_pauses(g, pz);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
