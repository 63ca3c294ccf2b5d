#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ktts/audio_features.hpp"
#include "ktts/checkpoint.hpp"
#include "ktts/errors.hpp"
#include "ktts/pipeline.hpp"
#include "ktts/syntax_boundaries.hpp"
#include "ktts/text_frontend.hpp"
#include "ktts/training.hpp"

namespace py = pybind11;
using namespace ktts;

namespace {

// Loaded checkpoint plus the config and symbols needed to encode text.
class Synthesizer {
 public:
  explicit Synthesizer(const std::string& checkpoint)
      : ckpt_(training::load_checkpoint(checkpoint)), model_(training::model_from_checkpoint(ckpt_)) {}

  py::dict synthesize(const std::string& text, const std::optional<std::string>& parse, std::uint64_t seed) const {
    std::vector<std::string> warnings;
    const auto enc = pipeline::encode_text(text, parse, ckpt_.config, ckpt_.symbols, &warnings);
    nn::Rng rng(seed);
    model::Synthesis syn;
    {
      py::gil_scoped_release release;
      syn = model_.synthesize(enc.ids, rng);
    }
    py::dict out;
    out["mel"] = syn.decode.mel_post->value;
    out["mel_pre"] = syn.decode.mel_pre->value;
    out["alignment"] = syn.decode.alignments->value;
    out["gate_logits"] = Eigen::VectorXd(syn.decode.gate_logits->value.col(0));
    out["tpae"] = Eigen::VectorXd(syn.tpae.vector->value.row(0).transpose());
    out["stop_reason"] = model::to_string(syn.decode.stop_reason);
    out["marked"] = enc.marked;
    out["ids"] = enc.ids;
    out["warnings"] = warnings;
    return out;
  }

  std::size_t parameter_count() const { return model_.params().count(); }
  long iteration() const { return ckpt_.iteration; }
  std::string config_text() const { return ckpt_.config.to_text(); }

 private:
  training::Checkpoint ckpt_;
  model::Model model_;
};

}  // namespace

PYBIND11_MODULE(_ktts, m) {
  m.doc() = "Korean syntax-aware TTS core";

  static py::exception<Error> ktts_error(m, "KttsError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(ktts_error, e.what());
    }
  });

  m.def(
      "decompose",
      [](const std::string& s) { return text::to_utf8(text::decompose_hangul(std::string_view(s))); },
      py::arg("text"), "Replace each Hangul syllable by its positional jamo.");
  m.def(
      "compose", [](const std::string& s) { return text::compose_jamo(text::from_utf8(s)); }, py::arg("jamo"),
      "Recompose positional jamo into syllables.");
  m.def(
      "to_model_text",
      [](const std::string& s) { return text::to_model_text(s, text::SymbolTable::default_table()); },
      py::arg("text"));
  m.def(
      "mark_text",
      [](const std::string& s, const std::string& parse, std::optional<std::set<std::string>> categories) {
        return syntax::mark_text(s, parse, categories ? *categories : syntax::default_categories());
      },
      py::arg("text"), py::arg("parse"), py::arg("categories") = py::none(),
      "Insert '|' after every constituent of the given categories.");
  m.def(
      "encode_text",
      [](const std::string& s, const std::optional<std::string>& parse, const std::string& preset) {
        const auto cfg = FullConfig::from_preset(preset);
        std::vector<std::string> warnings;
        const auto e = pipeline::encode_text(s, parse, cfg, text::SymbolTable::default_table(), &warnings);
        py::dict d;
        d["marked"] = e.marked;
        d["model_text"] = e.model_text;
        d["ids"] = e.ids;
        d["warnings"] = warnings;
        return d;
      },
      py::arg("text"), py::arg("parse") = py::none(), py::arg("preset") = "default");

  m.def(
      "mel_spectrogram",
      [](const std::vector<double>& samples, int sample_rate) {
        audio::Waveform w{samples, sample_rate};
        audio::MelConfig cfg;
        cfg.sample_rate = sample_rate;
        return audio::mel_spectrogram(w, cfg).frames;
      },
      py::arg("samples"), py::arg("sample_rate") = audio::kCorpusSampleRate,
      "Log-mel spectrogram (frames x 80) with the default analysis settings.");
  m.def(
      "griffin_lim",
      [](const Eigen::MatrixXd& mel, int iterations, std::uint64_t seed) {
        audio::MelSpectrogram m{mel, audio::MelConfig{}};
        return audio::griffin_lim_invert(m, iterations, seed).samples;
      },
      py::arg("mel"), py::arg("iterations") = 60, py::arg("seed") = 0);
  m.def(
      "detect_pauses",
      [](const Eigen::MatrixXd& frames, double threshold, int min_frames) {
        const auto d = audio::detect_pauses(frames, threshold, min_frames, audio::MelConfig{}.frame_seconds());
        std::vector<std::tuple<long, long, double>> out;
        for (const auto& p : d.pauses) out.emplace_back(p.start, p.end, p.seconds);
        return out;
      },
      py::arg("frames"), py::arg("threshold"), py::arg("min_frames") = 5,
      "Interior pauses as (start, end, seconds); end is exclusive.");
  m.def(
      "lr_schedule", [](long iteration) { return training::lr_schedule(iteration); }, py::arg("iteration"));

  m.def(
      "init_checkpoint",
      [](const std::string& path, const std::string& preset, std::uint64_t seed) {
        auto cfg = FullConfig::from_preset(preset);
        cfg.train.seed = seed;
        const model::Model model(cfg.model, text::SymbolTable::default_table(), seed);
        training::save_checkpoint(path, training::capture(model, cfg));
      },
      py::arg("path"), py::arg("preset") = "small", py::arg("seed") = 0,
      "Write an untrained checkpoint for the given preset.");

  py::class_<Synthesizer>(m, "Synthesizer")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("synthesize", &Synthesizer::synthesize, py::arg("text"), py::arg("parse") = py::none(),
           py::arg("seed") = 1234)
      .def_property_readonly("parameter_count", &Synthesizer::parameter_count)
      .def_property_readonly("iteration", &Synthesizer::iteration)
      .def_property_readonly("config_text", &Synthesizer::config_text);
}
