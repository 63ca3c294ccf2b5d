#include "ktts/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ktts/errors.hpp"
#include "ktts/hash.hpp"

namespace ktts {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

long long parse_integer(const std::string& s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const FullConfig&)> get;
  std::function<void(FullConfig&, const std::string&)> set;
};

template <class T>
Field int_field(std::string key, T FullConfig::*section, int T::*member) {
  return {key, [=](const FullConfig& c) { return std::to_string((c.*section).*member); },
          [=](FullConfig& c, const std::string& v) { (c.*section).*member = static_cast<int>(parse_integer(v)); }};
}

template <class T>
Field double_field(std::string key, T FullConfig::*section, double T::*member) {
  return {key, [=](const FullConfig& c) { return fmt_double((c.*section).*member); },
          [=](FullConfig& c, const std::string& v) { (c.*section).*member = parse_double(v); }};
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(static_cast<int>(parse_integer(s)));
  return out;
}

const std::vector<Field>& fields() {
  using audio::MelConfig;
  using model::DecoderConfig;
  using model::EncoderConfig;
  using training::TrainConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(int_field("mel.sample_rate", &FullConfig::mel, &MelConfig::sample_rate));
    f.push_back(int_field("mel.n_fft", &FullConfig::mel, &MelConfig::n_fft));
    f.push_back(int_field("mel.hop", &FullConfig::mel, &MelConfig::hop));
    f.push_back(int_field("mel.window", &FullConfig::mel, &MelConfig::window));
    f.push_back(int_field("mel.n_mels", &FullConfig::mel, &MelConfig::n_mels));
    f.push_back(double_field("mel.fmin", &FullConfig::mel, &MelConfig::fmin));
    f.push_back(double_field("mel.fmax", &FullConfig::mel, &MelConfig::fmax));
    f.push_back(double_field("mel.log_floor", &FullConfig::mel, &MelConfig::log_floor));

    auto enc = [](int EncoderConfig::*m) {
      return [m](FullConfig& c) -> int& { return c.model.encoder.*m; };
    };
    auto add_int = [&f](std::string key, auto ref) {
      f.push_back({key, [ref](const FullConfig& c) { return std::to_string(ref(const_cast<FullConfig&>(c))); },
                   [ref](FullConfig& c, const std::string& v) { ref(c) = static_cast<int>(parse_integer(v)); }});
    };
    auto add_double = [&f](std::string key, auto ref) {
      f.push_back({key, [ref](const FullConfig& c) { return fmt_double(ref(const_cast<FullConfig&>(c))); },
                   [ref](FullConfig& c, const std::string& v) { ref(c) = parse_double(v); }});
    };
    add_int("encoder.embedding_dim", enc(&EncoderConfig::embedding_dim));
    add_int("encoder.bank_max_width", enc(&EncoderConfig::bank_max_width));
    add_int("encoder.bank_channels", enc(&EncoderConfig::bank_channels));
    add_int("encoder.projection_channels", enc(&EncoderConfig::projection_channels));
    add_int("encoder.highway_layers", enc(&EncoderConfig::highway_layers));
    add_int("encoder.rnn_units", enc(&EncoderConfig::rnn_units));
    add_int("encoder.tpae_conv_width", enc(&EncoderConfig::tpae_conv_width));
    add_int("encoder.tpae_conv_channels", enc(&EncoderConfig::tpae_conv_channels));
    add_int("encoder.tpae_rnn_units", enc(&EncoderConfig::tpae_rnn_units));
    add_int("encoder.tpae_fc_layers", enc(&EncoderConfig::tpae_fc_layers));
    add_int("encoder.embedding_out_dim", enc(&EncoderConfig::embedding_out_dim));

    f.push_back({"reference.channels", [](const FullConfig& c) { return join(c.model.reference.channels); },
                 [](FullConfig& c, const std::string& v) { c.model.reference.channels = parse_int_list(v); }});
    add_int("reference.rnn_units", [](FullConfig& c) -> int& { return c.model.reference.rnn_units; });
    add_int("reference.min_frames", [](FullConfig& c) -> int& { return c.model.reference.min_frames; });
    add_int("gst.num_tokens", [](FullConfig& c) -> int& { return c.model.style.num_tokens; });
    add_int("gst.heads", [](FullConfig& c) -> int& { return c.model.style.heads; });
    add_int("gst.dim", [](FullConfig& c) -> int& { return c.model.style.dim; });

    auto dec_i = [](int DecoderConfig::*m) { return [m](FullConfig& c) -> int& { return c.model.decoder.*m; }; };
    auto dec_d = [](double DecoderConfig::*m) { return [m](FullConfig& c) -> double& { return c.model.decoder.*m; }; };
    add_int("decoder.n_mels", dec_i(&DecoderConfig::n_mels));
    f.push_back({"decoder.prenet_sizes", [](const FullConfig& c) { return join(c.model.decoder.prenet_sizes); },
                 [](FullConfig& c, const std::string& v) { c.model.decoder.prenet_sizes = parse_int_list(v); }});
    add_double("decoder.prenet_dropout", dec_d(&DecoderConfig::prenet_dropout));
    add_int("decoder.attention_rnn_units", dec_i(&DecoderConfig::attention_rnn_units));
    add_int("decoder.decoder_rnn_units", dec_i(&DecoderConfig::decoder_rnn_units));
    add_int("decoder.attention_dim", dec_i(&DecoderConfig::attention_dim));
    add_double("decoder.attention_bias_init", dec_d(&DecoderConfig::attention_bias_init));
    add_int("decoder.reduction", dec_i(&DecoderConfig::reduction));
    add_int("decoder.postnet_layers", dec_i(&DecoderConfig::postnet_layers));
    add_int("decoder.postnet_channels", dec_i(&DecoderConfig::postnet_channels));
    add_int("decoder.postnet_kernel", dec_i(&DecoderConfig::postnet_kernel));
    add_int("decoder.max_decoder_steps", dec_i(&DecoderConfig::max_decoder_steps));
    add_double("decoder.gate_threshold", dec_d(&DecoderConfig::gate_threshold));
    add_double("decoder.sma_noise", dec_d(&DecoderConfig::sma_noise));

    add_int("train.batch_size", [](FullConfig& c) -> int& { return c.train.batch_size; });
    add_double("train.lambda", [](FullConfig& c) -> double& { return c.train.lambda; });
    f.push_back({"train.schedule",
                 [](const FullConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.train.schedule.size(); ++i) {
                     out += (i ? ", " : "") + std::to_string(c.train.schedule[i].first) + ":" +
                            fmt_double(c.train.schedule[i].second);
                   }
                   return out;
                 },
                 [](FullConfig& c, const std::string& v) {
                   training::LrSchedule s;
                   for (const auto& item : split_list(v)) {
                     const auto colon = item.find(':');
                     if (colon == std::string::npos) throw ConfigError("schedule entries look like iteration:rate");
                     s.emplace_back(parse_integer(trim(item.substr(0, colon))), parse_double(trim(item.substr(colon + 1))));
                   }
                   training::validate_schedule(s);
                   c.train.schedule = s;
                 }});
    add_double("train.valid_fraction", [](FullConfig& c) -> double& { return c.train.valid_fraction; });
    f.push_back({"train.seed", [](const FullConfig& c) { return std::to_string(c.train.seed); },
                 [](FullConfig& c, const std::string& v) {
                   std::uint64_t s = 0;
                   auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
                   if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("bad seed '" + v + "'");
                   c.train.seed = s;
                 }});
    f.push_back({"train.max_iterations", [](const FullConfig& c) { return std::to_string(c.train.max_iterations); },
                 [](FullConfig& c, const std::string& v) { c.train.max_iterations = parse_integer(v); }});
    f.push_back({"train.checkpoint_interval",
                 [](const FullConfig& c) { return std::to_string(c.train.checkpoint_interval); },
                 [](FullConfig& c, const std::string& v) { c.train.checkpoint_interval = parse_integer(v); }});
    f.push_back({"train.gate_loss",
                 [](const FullConfig& c) { return std::string(c.train.gate_loss == training::GateLoss::BCE ? "bce" : "mse"); },
                 [](FullConfig& c, const std::string& v) {
                   if (v == "bce") c.train.gate_loss = training::GateLoss::BCE;
                   else if (v == "mse") c.train.gate_loss = training::GateLoss::MSE;
                   else throw ConfigError("gate loss must be bce or mse");
                 }});
    add_double("train.gate_pos_weight", [](FullConfig& c) -> double& { return c.train.gate_pos_weight; });
    add_double("adam.beta1", [](FullConfig& c) -> double& { return c.train.adam.beta1; });
    add_double("adam.beta2", [](FullConfig& c) -> double& { return c.train.adam.beta2; });
    add_double("adam.eps", [](FullConfig& c) -> double& { return c.train.adam.eps; });
    add_double("adam.weight_decay", [](FullConfig& c) -> double& { return c.train.adam.weight_decay; });
    add_double("adam.clip_norm", [](FullConfig& c) -> double& { return c.train.adam.clip_norm; });

    f.push_back({"syntax.categories",
                 [](const FullConfig& c) {
                   std::string out;
                   for (const auto& cat : c.categories) out += (out.empty() ? "" : ", ") + cat;
                   return out;
                 },
                 [](FullConfig& c, const std::string& v) {
                   auto items = split_list(v);
                   c.categories = std::set<std::string>(items.begin(), items.end());
                 }});
    return f;
  }();
  return table;
}

}  // namespace

FullConfig FullConfig::from_preset(const std::string& name) {
  FullConfig c;
  c.preset = name;
  if (name == "default") return c;
  if (name == "small") {
    c.model = model::ModelConfig::small();
    c.train.batch_size = 8;
    c.train.checkpoint_interval = 500;
    c.train.max_iterations = 3000;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected default or small)");
}

FullConfig FullConfig::parse(std::string_view text) {
  struct Line {
    std::size_t number;
    std::string key, value;
  };
  std::vector<Line> lines;
  std::string preset = "default";
  std::istringstream is{std::string(text)};
  std::string raw;
  std::size_t number = 0;
  while (std::getline(is, raw)) {
    ++number;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    Line l{number, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (l.key == "preset") preset = l.value;
    else lines.push_back(std::move(l));
  }
  FullConfig c = from_preset(preset);
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  for (const auto& l : lines) {
    auto it = by_key.find(l.key);
    if (it == by_key.end()) throw ConfigError("config line " + std::to_string(l.number) + ": unknown key '" + l.key + "'");
    try {
      it->second->set(c, l.value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(l.number) + " (" + l.key + "): " + e.what());
    }
  }
  return c;
}

FullConfig FullConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string FullConfig::to_text() const {
  std::string out = "preset = " + preset + "\n";
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

void FullConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config file " + path);
  out << to_text();
}

std::uint64_t FullConfig::hash() const {
  // The preset name only chooses starting values, so it stays out of the key.
  std::string body;
  for (const auto& f : fields()) body += f.key + "=" + f.get(*this) + "\n";
  return fnv1a(body);
}

void FullConfig::validate() const {
  mel.validate();
  model.validate();
  train.validate();
  if (model.decoder.n_mels != mel.n_mels) {
    throw ConfigError("decoder.n_mels (" + std::to_string(model.decoder.n_mels) + ") must equal mel.n_mels (" +
                      std::to_string(mel.n_mels) + ")");
  }
  if (categories.empty()) throw ConfigError("syntax.categories must name at least one category");
}

std::vector<std::string> FullConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

}  // namespace ktts
