#include "ktts/attention_decoder.hpp"

#include <cmath>

#include "ktts/errors.hpp"

namespace ktts::model {

using namespace ktts::nn;

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::Gate: return "gate";
    case StopReason::MaxSteps: return "max_steps";
    case StopReason::TeacherForced: return "teacher_forced";
  }
  return "unknown";
}

void DecoderConfig::validate() const {
  if (n_mels < 1) throw ConfigError("decoder: n_mels must be positive");
  if (reduction < 1) throw ConfigError("decoder: reduction factor must be >= 1");
  if (!(gate_threshold > 0.0 && gate_threshold < 1.0)) throw ConfigError("decoder: gate threshold must lie in (0, 1)");
  if (!(prenet_dropout >= 0.0 && prenet_dropout < 1.0)) throw ConfigError("decoder: dropout must lie in [0, 1)");
  if (postnet_layers < 1 || postnet_channels < 1 || postnet_kernel < 1) throw ConfigError("decoder: bad post-net shape");
  if (attention_rnn_units < 1 || decoder_rnn_units < 1 || attention_dim < 1) throw ConfigError("decoder: sizes must be positive");
  if (max_decoder_steps < 1) throw ConfigError("decoder: max steps must be positive");
  for (int s : prenet_sizes) {
    if (s < 1) throw ConfigError("decoder: pre-net sizes must be positive");
  }
  if (!(sma_noise >= 0.0)) throw ConfigError("decoder: noise scale must be non-negative");
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::Index focus_of(const Matrix& alpha) {
  Eigen::Index idx = 0;
  alpha.row(0).maxCoeff(&idx);
  return idx;
}

}  // namespace

std::vector<Eigen::Index> alignment_path(const Matrix& alignments) {
  std::vector<Eigen::Index> path;
  path.reserve(static_cast<std::size_t>(alignments.rows()));
  for (Eigen::Index t = 0; t < alignments.rows(); ++t) {
    Eigen::Index idx = 0;
    alignments.row(t).maxCoeff(&idx);
    path.push_back(idx);
  }
  return path;
}

bool is_monotonic_path(const std::vector<Eigen::Index>& path) {
  Eigen::Index prev = 0;
  for (Eigen::Index i : path) {
    if (i < prev || i - prev > 1) return false;
    prev = i;
  }
  return true;
}

Matrix sma_step(const Matrix& energies, const Matrix& alpha_prev, AttentionMode mode, double noise_scale, Rng& rng) {
  const Eigen::Index N = alpha_prev.cols();
  if (energies.rows() != 1 || alpha_prev.rows() != 1 || energies.cols() != N) throw ShapeError("sma_step: shape mismatch");
  if (mode == AttentionMode::HardInfer) {
    const Eigen::Index i = focus_of(alpha_prev);
    const bool move = sigmoid(energies(0, i)) > 0.5 && i + 1 < N;
    Matrix next = Matrix::Zero(1, N);
    next(0, move ? i + 1 : i) = 1.0;
    return next;
  }
  Matrix p(1, N);
  for (Eigen::Index j = 0; j < N; ++j) p(0, j) = sigmoid(energies(0, j) + noise_scale * rng.normal());
  p(0, N - 1) = 0.0;
  Matrix next(1, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    next(0, j) = alpha_prev(0, j) * (1.0 - p(0, j)) + (j > 0 ? alpha_prev(0, j - 1) * p(0, j - 1) : 0.0);
  }
  return next;
}

Var sma_step(const Var& energies, const Var& alpha_prev, double noise_scale, Rng& rng) {
  const Eigen::Index N = alpha_prev->cols();
  Matrix noise(1, N);
  for (Eigen::Index j = 0; j < N; ++j) noise(0, j) = noise_scale * rng.normal();
  Var p = sigmoid(add(energies, constant(std::move(noise))));
  Matrix keep = Matrix::Ones(1, N);
  keep(0, N - 1) = 0.0;
  return monotonic_advance(alpha_prev, mul(p, constant(std::move(keep))));
}

AttentionDecoder::AttentionDecoder(const DecoderConfig& cfg, int memory_dim, ParamStore& ps, Rng& rng)
    : cfg_(cfg), memory_dim_(memory_dim) {
  cfg_.validate();
  Eigen::Index in = cfg.n_mels;
  for (std::size_t i = 0; i < cfg.prenet_sizes.size(); ++i) {
    prenet_.emplace_back(ps, "decoder.prenet." + std::to_string(i), in, cfg.prenet_sizes[i], rng);
    in = cfg.prenet_sizes[i];
  }
  attention_rnn_ = Lstm(ps, "decoder.attention_rnn", in + memory_dim, cfg.attention_rnn_units, rng);
  query_proj_ = Linear(ps, "decoder.attention.query", cfg.attention_rnn_units, cfg.attention_dim, rng);
  memory_proj_ = Linear(ps, "decoder.attention.memory", memory_dim, cfg.attention_dim, rng);
  energy_vector_ = ps.add("decoder.attention.v", glorot(cfg.attention_dim, 1, rng));
  energy_bias_ = ps.add("decoder.attention.bias", Matrix::Constant(1, 1, cfg.attention_bias_init));
  decoder_rnn_ = Lstm(ps, "decoder.decoder_rnn", cfg.attention_rnn_units + memory_dim, cfg.decoder_rnn_units, rng);
  frame_proj_ = Linear(ps, "decoder.frame_proj", cfg.decoder_rnn_units + memory_dim, cfg.reduction * cfg.n_mels, rng);
  gate_proj_ = Linear(ps, "decoder.gate_proj", cfg.decoder_rnn_units + memory_dim, cfg.reduction, rng);
  Eigen::Index c_in = cfg.n_mels;
  for (int l = 0; l < cfg.postnet_layers; ++l) {
    const Eigen::Index c_out = (l + 1 == cfg.postnet_layers) ? cfg.n_mels : cfg.postnet_channels;
    postnet_.emplace_back(ps, "postnet.conv." + std::to_string(l), c_in, c_out, cfg.postnet_kernel, rng);
    c_in = c_out;
  }
}

struct AttentionDecoder::StepState {
  Var memory;  // N x memory_dim (valid rows only)
  Var keys;    // N x attention_dim
  Lstm::State attention;
  Lstm::State decoder;
  Var context;  // 1 x memory_dim
  Var alpha;    // 1 x N
};

AttentionDecoder::StepState AttentionDecoder::start(const Var& memory, std::size_t memory_length) const {
  if (memory->cols() != memory_dim_) {
    throw ShapeError("decoder: memory has " + std::to_string(memory->cols()) + " columns, expected " + std::to_string(memory_dim_));
  }
  if (memory_length == 0 || static_cast<Eigen::Index>(memory_length) > memory->rows()) {
    throw ShapeError("decoder: invalid memory length");
  }
  StepState s;
  s.memory = slice_rows(memory, 0, static_cast<Eigen::Index>(memory_length));
  s.keys = memory_proj_(s.memory);
  s.attention = attention_rnn_.zero_state();
  s.decoder = decoder_rnn_.zero_state();
  s.context = constant(Matrix::Zero(1, memory_dim_));
  Matrix a0 = Matrix::Zero(1, static_cast<Eigen::Index>(memory_length));
  a0(0, 0) = 1.0;
  s.alpha = constant(std::move(a0));
  return s;
}

AttentionDecoder::StepOutput AttentionDecoder::step(StepState& s, const Var& prev_frame, Rng& rng, AttentionMode mode) const {
  Var x = prev_frame;
  for (const auto& layer : prenet_) {
    x = relu(layer(x));
    if (cfg_.prenet_dropout > 0.0) {
      const double keep = 1.0 - cfg_.prenet_dropout;
      Matrix mask(1, x->cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(0, j) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
      x = mul(x, constant(std::move(mask)));
    }
  }
  s.attention = attention_rnn_.step_input(concat_cols({x, s.context}), s.attention);
  Var q = query_proj_(s.attention.h);
  Var energies = add_row(transpose(matmul(tanh(add_row(s.keys, q)), energy_vector_)), energy_bias_);
  if (mode == AttentionMode::SoftTrain) {
    s.alpha = sma_step(energies, s.alpha, cfg_.sma_noise, rng);
  } else {
    s.alpha = constant(sma_step(energies->value, s.alpha->value, AttentionMode::HardInfer, 0.0, rng));
  }
  s.context = matmul(s.alpha, s.memory);
  s.decoder = decoder_rnn_.step_input(concat_cols({s.attention.h, s.context}), s.decoder);
  Var out = concat_cols({s.decoder.h, s.context});
  return {frame_proj_(out), gate_proj_(out)};
}

Var AttentionDecoder::postnet(const Var& mel_pre) const {
  check_finite(mel_pre, "postnet.input");
  Var x = mel_pre;
  for (std::size_t l = 0; l < postnet_.size(); ++l) {
    x = postnet_[l](x);
    if (l + 1 < postnet_.size()) x = tanh(x);
  }
  return x;
}

namespace {

struct Collected {
  std::vector<Var> frames, gates, alignments;
};

void collect(Collected& c, const Var& frames, const Var& gates, const Var& alpha, int r, int n_mels) {
  for (int k = 0; k < r; ++k) {
    c.frames.push_back(r == 1 ? frames : slice_cols(frames, k * n_mels, n_mels));
    c.gates.push_back(r == 1 ? gates : slice_cols(gates, k, 1));
    c.alignments.push_back(alpha);
  }
}

}  // namespace

DecodeOutput AttentionDecoder::decode_teacher_forced(const Var& memory, std::size_t memory_length, const Matrix& target,
                                                     Rng& rng, AttentionMode mode) const {
  const int r = cfg_.reduction;
  if (target.cols() != cfg_.n_mels) {
    throw ShapeError("decoder: target has " + std::to_string(target.cols()) + " bands, expected " + std::to_string(cfg_.n_mels));
  }
  if (target.rows() < r) throw ShapeError("decoder: target shorter than the reduction factor");
  StepState s = start(memory, memory_length);
  const Eigen::Index T = target.rows();
  const Eigen::Index steps = (T + r - 1) / r;
  Collected c;
  DecodeOutput out;
  out.first_prenet_input = Matrix::Zero(1, cfg_.n_mels);
  Var prev = constant(out.first_prenet_input);
  for (Eigen::Index k = 0; k < steps; ++k) {
    StepOutput o = step(s, prev, rng, mode);
    collect(c, o.frames, o.gates, s.alpha, r, cfg_.n_mels);
    const Eigen::Index last = std::min<Eigen::Index>((k + 1) * r, T) - 1;
    prev = constant(target.row(last));
  }
  Var mel = concat_rows(c.frames);
  Var gates = concat_rows(c.gates);
  Var align = concat_rows(c.alignments);
  if (mel->rows() != T) {
    mel = slice_rows(mel, 0, T);
    gates = slice_rows(gates, 0, T);
    align = slice_rows(align, 0, T);
  }
  check_finite(mel, "decoder.frames");
  out.mel_pre = mel;
  out.mel_post = add(mel, postnet(mel));
  out.gate_logits = gates;
  out.alignments = align;
  out.stop_reason = StopReason::TeacherForced;
  return out;
}

DecodeOutput AttentionDecoder::decode_free_running(const Var& memory, std::size_t memory_length, Rng& rng) const {
  NoGradGuard no_grad;
  const int r = cfg_.reduction;
  StepState s = start(memory, memory_length);
  Collected c;
  DecodeOutput out;
  out.first_prenet_input = Matrix::Zero(1, cfg_.n_mels);
  Var prev = constant(out.first_prenet_input);
  out.stop_reason = StopReason::MaxSteps;
  Eigen::Index produced = 0;
  while (produced < cfg_.max_decoder_steps) {
    StepOutput o = step(s, prev, rng, AttentionMode::HardInfer);
    int emit = r;
    for (int k = 0; k < r; ++k) {
      if (sigmoid(o.gates->value(0, k)) > cfg_.gate_threshold) {
        emit = k + 1;
        out.stop_reason = StopReason::Gate;
        break;
      }
    }
    emit = static_cast<int>(std::min<Eigen::Index>(emit, cfg_.max_decoder_steps - produced));
    for (int k = 0; k < emit; ++k) {
      c.frames.push_back(constant(o.frames->value.middleCols(k * cfg_.n_mels, cfg_.n_mels)));
      c.gates.push_back(constant(o.gates->value.middleCols(k, 1)));
      c.alignments.push_back(s.alpha);
    }
    produced += emit;
    if (out.stop_reason == StopReason::Gate) break;
    prev = constant(o.frames->value.rightCols(cfg_.n_mels));
  }
  Var mel = concat_rows(c.frames);
  check_finite(mel, "decoder.frames");
  out.mel_pre = mel;
  out.mel_post = add(mel, postnet(mel));
  out.gate_logits = concat_rows(c.gates);
  out.alignments = concat_rows(c.alignments);
  return out;
}

}  // namespace ktts::model
