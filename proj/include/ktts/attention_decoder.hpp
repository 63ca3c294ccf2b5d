#pragma once

#include <string>
#include <vector>

#include "ktts/layers.hpp"

namespace ktts::model {

using nn::Matrix;
using nn::Var;

struct DecoderConfig {
  int n_mels = 80;
  std::vector<int> prenet_sizes = {256, 256};
  double prenet_dropout = 0.5;
  int attention_rnn_units = 1024;
  int decoder_rnn_units = 1024;
  int attention_dim = 128;
  double attention_bias_init = -1.0;  // initial move-logit offset
  int reduction = 1;                  // r, frames per step
  int postnet_layers = 5;
  int postnet_channels = 512;
  int postnet_kernel = 5;
  int max_decoder_steps = 1000;       // in frames
  double gate_threshold = 0.5;
  double sma_noise = 2.0;

  void validate() const;
};

enum class AttentionMode { SoftTrain, HardInfer };

enum class StopReason { Gate, MaxSteps, TeacherForced };
std::string to_string(StopReason r);

struct DecodeOutput {
  Var mel_pre;      // T x n_mels
  Var mel_post;     // T x n_mels
  Var gate_logits;  // T x 1
  Var alignments;   // T x T_text
  StopReason stop_reason = StopReason::TeacherForced;
  Matrix first_prenet_input;  // what the pre-net consumed at step 0
};

/// One stepwise-monotonic attention update on plain values.
/// Soft mode: p = sigmoid(energy + noise), next_i = prev_i (1 - p_i) + prev_{i-1} p_{i-1},
/// with the last position never moving so mass is conserved. Hard mode: no
/// noise, prev must be one-hot and the focus advances one slot when p > 0.5.
Matrix sma_step(const Matrix& energies, const Matrix& alpha_prev, AttentionMode mode, double noise_scale, nn::Rng& rng);

/// Graph-building form of the soft update.
Var sma_step(const Var& energies, const Var& alpha_prev, double noise_scale, nn::Rng& rng);

/// Column of the largest weight in each alignment row.
std::vector<Eigen::Index> alignment_path(const Matrix& alignments);

/// True when the path starts at position 0, never moves back and advances by
/// at most one position per frame.
bool is_monotonic_path(const std::vector<Eigen::Index>& path);

class AttentionDecoder {
 public:
  AttentionDecoder() = default;
  AttentionDecoder(const DecoderConfig& cfg, int memory_dim, nn::ParamStore& ps, nn::Rng& rng);

  const DecoderConfig& config() const { return cfg_; }

  /// Training pass: the pre-net consumes the previous ground-truth frame (a
  /// zero go-frame first). Output has exactly target.rows() frames.
  DecodeOutput decode_teacher_forced(const Var& memory, std::size_t memory_length, const Matrix& target, nn::Rng& rng,
                                     AttentionMode mode = AttentionMode::SoftTrain) const;

  /// Inference: feeds back its own frames with hard monotonic attention until
  /// the gate fires or max_decoder_steps frames were produced. No graph is built.
  DecodeOutput decode_free_running(const Var& memory, std::size_t memory_length, nn::Rng& rng) const;

  /// 5-layer convolutional residual (tanh on all but the last layer).
  Var postnet(const Var& mel_pre) const;

  /// Post-net convolutions, first to last.
  const std::vector<nn::Conv1d>& postnet_layers() const { return postnet_; }

 private:
  struct StepState;
  struct StepOutput {
    Var frames;  // 1 x (r * n_mels)
    Var gates;   // 1 x r
  };
  StepState start(const Var& memory, std::size_t memory_length) const;
  StepOutput step(StepState& s, const Var& prev_frame, nn::Rng& rng, AttentionMode mode) const;

  DecoderConfig cfg_;
  int memory_dim_ = 0;
  std::vector<nn::Linear> prenet_;
  nn::Lstm attention_rnn_;
  nn::Linear query_proj_;
  nn::Linear memory_proj_;
  Var energy_vector_;  // attention_dim x 1
  Var energy_bias_;    // 1 x 1
  nn::Lstm decoder_rnn_;
  nn::Linear frame_proj_;
  nn::Linear gate_proj_;
  std::vector<nn::Conv1d> postnet_;
};

}  // namespace ktts::model
