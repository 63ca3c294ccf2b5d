#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ktts/layers.hpp"

namespace ktts::model {

using nn::Matrix;
using nn::Var;

struct EncoderConfig {
  int embedding_dim = 256;
  int bank_max_width = 16;      // bank holds widths 1..bank_max_width
  int bank_channels = 128;
  int projection_channels = 256;
  int highway_layers = 4;
  int rnn_units = 128;          // per direction
  int tpae_conv_width = 3;
  int tpae_conv_channels = 256;
  int tpae_rnn_units = 128;
  int tpae_fc_layers = 1;
  int embedding_out_dim = 256;  // D, shared with the style-token embedding

  int memory_dim() const { return 2 * rnn_units; }
  void validate() const;
};

/// Encoder output for a batch. Each sequence is T_max x M; rows at and past
/// lengths[b] are zero.
struct TextMemory {
  std::vector<Var> sequences;
  std::vector<std::size_t> lengths;
};

enum class EmbeddingRole { TAE, TPAE };

struct AcousticEmbedding {
  Var vector;  // 1 x D
  EmbeddingRole role = EmbeddingRole::TPAE;
};

class ContextEncoder {
 public:
  ContextEncoder() = default;
  ContextEncoder(const EncoderConfig& cfg, std::size_t vocab_size, int pad_id, nn::ParamStore& ps, nn::Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  /// T x embedding_dim; padding ids give zero rows. Throws RangeError for ids
  /// outside the table.
  Var embed_symbols(const std::vector<int>& ids) const;

  /// CBHL over the first `length` rows of `embedded`; returns length x M.
  /// Throws NumericError naming the layer on non-finite activations.
  Var cbhl(const Var& embedded, std::size_t length) const;

  /// Batched form: `embedded[b]` may carry padding rows past `lengths[b]`.
  TextMemory cbhl_forward(const std::vector<Var>& embedded, const std::vector<std::size_t>& lengths) const;

  /// Conv -> ReLU -> GRU final state over valid rows -> FC stack -> tanh.
  /// Throws ShapeError for zero-length input.
  AcousticEmbedding predict_tpae(const Var& memory, std::size_t length) const;
  std::vector<AcousticEmbedding> predict_tpae(const TextMemory& memory) const;

  /// Number of convolutions in the bank.
  std::size_t bank_size() const { return bank_.size(); }

 private:
  EncoderConfig cfg_;
  int pad_id_ = 0;
  Var embedding_;
  std::vector<nn::Conv1d> bank_;
  nn::Conv1d proj1_, proj2_;
  nn::Linear pre_highway_;
  bool has_pre_highway_ = false;
  std::vector<nn::Highway> highways_;
  nn::Lstm forward_rnn_, backward_rnn_;
  nn::Conv1d tpae_conv_;
  nn::Gru tpae_rnn_;
  std::vector<nn::Linear> tpae_fc_;
};

/// Appends the embedding to every valid row of `memory` (T_max x M) giving
/// T_max x (M + D); padding rows stay zero. Throws ShapeError when the
/// embedding is not a single row.
Var condition_memory(const Var& memory, std::size_t length, const AcousticEmbedding& e);
TextMemory condition_memory(const TextMemory& memory, const std::vector<AcousticEmbedding>& e);

}  // namespace ktts::model
