#pragma once

#include <cstdint>
#include <vector>

#include "ktts/acoustic_reference.hpp"
#include "ktts/attention_decoder.hpp"
#include "ktts/context_encoder.hpp"
#include "ktts/text_frontend.hpp"

namespace ktts::model {

struct ModelConfig {
  EncoderConfig encoder;
  ReferenceEncoderConfig reference;
  StyleTokenConfig style;
  DecoderConfig decoder;

  /// Throws ConfigError when sub-configs are invalid or the TPAE and TAE
  /// dimensions disagree.
  void validate() const;

  /// Reduced sizes that train in minutes on one CPU core.
  static ModelConfig small();
  /// Under 1k parameters with a 4-band output; for gradient checks. Pair
  /// with micro_symbol_table().
  static ModelConfig micro();
};

/// Eight-symbol table (pad, eos, space, pipe and four jamo) for micro models.
text::SymbolTable micro_symbol_table();

/// Encoded text plus its ground-truth mel (frames x decoder bands).
struct Example {
  std::vector<int> ids;
  Matrix mel;
};

struct TrainForward {
  std::vector<DecodeOutput> decodes;
  std::vector<AcousticEmbedding> tae;
  std::vector<AcousticEmbedding> tpae;
};

struct Synthesis {
  DecodeOutput decode;
  AcousticEmbedding tpae;
};

/// The complete acoustic model: context encoder with TPAE head, reference
/// encoder with style tokens, and the attention decoder.
class Model {
 public:
  Model(const ModelConfig& cfg, text::SymbolTable symbols, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  const text::SymbolTable& symbols() const { return symbols_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const ContextEncoder& encoder() const { return encoder_; }
  const AcousticReference& reference() const { return reference_; }
  const AttentionDecoder& decoder() const { return decoder_; }

  /// Parameters of the reference encoder and style-token layer.
  std::vector<Var> acoustic_reference_parameters() const;

  /// Training path: text memory conditioned on the TAE of the ground-truth
  /// mel, teacher-forced decoding, TPAE predicted alongside.
  TrainForward forward_train(const std::vector<Example>& batch, nn::Rng& rng,
                             AttentionMode mode = AttentionMode::SoftTrain) const;

  /// Inference path: memory conditioned on the TPAE, free-running decode.
  Synthesis synthesize(const std::vector<int>& ids, nn::Rng& rng) const;

 private:
  ModelConfig cfg_;
  text::SymbolTable symbols_;
  nn::ParamStore params_;
  ContextEncoder encoder_;
  AcousticReference reference_;
  AttentionDecoder decoder_;
};

}  // namespace ktts::model
