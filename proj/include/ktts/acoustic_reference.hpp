#pragma once

#include <vector>

#include "ktts/context_encoder.hpp"

namespace ktts::model {

struct ReferenceEncoderConfig {
  std::vector<int> channels = {32, 32, 64, 64, 128, 128};
  int rnn_units = 128;
  int min_frames = 64;  // shorter inputs are zero-padded up to this

  void validate() const;
};

struct StyleTokenConfig {
  int num_tokens = 10;
  int heads = 4;
  int dim = 256;  // D; value slice per head is dim / heads

  void validate() const;
};

/// Output grid of the six stride-2 convolutions for a frames x bands input
/// (after short-input padding).
struct ReferenceGrid {
  Eigen::Index time = 0;
  Eigen::Index bands = 0;
};

/// Reference encoder plus style-token attention: reference mel -> TAE.
/// Parameters live under the "reference." and "gst." prefixes.
class AcousticReference {
 public:
  AcousticReference() = default;
  AcousticReference(const ReferenceEncoderConfig& ref, const StyleTokenConfig& gst, int n_mels, nn::ParamStore& ps,
                    nn::Rng& rng);

  static ReferenceGrid output_grid(Eigen::Index frames, Eigen::Index bands, const ReferenceEncoderConfig& cfg);

  /// Final recurrent state (1 x rnn_units). Throws NumericError for
  /// non-finite input and ShapeError for a band-count mismatch.
  Var reference_encode(const Matrix& mel) const;

  /// Per-head softmax over tanh-bounded tokens; the concatenated head
  /// outputs form the TAE. `weights_out`, when given, receives heads x tokens.
  AcousticEmbedding style_attention(const Var& summary, Matrix* weights_out = nullptr) const;

  AcousticEmbedding encode(const Matrix& mel) const { return style_attention(reference_encode(mel)); }

  const ReferenceEncoderConfig& reference_config() const { return ref_; }
  const StyleTokenConfig& style_config() const { return gst_; }
  const Var& tokens() const { return tokens_; }

 private:
  ReferenceEncoderConfig ref_;
  StyleTokenConfig gst_;
  int n_mels_ = 80;
  std::vector<nn::Conv2d> convs_;
  nn::Gru rnn_;
  nn::Linear query_;
  Var tokens_;  // num_tokens x D
};

}  // namespace ktts::model
