#include "ktts/acoustic_reference.hpp"

#include <cmath>

#include "ktts/errors.hpp"

namespace ktts::model {

using namespace ktts::nn;

void ReferenceEncoderConfig::validate() const {
  if (channels.size() != 6) throw ConfigError("reference encoder: exactly six convolution layers are required");
  for (int c : channels) {
    if (c < 1) throw ConfigError("reference encoder: channel counts must be positive");
  }
  if (rnn_units < 1) throw ConfigError("reference encoder: recurrent units must be positive");
  if (min_frames < 64) throw ConfigError("reference encoder: minimum frames must be at least 64");
}

void StyleTokenConfig::validate() const {
  if (num_tokens < 1) throw ConfigError("style tokens: need at least one token");
  if (heads < 1 || dim < 1 || dim % heads != 0) throw ConfigError("style tokens: dim must be a positive multiple of heads");
}

ReferenceGrid AcousticReference::output_grid(Eigen::Index frames, Eigen::Index bands, const ReferenceEncoderConfig& cfg) {
  ReferenceGrid g{std::max<Eigen::Index>(frames, cfg.min_frames), bands};
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    g.time = Conv2d::out_size(g.time, 3, 2, 1);
    g.bands = Conv2d::out_size(g.bands, 3, 2, 1);
  }
  return g;
}

AcousticReference::AcousticReference(const ReferenceEncoderConfig& ref, const StyleTokenConfig& gst, int n_mels,
                                     ParamStore& ps, Rng& rng)
    : ref_(ref), gst_(gst), n_mels_(n_mels) {
  ref_.validate();
  gst_.validate();
  Eigen::Index in = 1;
  for (std::size_t i = 0; i < ref.channels.size(); ++i) {
    convs_.emplace_back(ps, "reference.conv." + std::to_string(i), in, ref.channels[i], rng);
    in = ref.channels[i];
  }
  const ReferenceGrid grid = output_grid(ref.min_frames, n_mels, ref);
  rnn_ = Gru(ps, "reference.rnn", grid.bands * ref.channels.back(), ref.rnn_units, rng);
  query_ = Linear(ps, "gst.query", ref.rnn_units, gst.dim, rng);
  Matrix tok(gst.num_tokens, gst.dim);
  for (Eigen::Index i = 0; i < tok.size(); ++i) tok(i) = 0.5 * rng.normal();
  tokens_ = ps.add("gst.tokens", tok);
}

Var AcousticReference::reference_encode(const Matrix& mel) const {
  if (mel.cols() != n_mels_) {
    throw ShapeError("reference_encode: expected " + std::to_string(n_mels_) + " bands, got " + std::to_string(mel.cols()));
  }
  if (!mel.allFinite()) throw NumericError("reference encoder input");
  const Eigen::Index frames = std::max<Eigen::Index>(mel.rows(), ref_.min_frames);
  Matrix padded = Matrix::Zero(frames, mel.cols());
  padded.topRows(mel.rows()) = mel;
  // One channel, rows ordered (time, band).
  Matrix image(frames * mel.cols(), 1);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index f = 0; f < mel.cols(); ++f) image(t * mel.cols() + f, 0) = padded(t, f);
  }
  Var x = constant(std::move(image));
  Eigen::Index h = frames, w = mel.cols();
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = relu(convs_[i](x, h, w));
    check_finite(x, "reference.conv." + std::to_string(i));
  }
  // (h*w) x C -> h x (w*C): one row per remaining time step.
  std::vector<Var> steps;
  steps.reserve(static_cast<std::size_t>(h));
  for (Eigen::Index t = 0; t < h; ++t) {
    std::vector<Var> cells;
    for (Eigen::Index f = 0; f < w; ++f) cells.push_back(slice_rows(x, t * w + f, 1));
    steps.push_back(concat_cols(cells));
  }
  Var summary = rnn_.final_state(concat_rows(steps));
  check_finite(summary, "reference.rnn");
  return summary;
}

AcousticEmbedding AcousticReference::style_attention(const Var& summary, Matrix* weights_out) const {
  const Eigen::Index d = gst_.dim / gst_.heads;
  Var q = query_(summary);
  Var keys = tanh(tokens_);
  std::vector<Var> heads;
  if (weights_out) weights_out->resize(gst_.heads, gst_.num_tokens);
  for (int h = 0; h < gst_.heads; ++h) {
    Var qh = slice_cols(q, h * d, d);
    Var kh = slice_cols(keys, h * d, d);
    Var w = softmax_rows(scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(d))));
    if (weights_out) weights_out->row(h) = w->value;
    heads.push_back(matmul(w, kh));
  }
  return {concat_cols(heads), EmbeddingRole::TAE};
}

}  // namespace ktts::model
