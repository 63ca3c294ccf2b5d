#include "ktts/context_encoder.hpp"

#include "ktts/errors.hpp"

namespace ktts::model {

using namespace ktts::nn;

void EncoderConfig::validate() const {
  if (embedding_dim < 1 || bank_max_width < 1 || bank_channels < 1 || projection_channels < 1 || rnn_units < 1 ||
      tpae_conv_width < 1 || tpae_conv_channels < 1 || tpae_rnn_units < 1 || embedding_out_dim < 1) {
    throw ConfigError("encoder: all sizes must be positive");
  }
  if (highway_layers < 0) throw ConfigError("encoder: highway layer count must be non-negative");
  if (tpae_fc_layers < 1) throw ConfigError("encoder: TPAE head needs at least one fully-connected layer");
}

ContextEncoder::ContextEncoder(const EncoderConfig& cfg, std::size_t vocab, int pad_id, ParamStore& ps, Rng& rng)
    : cfg_(cfg), pad_id_(pad_id) {
  cfg_.validate();
  const Eigen::Index E = cfg.embedding_dim;
  Matrix table = Matrix::Zero(static_cast<Eigen::Index>(vocab), E);
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    if (r == pad_id) continue;
    for (Eigen::Index c = 0; c < E; ++c) table(r, c) = 0.3 * rng.normal();
  }
  embedding_ = ps.add("encoder.embedding", table);

  for (int w = 1; w <= cfg.bank_max_width; ++w) {
    bank_.emplace_back(ps, "encoder.bank." + std::to_string(w), E, cfg.bank_channels, w, rng);
  }
  const Eigen::Index stacked = static_cast<Eigen::Index>(cfg.bank_max_width) * cfg.bank_channels;
  proj1_ = Conv1d(ps, "encoder.proj1", stacked, cfg.projection_channels, 3, rng);
  proj2_ = Conv1d(ps, "encoder.proj2", cfg.projection_channels, E, 3, rng);
  for (int i = 0; i < cfg.highway_layers; ++i) {
    highways_.emplace_back(ps, "encoder.highway." + std::to_string(i), E, rng);
  }
  forward_rnn_ = Lstm(ps, "encoder.rnn_fwd", E, cfg.rnn_units, rng);
  backward_rnn_ = Lstm(ps, "encoder.rnn_bwd", E, cfg.rnn_units, rng);

  tpae_conv_ = Conv1d(ps, "encoder.tpae.conv", cfg.memory_dim(), cfg.tpae_conv_channels, cfg.tpae_conv_width, rng);
  tpae_rnn_ = Gru(ps, "encoder.tpae.rnn", cfg.tpae_conv_channels, cfg.tpae_rnn_units, rng);
  Eigen::Index in = cfg.tpae_rnn_units;
  for (int k = 0; k < cfg.tpae_fc_layers; ++k) {
    tpae_fc_.emplace_back(ps, "encoder.tpae.fc." + std::to_string(k), in, cfg.embedding_out_dim, rng);
    in = cfg.embedding_out_dim;
  }
}

Var ContextEncoder::embed_symbols(const std::vector<int>& ids) const { return embedding_lookup(embedding_, ids, pad_id_); }

Var ContextEncoder::cbhl(const Var& embedded, std::size_t length) const {
  if (length == 0) throw ShapeError("cbhl: empty sequence");
  if (static_cast<Eigen::Index>(length) > embedded->rows()) throw ShapeError("cbhl: length exceeds input rows");
  check_finite(embedded, "encoder.input");
  Var x = slice_rows(embedded, 0, static_cast<Eigen::Index>(length));

  std::vector<Var> bank_out;
  bank_out.reserve(bank_.size());
  for (const auto& conv : bank_) bank_out.push_back(relu(conv(x)));
  Var y = max_pool_time2(concat_cols(bank_out));
  check_finite(y, "encoder.bank");

  y = relu(proj1_(y));
  y = proj2_(y);
  y = add(y, x);
  check_finite(y, "encoder.projection");

  for (std::size_t i = 0; i < highways_.size(); ++i) {
    y = highways_[i](y);
    check_finite(y, "encoder.highway." + std::to_string(i));
  }
  Var out = concat_cols({forward_rnn_.run(y, false), backward_rnn_.run(y, true)});
  check_finite(out, "encoder.rnn");
  return out;
}

TextMemory ContextEncoder::cbhl_forward(const std::vector<Var>& embedded, const std::vector<std::size_t>& lengths) const {
  if (embedded.size() != lengths.size()) throw ShapeError("cbhl_forward: batch size mismatch");
  TextMemory mem;
  mem.lengths = lengths;
  for (std::size_t b = 0; b < embedded.size(); ++b) {
    mem.sequences.push_back(pad_rows(cbhl(embedded[b], lengths[b]), embedded[b]->rows()));
  }
  return mem;
}

AcousticEmbedding ContextEncoder::predict_tpae(const Var& memory, std::size_t length) const {
  if (length == 0) throw ShapeError("predict_tpae: zero-length input");
  if (static_cast<Eigen::Index>(length) > memory->rows()) throw ShapeError("predict_tpae: length exceeds memory rows");
  Var x = slice_rows(memory, 0, static_cast<Eigen::Index>(length));
  Var h = tpae_rnn_.final_state(relu(tpae_conv_(x)));
  for (std::size_t k = 0; k + 1 < tpae_fc_.size(); ++k) h = relu(tpae_fc_[k](h));
  Var e = tanh(tpae_fc_.back()(h));
  check_finite(e, "encoder.tpae");
  return {e, EmbeddingRole::TPAE};
}

std::vector<AcousticEmbedding> ContextEncoder::predict_tpae(const TextMemory& memory) const {
  std::vector<AcousticEmbedding> out;
  for (std::size_t b = 0; b < memory.sequences.size(); ++b) out.push_back(predict_tpae(memory.sequences[b], memory.lengths[b]));
  return out;
}

Var condition_memory(const Var& memory, std::size_t length, const AcousticEmbedding& e) {
  if (!e.vector || e.vector->rows() != 1) throw ShapeError("condition_memory: embedding must be a single row");
  if (!e.vector->value.allFinite()) throw NumericError("condition_memory embedding");
  if (static_cast<Eigen::Index>(length) > memory->rows()) throw ShapeError("condition_memory: length exceeds memory rows");
  const auto L = static_cast<Eigen::Index>(length);
  Var valid = concat_cols({slice_rows(memory, 0, L), repeat_rows(e.vector, L)});
  return pad_rows(valid, memory->rows());
}

TextMemory condition_memory(const TextMemory& memory, const std::vector<AcousticEmbedding>& e) {
  if (e.size() != memory.sequences.size()) throw ShapeError("condition_memory: batch size mismatch");
  TextMemory out;
  out.lengths = memory.lengths;
  for (std::size_t b = 0; b < e.size(); ++b) out.sequences.push_back(condition_memory(memory.sequences[b], memory.lengths[b], e[b]));
  return out;
}

}  // namespace ktts::model
