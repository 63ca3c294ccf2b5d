#include "ktts/model.hpp"

#include "ktts/errors.hpp"

namespace ktts::model {

using namespace ktts::nn;

void ModelConfig::validate() const {
  encoder.validate();
  reference.validate();
  style.validate();
  decoder.validate();
  if (encoder.embedding_out_dim != style.dim) {
    throw ConfigError("model: TPAE dimension (" + std::to_string(encoder.embedding_out_dim) +
                      ") must equal the style embedding dimension (" + std::to_string(style.dim) + ")");
  }
}

ModelConfig ModelConfig::small() {
  ModelConfig c;
  c.encoder.embedding_dim = 48;
  c.encoder.bank_max_width = 4;
  c.encoder.bank_channels = 24;
  c.encoder.projection_channels = 48;
  c.encoder.highway_layers = 2;
  c.encoder.rnn_units = 32;
  c.encoder.tpae_conv_channels = 32;
  c.encoder.tpae_rnn_units = 32;
  c.encoder.embedding_out_dim = 32;
  c.reference.channels = {8, 8, 16, 16, 32, 32};
  c.reference.rnn_units = 32;
  c.style.dim = 32;
  c.decoder.prenet_sizes = {64, 64};
  c.decoder.attention_rnn_units = 96;
  c.decoder.decoder_rnn_units = 96;
  c.decoder.attention_dim = 32;
  c.decoder.postnet_channels = 48;
  c.decoder.max_decoder_steps = 400;
  return c;
}

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.encoder.embedding_dim = 4;
  c.encoder.bank_max_width = 2;
  c.encoder.bank_channels = 2;
  c.encoder.projection_channels = 3;
  c.encoder.highway_layers = 1;
  c.encoder.rnn_units = 2;
  c.encoder.tpae_conv_width = 3;
  c.encoder.tpae_conv_channels = 2;
  c.encoder.tpae_rnn_units = 2;
  c.encoder.embedding_out_dim = 2;
  c.reference.channels = {1, 1, 1, 1, 1, 1};
  c.reference.rnn_units = 2;
  c.style.num_tokens = 3;
  c.style.heads = 2;
  c.style.dim = 2;
  c.decoder.n_mels = 4;
  c.decoder.prenet_sizes = {3, 3};
  c.decoder.attention_rnn_units = 2;
  c.decoder.decoder_rnn_units = 2;
  c.decoder.attention_dim = 2;
  c.decoder.postnet_layers = 5;
  c.decoder.postnet_channels = 2;
  c.decoder.postnet_kernel = 3;
  c.decoder.max_decoder_steps = 40;
  return c;
}

text::SymbolTable micro_symbol_table() {
  // space, pipe, ㄱ (lead), ㅏ, ㄴ (lead), ㄴ (tail)
  return text::SymbolTable(std::vector<std::string>{" ", "|", "ᄀ", "ᅡ", "ᄂ", "ᆫ"});
}

Model::Model(const ModelConfig& cfg, text::SymbolTable symbols, std::uint64_t seed) : cfg_(cfg), symbols_(std::move(symbols)) {
  cfg_.validate();
  Rng rng(seed);
  encoder_ = ContextEncoder(cfg_.encoder, symbols_.size(), symbols_.pad_id(), params_, rng);
  reference_ = AcousticReference(cfg_.reference, cfg_.style, cfg_.decoder.n_mels, params_, rng);
  decoder_ = AttentionDecoder(cfg_.decoder, cfg_.encoder.memory_dim() + cfg_.encoder.embedding_out_dim, params_, rng);
}

std::vector<Var> Model::acoustic_reference_parameters() const {
  std::vector<Var> out = params_.with_prefix("reference.");
  for (const auto& p : params_.with_prefix("gst.")) out.push_back(p);
  return out;
}

TrainForward Model::forward_train(const std::vector<Example>& batch, Rng& rng, AttentionMode mode) const {
  TrainForward out;
  for (const auto& ex : batch) {
    if (ex.ids.empty()) throw ShapeError("forward_train: empty id sequence");
    const std::size_t len = ex.ids.size();
    Var memory = encoder_.cbhl(encoder_.embed_symbols(ex.ids), len);
    AcousticEmbedding tpae = encoder_.predict_tpae(memory, len);
    AcousticEmbedding tae = reference_.encode(ex.mel);
    Var conditioned = condition_memory(memory, len, tae);
    out.decodes.push_back(decoder_.decode_teacher_forced(conditioned, len, ex.mel, rng, mode));
    out.tae.push_back(tae);
    out.tpae.push_back(tpae);
  }
  return out;
}

Synthesis Model::synthesize(const std::vector<int>& ids, Rng& rng) const {
  if (ids.empty()) throw ShapeError("synthesize: empty id sequence");
  NoGradGuard no_grad;
  const std::size_t len = ids.size();
  Var memory = encoder_.cbhl(encoder_.embed_symbols(ids), len);
  AcousticEmbedding tpae = encoder_.predict_tpae(memory, len);
  Var conditioned = condition_memory(memory, len, tpae);
  return {decoder_.decode_free_running(conditioned, len, rng), tpae};
}

}  // namespace ktts::model
