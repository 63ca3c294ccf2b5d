#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ktts/config.hpp"
#include "ktts/model.hpp"
#include "ktts/training.hpp"

namespace ktts::training {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Complete training state. The binary file is "KTTSCKPT", a u32 version,
/// length-prefixed sections, and a trailing FNV-1a checksum of every
/// preceding byte.
struct Checkpoint {
  long iteration = 0;
  FullConfig config;
  text::SymbolTable symbols;
  std::string rng_state;
  std::string order_state;
  std::map<std::string, Matrix> params;
  long adam_steps = 0;
  std::map<std::string, Adam::Moments> adam_moments;
};

/// Snapshot of a model, optionally with the trainer's optimizer and RNG state.
Checkpoint capture(const model::Model& model, const FullConfig& config, const Trainer* trainer = nullptr);

/// Writes to a temporary sibling file, then renames it into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Parses and verifies the whole file before returning. Throws
/// CheckpointError on a bad magic, unsupported version, checksum failure or
/// truncation.
Checkpoint load_checkpoint(const std::string& path);

/// Copies parameters into `model`. Throws CheckpointError when the symbol
/// table differs or a parameter is missing, extra, or the wrong shape; the
/// model is left untouched in that case.
void restore_model(const Checkpoint& ckpt, model::Model& model);
void restore_trainer(const Checkpoint& ckpt, Trainer& trainer);

/// Builds a model from the checkpoint's config and symbol table.
model::Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace ktts::training
